"""Seeded synthetic identities and smooth deformation sequences.

Stands in for a face dataset plus controllable expression edits: each
"identity" is a smooth random texture, and its "expression" sequence is a
series of growing local warps around a landmark (the mouth locus).  Every
byte is a pure function of the seeds, via the counter RNG in
:mod:`morphattack.rng`, so fixtures are portable across platforms.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fileio
from .core import FlowField, Image, morph
from .rng import CounterRng, fold_string


@dataclass(frozen=True)
class IdentitySpec:
    identity_seed: int
    width: int
    height: int
    texture_smoothness: float
    landmark: tuple[int, int]  # (row, col) deformation center

    def __post_init__(self):
        if self.texture_smoothness <= 0:
            raise ValueError("texture_smoothness must be positive")
        r, c = self.landmark
        if not (0 <= r < self.height and 0 <= c < self.width):
            raise ValueError("landmark outside the raster")


@dataclass(frozen=True)
class DeformationSpec:
    amplitude_max: float = 2.0
    sigma: float = 6.0
    frames: int = 10
    seed: int = 0
    center: tuple[int, int] = (0, 0)  # copied from IdentitySpec.landmark

    def __post_init__(self):
        if self.amplitude_max <= 0:
            raise ValueError("amplitude_max must be positive")
        if self.frames < 2:
            raise ValueError("frames must be >= 2")


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, int(math.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _blur(arr: np.ndarray, sigma: float) -> np.ndarray:
    # Separable convolution as an explicit tap loop: fixed summation order
    # keeps results identical across platforms (no BLAS involvement).
    kernel = _gaussian_kernel(sigma)
    radius = len(kernel) // 2
    for axis in (0, 1):
        padded = np.pad(arr, [(radius, radius) if a == axis else (0, 0)
                              for a in (0, 1)], mode="edge")
        out = np.zeros_like(arr)
        for i, w in enumerate(kernel):
            if axis == 0:
                out += w * padded[i:i + arr.shape[0], :]
            else:
                out += w * padded[:, i:i + arr.shape[1]]
        arr = out
    return arr


def generate_identity(spec: IdentitySpec) -> Image:
    """Smooth seeded texture, min-max normalized into [0.1, 0.9]."""
    rng = CounterRng.from_seeds(spec.identity_seed).split_label("texture")
    noise = rng.uniform(spec.width * spec.height).reshape(spec.height, spec.width)
    smooth = _blur(noise, spec.texture_smoothness)
    lo, hi = smooth.min(), smooth.max()
    span = hi - lo if hi > lo else 1.0
    return Image(0.1 + 0.8 * (smooth - lo) / span)


def _direction_field(spec: DeformationSpec, width: int, height: int
                     ) -> tuple[np.ndarray, np.ndarray]:
    # Outward/upward curl pattern: per-seed mix of radial, tangential and
    # upward components, normalized to unit length per pixel.
    rng = CounterRng.from_seeds(spec.seed).split_label("direction")
    curl = rng.uniform(1, 0.2, 0.8)[0]
    upward = rng.uniform(1, 0.3, 0.9)[0]

    r0, c0 = spec.center
    rows, cols = np.meshgrid(np.arange(height, dtype=np.float64),
                             np.arange(width, dtype=np.float64), indexing="ij")
    dr = rows - r0
    dc = cols - c0
    dist = np.sqrt(dr * dr + dc * dc)
    dn = np.maximum(dist, 1e-9)
    out_h, out_v = dc / dn, dr / dn
    tan_h, tan_v = -dr / dn, dc / dn

    mix_h = (1.0 - curl) * out_h + curl * tan_h
    mix_v = (1.0 - curl) * out_v + curl * tan_v - upward
    mag = np.maximum(np.sqrt(mix_h * mix_h + mix_v * mix_v), 1e-9)
    return mix_h / mag, mix_v / mag


def _envelope(spec: DeformationSpec, width: int, height: int) -> np.ndarray:
    # Gaussian bump truncated to zero beyond 3*sigma, rescaled to peak 1,
    # so the field is exactly local (and far below 1% of peak past 3*sigma).
    r0, c0 = spec.center
    rows, cols = np.meshgrid(np.arange(height, dtype=np.float64),
                             np.arange(width, dtype=np.float64), indexing="ij")
    d2 = (rows - r0) ** 2 + (cols - c0) ** 2
    g = np.exp(-d2 / (2.0 * spec.sigma * spec.sigma))
    tail = math.exp(-4.5)
    return np.clip((g - tail) / (1.0 - tail), 0.0, None)


def deformation_field(spec: DeformationSpec, width: int, height: int,
                      amplitude: float) -> FlowField:
    """Analytic bump field with the given peak displacement in pixels."""
    dir_h, dir_v = _direction_field(spec, width, height)
    env = _envelope(spec, width, height)
    return FlowField(amplitude * env * dir_h, amplitude * env * dir_v)


def generate_sequence(base: Image, spec: DeformationSpec
                      ) -> list[tuple[Image, FlowField]]:
    """Deformation sequence with exact cumulative ground-truth fields.

    Frame t (t = 0..frames-1) is the base warped by a bump field of
    amplitude (t/frames) * amplitude_max; frame 0 is the base itself.
    """
    out = []
    for t in range(spec.frames):
        amp = spec.amplitude_max * t / spec.frames
        flow = deformation_field(spec, base.width, base.height, amp)
        out.append((morph(base, flow), flow))
    return out


@dataclass(frozen=True)
class SynthIdentity:
    """One generated identity with its deformation sequence."""

    label: int
    ident: IdentitySpec
    deform: DeformationSpec
    base: Image
    frames: list[Image]
    flows: list[FlowField]


def build_identity(global_seed: int, index: int, *, width: int, height: int,
                   frames: int, amplitude: float, sigma: float,
                   smoothness: float, id_offset: int = 0) -> SynthIdentity:
    identity_seed = fold_string(global_seed, f"identity/{id_offset + index}")
    rng = CounterRng.from_seeds(identity_seed).split_label("landmark")
    # Mouth locus: lower-center region with a little per-identity jitter.
    row = int(round(0.62 * (height - 1) + rng.uniform(1, -0.08, 0.08)[0] * height))
    col = int(round(0.50 * (width - 1) + rng.uniform(1, -0.10, 0.10)[0] * width))
    row = min(max(row, 0), height - 1)
    col = min(max(col, 0), width - 1)

    ident = IdentitySpec(identity_seed=identity_seed, width=width, height=height,
                         texture_smoothness=smoothness, landmark=(row, col))
    deform = DeformationSpec(amplitude_max=amplitude, sigma=sigma, frames=frames,
                             seed=identity_seed, center=ident.landmark)
    base = generate_identity(ident)
    seq = generate_sequence(base, deform)
    return SynthIdentity(label=id_offset + index, ident=ident, deform=deform,
                         base=base, frames=[f for f, _ in seq],
                         flows=[w for _, w in seq])


def build_world(global_seed: int, identities: int, *, width: int, height: int,
                frames: int, amplitude: float, sigma: float, smoothness: float,
                id_offset: int = 0) -> list[SynthIdentity]:
    return [build_identity(global_seed, i, width=width, height=height,
                           frames=frames, amplitude=amplitude, sigma=sigma,
                           smoothness=smoothness, id_offset=id_offset)
            for i in range(identities)]


def write_dataset(world: list[SynthIdentity], out_dir) -> None:
    """Emit id_<k>/frame_<t>.pgm + .amfl plus manifest.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for ident in world:
        sub = out / f"id_{ident.label}"
        sub.mkdir(exist_ok=True)
        for t, (img, flw) in enumerate(zip(ident.frames, ident.flows)):
            img_rel = f"id_{ident.label}/frame_{t}.pgm"
            flw_rel = f"id_{ident.label}/frame_{t}.amfl"
            fileio.write_pgm(img, out / img_rel)
            fileio.write_flow(flw, out / flw_rel)
            rows.append((ident.label, t, img_rel, flw_rel))
    with open(out / "manifest.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["identity", "frame", "image", "flow"])
        wr.writerows(rows)


def read_manifest(data_dir) -> list[tuple[int, int, str, str]]:
    path = Path(data_dir) / "manifest.csv"
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append((int(rec["identity"]), int(rec["frame"]),
                         rec["image"], rec["flow"]))
    return rows
