"""Joint image/flow basis learning and dictionary persistence.

Training pairs (image, flow) are stacked as mean-subtracted, ROI-weighted
columns [x; f_h; f_v] of a 3n x M matrix.  The top principal directions of
that stacked matrix are the shared bases: because image and flow live in
the same column, one coefficient vector reconstructs both, which is what
lets an unseen image be mapped to a flow field later.

The eigenproblem is solved through the M x M Gram matrix (eigendecompose
X^T X, map eigenvectors u to Xu/||Xu||) - identical to the 3n x 3n
covariance route for the top M-1 components but feasible for real image
sizes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import FlowField, Image, RoiMask
from .errors import (CorruptDictionary, DimensionMismatch, EmptyTrainingSet,
                     FormatError)

DICT_MAGIC = b"AMDC"
DICT_VERSION = 1

# Relative cutoff below which an eigenvalue counts as numerically zero.
_EIG_ZERO_REL = 1e-10


@dataclass(frozen=True)
class TrainingPair:
    image: Image
    flow: FlowField

    def __post_init__(self):
        if (self.image.width, self.image.height) != (self.flow.width,
                                                     self.flow.height):
            raise DimensionMismatch("pair image and flow dimensions differ")


def assemble_matrix(pairs: list[TrainingPair], roi: RoiMask
                    ) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Stack ROI-weighted, mean-subtracted pairs into a 3n x M matrix.

    Means are computed over the M pairs after ROI weighting, so they are
    zero outside the ROI and re-weighting the deviations is a no-op there.
    """
    m = len(pairs)
    if m < 2:
        raise EmptyTrainingSet(f"need >= 2 training pairs, got {m}")
    width, height = pairs[0].image.width, pairs[0].image.height
    if (roi.width, roi.height) != (width, height):
        raise DimensionMismatch("ROI frame does not match pairs")
    n = width * height

    xs = np.empty((n, m))
    hs = np.empty((n, m))
    vs = np.empty((n, m))
    for i, pair in enumerate(pairs):
        if (pair.image.width, pair.image.height) != (width, height):
            raise DimensionMismatch("training pairs disagree in dimensions")
        xs[:, i] = roi.weight_vector(pair.image.vectorize())
        hs[:, i] = roi.weight_vector(pair.flow.h.reshape(-1))
        vs[:, i] = roi.weight_vector(pair.flow.v.reshape(-1))

    mu_x = xs.mean(axis=1)
    mu_h = hs.mean(axis=1)
    mu_v = vs.mean(axis=1)
    matrix = np.concatenate([xs - mu_x[:, None],
                             hs - mu_h[:, None],
                             vs - mu_v[:, None]], axis=0)
    return matrix, (mu_x, mu_h, mu_v)


@dataclass(frozen=True, eq=False)
class BasisSet:
    """Top-k unit principal directions of a stacked matrix."""

    w: np.ndarray            # 3n x k, orthonormal joint columns
    eigenvalues: np.ndarray  # (k,), non-increasing
    requested_k: int
    rank_deficient: bool     # true when fewer than requested_k survived


def _canonicalize_sign(w: np.ndarray) -> np.ndarray:
    # Largest-magnitude component positive: removes eigenvector sign
    # ambiguity so runs are reproducible across platforms.
    idx = int(np.argmax(np.abs(w)))
    return -w if w[idx] < 0 else w


def learn_bases(matrix: np.ndarray, k: int) -> BasisSet:
    """Gram-trick principal directions of a mean-subtracted matrix."""
    m = matrix.shape[1]
    if not (1 <= k <= m - 1):
        raise ValueError(f"k must satisfy 1 <= k <= M-1 = {m - 1}, got {k}")
    gram = matrix.T @ matrix
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals, kind="stable")[::-1]
    evals = evals[order]
    evecs = evecs[:, order]

    cutoff = _EIG_ZERO_REL * max(float(evals[0]), 0.0)
    usable = int(np.sum(evals > cutoff))
    achieved = min(k, usable)

    w = np.empty((matrix.shape[0], achieved))
    for j in range(achieved):
        col = matrix @ evecs[:, j]
        w[:, j] = _canonicalize_sign(col / np.linalg.norm(col))
    return BasisSet(w=w, eigenvalues=evals[:achieved].copy(),
                    requested_k=k, rank_deficient=achieved < k)


def pick_k(eigenvalues: np.ndarray, m: int, *, energy: float = 0.95,
           cap: int = 64) -> int:
    """Smallest k capturing `energy` of the spectrum, capped at min(cap, M-1)."""
    ev = np.clip(np.asarray(eigenvalues, dtype=np.float64), 0.0, None)
    total = ev.sum()
    if total <= 0:
        return 1
    frac = np.cumsum(ev) / total
    k = int(np.searchsorted(frac, energy) + 1)
    return max(1, min(k, cap, m - 1, len(ev)))


@dataclass(frozen=True, eq=False)
class JointDictionary:
    """Learned bases split into image/flow portions, plus the means and ROI."""

    width: int
    height: int
    roi: RoiMask
    mu_x: np.ndarray
    mu_h: np.ndarray
    mu_v: np.ndarray
    w_x: np.ndarray          # n x k
    w_h: np.ndarray
    w_v: np.ndarray
    eigenvalues: np.ndarray  # (k,)
    rank_deficient: bool = False

    @property
    def n(self) -> int:
        return self.width * self.height

    @property
    def k(self) -> int:
        return self.w_x.shape[1]

    def joint_bases(self) -> np.ndarray:
        return np.concatenate([self.w_x, self.w_h, self.w_v], axis=0)

    def flow_bases(self) -> np.ndarray:
        return np.concatenate([self.w_h, self.w_v], axis=0)

    def validate(self) -> None:
        n, k = self.n, self.k
        for name, arr in (("mu_x", self.mu_x), ("mu_h", self.mu_h),
                          ("mu_v", self.mu_v)):
            if arr.shape != (n,) or not np.all(np.isfinite(arr)):
                raise CorruptDictionary(f"bad {name} vector")
        joint = self.joint_bases()
        if joint.shape != (3 * n, k) or not np.all(np.isfinite(joint)):
            raise CorruptDictionary("bad basis block shape")
        norms = np.linalg.norm(joint, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise CorruptDictionary("joint basis columns are not unit-norm")
        cross = joint.T @ joint - np.eye(k)
        if np.max(np.abs(cross)) > 1e-8:
            raise CorruptDictionary("joint basis columns are not orthogonal")
        if self.eigenvalues.shape != (k,):
            raise CorruptDictionary("eigenvalue count != k")


def from_basis_set(basis: BasisSet, means, roi: RoiMask,
                   width: int, height: int) -> JointDictionary:
    n = width * height
    mu_x, mu_h, mu_v = means
    w = basis.w
    return JointDictionary(width=width, height=height, roi=roi,
                           mu_x=mu_x, mu_h=mu_h, mu_v=mu_v,
                           w_x=w[:n], w_h=w[n:2 * n], w_v=w[2 * n:],
                           eigenvalues=basis.eigenvalues,
                           rank_deficient=basis.rank_deficient)


def learn_dictionary(pairs: list[TrainingPair], roi: RoiMask, *,
                     k: int | None = None, energy: float = 0.95,
                     cap: int = 64) -> JointDictionary:
    """Assemble the training matrix and learn the joint bases.

    k=None selects the smallest count capturing `energy` of the eigenvalue
    mass, capped at min(cap, M-1).
    """
    matrix, means = assemble_matrix(pairs, roi)
    m = matrix.shape[1]
    if k is None:
        probe = learn_bases(matrix, m - 1)
        k = pick_k(probe.eigenvalues, m, energy=energy, cap=cap)
    basis = learn_bases(matrix, k)
    width, height = pairs[0].image.width, pairs[0].image.height
    return from_basis_set(basis, means, roi, width, height)


def save_dictionary(d: JointDictionary, path) -> None:
    head = DICT_MAGIC + struct.pack(
        "<IIIII", DICT_VERSION, d.width, d.height, d.n, d.k)
    rect = struct.pack("<IIII", d.roi.top, d.roi.left, d.roi.rows, d.roi.cols)
    blobs = [head, rect]
    for vec in (d.mu_x, d.mu_h, d.mu_v):
        blobs.append(np.ascontiguousarray(vec, dtype="<f8").tobytes())
    for mat in (d.w_x, d.w_h, d.w_v):
        blobs.append(np.asfortranarray(mat.astype("<f8")).tobytes(order="F"))
    blobs.append(np.ascontiguousarray(d.eigenvalues, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(blobs))


def load_dictionary(path) -> JointDictionary:
    buf = Path(path).read_bytes()
    if buf[:4] != DICT_MAGIC:
        raise FormatError(f"bad dictionary magic {buf[:4]!r}")
    if len(buf) < 40:
        raise FormatError("truncated dictionary header")
    version, width, height, n, k = struct.unpack("<IIIII", buf[4:24])
    if version != DICT_VERSION:
        raise FormatError(f"unsupported dictionary version {version}")
    if n != width * height:
        raise FormatError("dictionary n != width*height")
    top, left, rows, cols = struct.unpack("<IIII", buf[24:40])

    need = 40 + 8 * (3 * n + 3 * n * k + k)
    if len(buf) != need:
        raise FormatError(f"dictionary is {len(buf)} bytes, expected {need}")
    off = 40

    def take(count: int) -> np.ndarray:
        nonlocal off
        arr = np.frombuffer(buf, dtype="<f8", count=count, offset=off).copy()
        off += 8 * count
        return arr

    mu_x, mu_h, mu_v = take(n), take(n), take(n)
    w_x = take(n * k).reshape((n, k), order="F")
    w_h = take(n * k).reshape((n, k), order="F")
    w_v = take(n * k).reshape((n, k), order="F")
    eigenvalues = take(k)

    try:
        roi = RoiMask(width=width, height=height, top=top, left=left,
                      rows=rows, cols=cols)
    except DimensionMismatch as exc:
        raise CorruptDictionary(str(exc)) from exc
    d = JointDictionary(width=width, height=height, roi=roi, mu_x=mu_x,
                        mu_h=mu_h, mu_v=mu_v, w_x=w_x, w_h=w_h, w_v=w_v,
                        eigenvalues=eigenvalues)
    d.validate()
    return d
