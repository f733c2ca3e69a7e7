"""Dense flow estimation between two consecutive frames (Horn-Schunck).

Estimates the field f such that ``morph(frame_a, f) ~= frame_b`` under the
package-wide backward-warp convention (output(p) = input(p + f(p))).  With
that convention the brightness-constancy constraint reads

    Ix * f_h + Iy * f_v + (frame_a - frame_b) = 0

so the classic Jacobi iterations apply with the temporal derivative taken
as a - b.  Spatial derivatives are central differences of the mean frame;
a single pyramid level suffices for the small deformations produced by
:mod:`morphattack.synth`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FlowField, Image
from .errors import DimensionMismatch

# Horn-Schunck neighborhood average: 1/6 edges, 1/12 diagonals.
_AVG_TAPS = [(-1, 0, 1 / 6), (1, 0, 1 / 6), (0, -1, 1 / 6), (0, 1, 1 / 6),
             (-1, -1, 1 / 12), (-1, 1, 1 / 12), (1, -1, 1 / 12), (1, 1, 1 / 12)]


@dataclass(frozen=True)
class FlowEstimatorConfig:
    smoothness_weight: float = 0.1
    iterations: int = 200
    convergence_epsilon: float = 1e-4

    def __post_init__(self):
        if self.smoothness_weight <= 0:
            raise ValueError("smoothness_weight must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.convergence_epsilon <= 0:
            raise ValueError("convergence_epsilon must be positive")


def _neighbor_avg(arr: np.ndarray) -> np.ndarray:
    padded = np.pad(arr, 1, mode="edge")
    out = np.zeros_like(arr)
    h, w = arr.shape
    for dr, dc, wgt in _AVG_TAPS:
        out += wgt * padded[1 + dr:1 + dr + h, 1 + dc:1 + dc + w]
    return out


def estimate_flow(frame_a: Image, frame_b: Image,
                  cfg: FlowEstimatorConfig = FlowEstimatorConfig()) -> FlowField:
    if (frame_a.width, frame_a.height) != (frame_b.width, frame_b.height):
        raise DimensionMismatch("frames must share dimensions")

    mean = 0.5 * (frame_a.pixels + frame_b.pixels)
    iy, ix = np.gradient(mean)
    it = frame_a.pixels - frame_b.pixels

    lam2 = cfg.smoothness_weight * cfg.smoothness_weight
    denom = lam2 + ix * ix + iy * iy
    fh = np.zeros_like(mean)
    fv = np.zeros_like(mean)
    n2 = 2.0 * mean.size

    for _ in range(cfg.iterations):
        ah = _neighbor_avg(fh)
        av = _neighbor_avg(fv)
        correction = (ix * ah + iy * av + it) / denom
        new_h = ah - ix * correction
        new_v = av - iy * correction
        delta = (np.sum(np.abs(new_h - fh)) + np.sum(np.abs(new_v - fv))) / n2
        fh, fv = new_h, new_v
        if delta < cfg.convergence_epsilon:
            break
    return FlowField(fh, fv)


def compose_flows(first: FlowField, second: FlowField) -> FlowField:
    """Accumulate consecutive frame-to-frame fields by summation.

    Exact for translation-like motion and accurate to O(|f|^2) locally,
    which is ample for the sub-pixel per-step deformations handled here.
    """
    return FlowField(first.h + second.h, first.v + second.v)
