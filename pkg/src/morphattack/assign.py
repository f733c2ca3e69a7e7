"""Per-image flow assignment: project, reconstruct, modulate.

An attack-time image is decomposed on the image portion of the joint bases
(least squares - the image-portion columns are generally non-orthogonal
even though the joint columns are), and the shared coefficients rebuild
its flow field from the flow portion.  Intensity is then set by scaling
the whole field to an l2 / l-inf target or by a plain multiplier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FlowField, Image, flow_norm, flow_scale
from .dictionary import JointDictionary
from .errors import DimensionMismatch, SingularProjection, ZeroFlow

_MODES = ("l2_target", "linf_target", "delta_multiplier")


@dataclass(frozen=True)
class IntensitySpec:
    mode: str
    value: float

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if not (np.isfinite(self.value) and self.value > 0):
            raise ValueError("intensity value must be positive and finite")


def project(image: Image, d: JointDictionary) -> np.ndarray:
    """Least-squares coefficients of the ROI-weighted, mean-centered image."""
    if (image.width, image.height) != (d.width, d.height):
        raise DimensionMismatch("image does not match dictionary raster")
    residual = d.roi.weight_vector(image.vectorize()) - d.mu_x
    gram = d.w_x.T @ d.w_x
    if np.linalg.cond(gram) > 1e12:
        raise SingularProjection("image-portion Gram matrix is singular")
    return np.linalg.solve(gram, d.w_x.T @ residual)


def reconstruct_flow(alpha: np.ndarray, d: JointDictionary, *,
                     add_mean: bool = True) -> FlowField:
    """Rebuild the flow for shared coefficients alpha.

    add_mean=True (default) adds the training flow means back after the
    basis expansion; without it the output is biased toward zero
    deformation.  Zero outside the ROI either way.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (d.k,):
        raise DimensionMismatch(f"alpha length {alpha.shape} != k={d.k}")
    if not np.all(np.isfinite(alpha)):
        raise ValueError("alpha must be finite")
    fh = d.w_h @ alpha
    fv = d.w_v @ alpha
    if add_mean:
        fh = fh + d.mu_h
        fv = fv + d.mu_v
    return FlowField.from_vectors(fh, fv, d.width, d.height)


def modulate(flow: FlowField, spec: IntensitySpec) -> FlowField:
    if spec.mode == "delta_multiplier":
        return flow_scale(flow, spec.value)
    norm = flow_norm(flow, "l2" if spec.mode == "l2_target" else "linf")
    if norm < 1e-12:
        raise ZeroFlow(f"cannot hit {spec.mode}={spec.value} on a zero field")
    return flow_scale(flow, spec.value / norm)


def assign_proprietary_flow(image: Image, d: JointDictionary,
                            spec: IntensitySpec, *,
                            add_mean: bool = True) -> FlowField:
    """project -> reconstruct -> modulate, the attack-stage composition."""
    return modulate(reconstruct_flow(project(image, d), d, add_mean=add_mean),
                    spec)


def _steps(lo: float, hi: float, step: float) -> list[float]:
    count = int(round((hi - lo) / step))
    return [round(lo + i * step, 10) for i in range(count + 1)]


# Intensity sweep groups: three ranges per metric, chosen to cover the
# regimes where raw query-stage field norms concentrate.
L2_GROUPS = (_steps(2, 10, 2), _steps(100, 200, 10), _steps(200, 600, 100))
LINF_GROUPS = (_steps(0.1, 0.5, 0.1), _steps(1.0, 2.0, 0.1),
               _steps(2.0, 6.0, 1.0))
DELTA_VALUES = _steps(0.2, 2.0, 0.2)

_METRIC_MODE = {"l2": "l2_target", "linf": "linf_target",
                "delta": "delta_multiplier"}


def sweep_values(metric: str, group: str = "all") -> list[float]:
    """Preset intensity grids; group is "1", "2", "3" or "all"."""
    if metric == "delta":
        return list(DELTA_VALUES)
    groups = {"l2": L2_GROUPS, "linf": LINF_GROUPS}.get(metric)
    if groups is None:
        raise ValueError(f"unknown sweep metric {metric!r}")
    if group == "all":
        return sorted({v for g in groups for v in g})
    if group in ("1", "2", "3"):
        return list(groups[int(group) - 1])
    raise ValueError(f"unknown sweep group {group!r}")


def sweep_specs(metric: str, values: list[float]) -> list[IntensitySpec]:
    mode = _METRIC_MODE.get(metric)
    if mode is None:
        raise ValueError(f"unknown sweep metric {metric!r}")
    return [IntensitySpec(mode=mode, value=float(v)) for v in values]
