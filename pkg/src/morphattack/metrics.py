"""Similarity and verification metrics: SSIM, NCS, ROC/EER/AUC/VR, binning.

All scores are kept in [0, 1] internally; report writers offer a percent
flag.  SSIM uses 8x8 uniform sliding windows by default (Gaussian windows
are available as an option); NCS is plain cosine similarity over pixel
vectors, which is the natural reading for nonnegative, highly correlated
image pairs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import Image
from .errors import (BadBins, DimensionMismatch, EmptyRecordSet, EmptyScores,
                     ImageTooSmall, ZeroImage)

SSIM_BIN_EDGES = [0.75, 0.80, 0.85, 0.90, 0.95, 1.00]
NCS_BIN_EDGES = [0.990, 0.992, 0.994, 0.996, 0.998, 1.000]
# Region of operation: the similarity regime where the imperceptibility
# assumption holds.
ROO_SSIM_MIN = 0.90
ROO_NCS_MIN = 0.998


def _window_means(arr: np.ndarray, size: int) -> np.ndarray:
    # Sums over all size x size windows via a padded 2-D cumulative sum.
    c = np.zeros((arr.shape[0] + 1, arr.shape[1] + 1))
    c[1:, 1:] = np.cumsum(np.cumsum(arr, axis=0), axis=1)
    sums = (c[size:, size:] - c[:-size, size:]
            - c[size:, :-size] + c[:-size, :-size])
    return sums / (size * size)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    w = np.outer(k, k)
    return w / w.sum()


def _weighted_means(arr: np.ndarray, window: np.ndarray) -> np.ndarray:
    size = window.shape[0]
    h = arr.shape[0] - size + 1
    w = arr.shape[1] - size + 1
    out = np.zeros((h, w))
    for dr in range(size):
        for dc in range(size):
            out += window[dr, dc] * arr[dr:dr + h, dc:dc + w]
    return out


def ssim(a: Image, b: Image, *, window: int = 8,
         gaussian: bool = False, gaussian_sigma: float = 1.5) -> float:
    """Mean local structural similarity; 1.0 exactly for identical images."""
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatch("images must share dimensions")
    if a.height < window or a.width < window:
        raise ImageTooSmall(
            f"{a.height}x{a.width} image under {window}x{window} window")
    c1 = (0.01 * 1.0) ** 2
    c2 = (0.03 * 1.0) ** 2
    pa, pb = a.pixels, b.pixels
    if gaussian:
        win = _gaussian_window(window, gaussian_sigma)
        mean = lambda arr: _weighted_means(arr, win)  # noqa: E731
    else:
        mean = lambda arr: _window_means(arr, window)  # noqa: E731
    mu_a = mean(pa)
    mu_b = mean(pb)
    var_a = mean(pa * pa) - mu_a * mu_a
    var_b = mean(pb * pb) - mu_b * mu_b
    cov = mean(pa * pb) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ncs(a: Image, b: Image) -> float:
    """Normalized cosine similarity of the vectorized intensities."""
    if (a.width, a.height) != (b.width, b.height):
        raise DimensionMismatch("images must share dimensions")
    va, vb = a.vectorize(), b.vectorize()
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ZeroImage("cosine similarity undefined for an all-zero image")
    return float(np.dot(va, vb) / (na * nb))


@dataclass(frozen=True)
class ScoreSet:
    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.genuine, dtype=np.float64)
        i = np.asarray(self.impostor, dtype=np.float64)
        object.__setattr__(self, "genuine", g)
        object.__setattr__(self, "impostor", i)


@dataclass(frozen=True)
class RocSummary:
    auc: float
    eer: float
    vr_at_far: float
    far_point: float
    curve: np.ndarray  # rows of (threshold, far, tar), threshold ascending


def roc(scores: ScoreSet, far_point: float = 0.001) -> RocSummary:
    """Threshold sweep over the observed scores.

    TAR(t) = fraction of genuine >= t, FAR(t) = fraction of impostor >= t.
    AUC integrates TAR over FAR (trapezoid); EER linearly interpolates to
    the FAR = 1-TAR crossing; VR@FAR linearly interpolates TAR on the
    (FAR, TAR) polyline at FAR = far_point.
    """
    gen = np.asarray(scores.genuine, dtype=np.float64)
    imp = np.asarray(scores.impostor, dtype=np.float64)
    if gen.size == 0 or imp.size == 0:
        raise EmptyScores("both genuine and impostor scores are required")

    thresholds = np.unique(np.concatenate([gen, imp]))
    gen_sorted = np.sort(gen)
    imp_sorted = np.sort(imp)
    # Rates straight from the >=-counts (not 1 - miss rate): keeps floats
    # bit-identical to naive counting, which matters for interpolation
    # points that land exactly on an achievable FAR level.
    tar = (gen.size
           - np.searchsorted(gen_sorted, thresholds, side="left")) / gen.size
    far = (imp.size
           - np.searchsorted(imp_sorted, thresholds, side="left")) / imp.size
    curve = np.column_stack([thresholds, far, tar])

    # Virtual endpoints: everything accepted / everything rejected.
    far_ext = np.concatenate([[1.0], far, [0.0]])
    tar_ext = np.concatenate([[1.0], tar, [0.0]])

    # Integrate along the threshold path (far_ext is non-increasing), so
    # vertical ROC segments contribute zero width in the right order.
    auc = float(np.trapezoid(tar_ext[::-1], far_ext[::-1]))

    frr_ext = 1.0 - tar_ext
    diff = far_ext - frr_ext  # starts at +1, ends at -1 along thresholds
    eer = None
    for i in range(len(diff) - 1):
        if diff[i] >= 0.0 >= diff[i + 1]:
            span = diff[i] - diff[i + 1]
            s = 0.0 if span == 0.0 else diff[i] / span
            eer = float(far_ext[i] + s * (far_ext[i + 1] - far_ext[i]))
            break
    assert eer is not None  # diff is +1 .. -1, a crossing always exists

    vr = interpolate_tar_at_far(far_ext, tar_ext, far_point)
    return RocSummary(auc=auc, eer=eer, vr_at_far=vr, far_point=far_point,
                      curve=curve)


def interpolate_tar_at_far(far: np.ndarray, tar: np.ndarray,
                           far_point: float) -> float:
    """TAR on the threshold-ordered (FAR, TAR) polyline at FAR = far_point.

    `far` must be non-increasing along the array (threshold ascending).
    """
    if far_point >= far[0]:
        return float(tar[0])
    for i in range(len(far) - 1):
        if far[i] > far_point >= far[i + 1]:
            span = far[i] - far[i + 1]
            s = 0.0 if span == 0.0 else (far[i] - far_point) / span
            return float(tar[i] + s * (tar[i + 1] - tar[i]))
    return float(tar[-1])


def success_rate(records) -> float:
    """Fraction of successes; accepts AttackRecords or plain booleans."""
    if not records:
        raise EmptyRecordSet("success rate over zero records")
    wins = sum(1 for r in records
               if (r.success if hasattr(r, "success") else bool(r)))
    return wins / len(records)


@dataclass(frozen=True)
class BinStat:
    lo: float
    hi: float
    rate: float | None  # None when the bin is empty
    n: int
    in_roo: bool


def bin_by_similarity(values: list[tuple[float, bool]], edges: list[float],
                      *, roo_min: float) -> tuple[list[BinStat], int]:
    """Per-bin success rates over half-open bins [lo, hi), final bin closed.

    Returns (stats, out_of_range_count); empty bins report rate=None.
    """
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise BadBins("bin edges must be strictly increasing")
    hits = [[0, 0] for _ in range(len(edges) - 1)]
    out_of_range = 0
    last = len(edges) - 2
    for value, success in values:
        if value < edges[0] or value > edges[-1]:
            out_of_range += 1
            continue
        idx = min(int(np.searchsorted(edges, value, side="right")) - 1, last)
        hits[idx][0] += 1
        hits[idx][1] += 1 if success else 0
    stats = []
    for i, (count, won) in enumerate(hits):
        stats.append(BinStat(lo=edges[i], hi=edges[i + 1],
                             rate=(won / count) if count else None,
                             n=count, in_roo=edges[i] >= roo_min))
    return stats, out_of_range


def _fmt(x: float) -> str:
    return repr(float(x))


def write_roc_curve(summary: RocSummary, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["threshold", "far", "tar"])
        for t, far, tar in summary.curve:
            wr.writerow([_fmt(t), _fmt(far), _fmt(tar)])


def write_verification(rows: list[tuple[float, RocSummary]], path,
                       *, percent: bool = False) -> None:
    scale = 100.0 if percent else 1.0
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["intensity", "vr", "eer", "auc"])
        for intensity, summ in rows:
            wr.writerow([_fmt(intensity), _fmt(summ.vr_at_far * scale),
                         _fmt(summ.eer * scale), _fmt(summ.auc * scale)])


def write_bins(rows: list[tuple[str, list[BinStat]]], path) -> None:
    """rows: (metric name, stats) groups -> one CSV with a metric column."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["metric", "bin_lo", "bin_hi", "rate", "n", "in_roo"])
        for metric, stats in rows:
            for st in stats:
                wr.writerow([metric, _fmt(st.lo), _fmt(st.hi),
                             "" if st.rate is None else _fmt(st.rate),
                             st.n, "true" if st.in_roo else "false"])
