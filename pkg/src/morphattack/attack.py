"""The attack pipeline: query stage, intensity sweeps, transferability,
open-set scoring, and the permutation/random baselines.

Success criterion (shared by every stage): an attempt counts as a success
when the verdict label differs from the true label OR the confidence falls
below the threshold gamma (default 0.6).

Everything here is deterministic given (fixture seed, config); random
baselines use the splittable counter RNG keyed by (run seed, image id) so
parallel execution cannot reorder draws.
"""

from __future__ import annotations

import csv
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .assign import IntensitySpec, assign_proprietary_flow, modulate, project, \
    reconstruct_flow
from .core import FlowField, Image, flow_norm, flow_scale, morph
from .dictionary import JointDictionary, TrainingPair
from .errors import EmptyRecordSet, ZeroFlow
from .flow import FlowEstimatorConfig, compose_flows, estimate_flow
from .metrics import ScoreSet, ncs, ssim
from .oracle import BlackBoxOracle, OracleVerdict
from .rng import CounterRng, fold_string


@dataclass(frozen=True)
class QueryStageConfig:
    gamma: float = 0.6
    max_queries_per_seed: int = 1000
    frames_per_seed: int = 1000

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")
        if self.max_queries_per_seed < 1 or self.frames_per_seed < 1:
            raise ValueError("query budgets must be positive")


@dataclass(frozen=True)
class AttackRecord:
    image_id: str
    mode: str
    value: float
    label_true: int
    verdict: OracleVerdict | None  # None when the attempt was skipped
    success: bool
    flow_l2: float
    flow_linf: float
    queries_used: int
    skipped: bool = False


def is_success(verdict: OracleVerdict, true_label: int,
               gamma: float = 0.6) -> bool:
    """Erroneous output, or a confidence below the threshold."""
    return verdict.label != true_label or verdict.confidence < gamma


@dataclass(frozen=True)
class QuerySeed:
    """A seed face with its deformation-sequence frames (frame 0 = seed)."""

    image_id: str
    label: int
    image: Image
    frames: list[Image]


@dataclass(frozen=True)
class QueryStageResult:
    pairs: list[TrainingPair]
    records: list[AttackRecord]
    budget_exhausted: list[str]  # seed ids that hit max_queries_per_seed


def run_query_stage(seeds: list[QuerySeed], oracle: BlackBoxOracle,
                    flow_cfg: FlowEstimatorConfig, qcfg: QueryStageConfig,
                    *, use_morphed_image: bool = False) -> QueryStageResult:
    """Collect perpetrating (image, flow) pairs.

    Per seed: estimate the flow between consecutive frames, accumulate it
    into a seed-to-frame field, warp the seed, query the oracle, and keep
    the pair whenever the attempt succeeds.  Hitting the per-seed query
    budget is recorded, not raised.
    """
    pairs: list[TrainingPair] = []
    records: list[AttackRecord] = []
    exhausted: list[str] = []
    for seed in seeds:
        queries = 0
        cumulative = FlowField.zero(seed.image.width, seed.image.height)
        last_frame = min(len(seed.frames) - 1, qcfg.frames_per_seed)
        for t in range(1, last_frame + 1):
            step = estimate_flow(seed.frames[t - 1], seed.frames[t], flow_cfg)
            cumulative = compose_flows(cumulative, step)
            if queries >= qcfg.max_queries_per_seed:
                exhausted.append(seed.image_id)
                break
            morphed = morph(seed.image, cumulative)
            verdict = oracle.classify(morphed)
            queries += 1
            hit = is_success(verdict, seed.label, qcfg.gamma)
            records.append(AttackRecord(
                image_id=seed.image_id, mode="query", value=float(t),
                label_true=seed.label, verdict=verdict, success=hit,
                flow_l2=flow_norm(cumulative, "l2"),
                flow_linf=flow_norm(cumulative, "linf"), queries_used=1))
            if hit:
                pairs.append(TrainingPair(
                    image=morphed if use_morphed_image else seed.image,
                    flow=cumulative))
    return QueryStageResult(pairs=pairs, records=records,
                            budget_exhausted=exhausted)


@dataclass(frozen=True)
class SweepRow:
    mode: str
    value: float
    success_rate: float
    n: int


@dataclass(frozen=True)
class SweepResult:
    rows: list[SweepRow]
    records: list[AttackRecord]


def _attempt(target: tuple[str, int, Image], d: JointDictionary,
             oracle: BlackBoxOracle, spec: IntensitySpec, gamma: float,
             add_mean: bool, morph_sink) -> AttackRecord:
    image_id, label, image = target
    try:
        field = assign_proprietary_flow(image, d, spec, add_mean=add_mean)
    except ZeroFlow:
        # Recorded skip; counts as a failure in the sweep denominator.
        return AttackRecord(image_id=image_id, mode=spec.mode,
                            value=spec.value, label_true=label, verdict=None,
                            success=False, flow_l2=0.0, flow_linf=0.0,
                            queries_used=0, skipped=True)
    morphed = morph(image, field)
    verdict = oracle.classify(morphed)
    hit = is_success(verdict, label, gamma)
    if hit and morph_sink is not None:
        morph_sink(image_id, label, spec, morphed)
    return AttackRecord(image_id=image_id, mode=spec.mode, value=spec.value,
                        label_true=label, verdict=verdict, success=hit,
                        flow_l2=flow_norm(field, "l2"),
                        flow_linf=flow_norm(field, "linf"), queries_used=1)


def run_attack_sweep(targets: list[tuple[str, int, Image]],
                     d: JointDictionary, oracle: BlackBoxOracle,
                     sweep: list[IntensitySpec], *, gamma: float = 0.6,
                     add_mean: bool = True, jobs: int = 1,
                     morph_sink=None) -> SweepResult:
    """Assign, morph and query every (target, intensity) combination.

    morph_sink(image_id, label, spec, image) receives each successful
    morph (e.g. to persist it for transferability replay).  Results are
    collected in submission order, so output is identical for any `jobs`.
    """
    rows: list[SweepRow] = []
    records: list[AttackRecord] = []
    for spec in sweep:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                batch = list(pool.map(
                    lambda tg: _attempt(tg, d, oracle, spec, gamma,
                                        add_mean, morph_sink), targets))
        else:
            batch = [_attempt(tg, d, oracle, spec, gamma, add_mean,
                              morph_sink) for tg in targets]
        records.extend(batch)
        wins = sum(1 for r in batch if r.success)
        rows.append(SweepRow(mode=spec.mode, value=spec.value,
                             success_rate=wins / len(batch), n=len(batch)))
    return SweepResult(rows=rows, records=records)


@dataclass(frozen=True)
class TransferResult:
    rate: float
    n: int


def run_transferability(replays: list[tuple[str, int, Image]],
                        oracle_b: BlackBoxOracle,
                        gamma: float = 0.6) -> TransferResult:
    """Replay stored successful morphs against a second oracle."""
    if not replays:
        raise EmptyRecordSet("no successful attacks to replay")
    wins = 0
    for _, label, image in replays:
        if is_success(oracle_b.classify(image), label, gamma):
            wins += 1
    return TransferResult(rate=wins / len(replays), n=len(replays))


_RANDOM_U = re.compile(r"^random_u\(\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*\)$")

BASELINE_KINDS = ("intra_channel", "inter_channel", "random_u(lo,hi)",
                  "random_normal")


def baseline_field(proprietary: FlowField, kind: str,
                   rng_seed: int) -> FlowField:
    """Permutation / random reference fields.

    intra_channel permutes h values among h positions and v among v;
    inter_channel permutes the pooled 2N values across both channels
    (either way the component multiset, hence every norm, is preserved);
    random_u(lo,hi) and random_normal draw i.i.d. fields of the same shape.
    Deterministic per (kind, rng_seed).
    """
    rng = CounterRng.from_seeds(rng_seed).split_label(kind)
    n = proprietary.width * proprietary.height
    h = proprietary.h.reshape(-1)
    v = proprietary.v.reshape(-1)
    if kind == "intra_channel":
        new_h = h[rng.permutation(n)]
        new_v = v[rng.permutation(n)]
    elif kind == "inter_channel":
        pooled = np.concatenate([h, v])[rng.permutation(2 * n)]
        new_h, new_v = pooled[:n], pooled[n:]
    elif kind == "random_normal":
        new_h = rng.normal(n)
        new_v = rng.normal(n)
    else:
        m = _RANDOM_U.match(kind)
        if not m:
            raise ValueError(f"unknown baseline kind {kind!r}")
        lo, hi = float(m.group(1)), float(m.group(2))
        if hi <= lo:
            raise ValueError(f"empty uniform range in {kind!r}")
        new_h = rng.uniform(n, lo, hi)
        new_v = rng.uniform(n, lo, hi)
    return FlowField.from_vectors(new_h, new_v, proprietary.width,
                                  proprietary.height)


@dataclass(frozen=True)
class BaselineRecord:
    image_id: str
    method: str  # "proprietary" or a baseline kind
    mode: str
    value: float
    ssim: float
    ncs: float
    flow_l2: float
    flow_linf: float
    label_true: int
    verdict: OracleVerdict
    success: bool


def run_baseline_comparison(targets: list[tuple[str, int, Image]],
                            d: JointDictionary, oracle: BlackBoxOracle,
                            sweep: list[IntensitySpec], kinds: list[str],
                            run_seed: int, *, gamma: float = 0.6,
                            add_mean: bool = True) -> list[BaselineRecord]:
    """Proprietary fields vs baselines at matched intensities.

    Permutation baselines permute the modulated proprietary field, so they
    match its intensity by construction.  Random baselines draw their raw
    field per (run seed, image id, kind) and are rescaled to the same
    norm, putting every method at the same point on the intensity axis.
    """
    records: list[BaselineRecord] = []
    match_norm = "linf" if (sweep and sweep[0].mode == "linf_target") else "l2"

    for image_id, label, image in targets:
        raw = reconstruct_flow(project(image, d), d, add_mean=add_mean)
        raw_fields = {}
        for kind in kinds:
            seed = fold_string(run_seed, image_id)
            raw_fields[kind] = baseline_field(raw, kind, seed)
        for spec in sweep:
            try:
                prop = modulate(raw, spec)
            except ZeroFlow:
                continue
            fields = {"proprietary": prop}
            target_norm = flow_norm(prop, match_norm)
            for kind in kinds:
                if kind.startswith("random"):
                    base = raw_fields[kind]
                    nrm = flow_norm(base, match_norm)
                    fields[kind] = (flow_scale(base, target_norm / nrm)
                                    if nrm > 1e-12 else base)
                else:
                    seed = fold_string(run_seed,
                                       f"{image_id}/{spec.value!r}")
                    fields[kind] = baseline_field(prop, kind, seed)
            for method, field in fields.items():
                morphed = morph(image, field)
                verdict = oracle.classify(morphed)
                records.append(BaselineRecord(
                    image_id=image_id, method=method, mode=spec.mode,
                    value=spec.value, ssim=ssim(image, morphed),
                    ncs=ncs(image, morphed),
                    flow_l2=flow_norm(field, "l2"),
                    flow_linf=flow_norm(field, "linf"), label_true=label,
                    verdict=verdict,
                    success=is_success(verdict, label, gamma)))
    return records


def roo_success_rates(records: list[BaselineRecord],
                      ssim_min: float = 0.9) -> dict[str, tuple[float, int]]:
    """Aggregate success rate per method over the high-SSIM (ROO) records."""
    per_method: dict[str, list[bool]] = {}
    for rec in records:
        if rec.ssim >= ssim_min:
            per_method.setdefault(rec.method, []).append(rec.success)
    return {m: (sum(s) / len(s), len(s)) for m, s in per_method.items()}


def run_open_set_attack(gallery: list[tuple[int, Image]],
                        probes: list[tuple[int, Image]],
                        d: JointDictionary, oracle: BlackBoxOracle,
                        sweep: list[IntensitySpec], *,
                        add_mean: bool = True) -> dict[float, ScoreSet]:
    """Genuine/impostor cosine score sets per intensity.

    Each probe is morphed with its own assigned field; scores compare the
    morphed probe embedding against every gallery embedding (genuine =
    same identity).  Key 0.0 holds the unmorphed baseline scores.
    """
    gallery_emb = [(label, oracle.embed(img)) for label, img in gallery]

    def score(img: Image, label: int, gen: list, imp: list) -> None:
        e = oracle.embed(img)
        for glabel, gemb in gallery_emb:
            (gen if glabel == label else imp).append(float(np.dot(e, gemb)))

    out: dict[float, ScoreSet] = {}
    gen0: list[float] = []
    imp0: list[float] = []
    for label, img in probes:
        score(img, label, gen0, imp0)
    out[0.0] = ScoreSet(genuine=np.asarray(gen0), impostor=np.asarray(imp0))

    for spec in sweep:
        gen: list[float] = []
        imp: list[float] = []
        for label, img in probes:
            try:
                field = assign_proprietary_flow(img, d, spec,
                                                add_mean=add_mean)
            except ZeroFlow:
                continue
            score(morph(img, field), label, gen, imp)
        out[float(spec.value)] = ScoreSet(genuine=np.asarray(gen),
                                          impostor=np.asarray(imp))
    return out


def _fmt(x: float) -> str:
    return repr(float(x))


def write_run_log(records: list[AttackRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["image_id", "mode", "value", "l2", "linf", "label_true",
                     "label_pred", "confidence", "success", "queries"])
        for r in records:
            wr.writerow([
                r.image_id, r.mode, _fmt(r.value), _fmt(r.flow_l2),
                _fmt(r.flow_linf), r.label_true,
                "" if r.verdict is None else r.verdict.label,
                "" if r.verdict is None else _fmt(r.verdict.confidence),
                "true" if r.success else "false", r.queries_used])


def write_sweep_report(rows: list[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["mode", "value", "success_rate", "n"])
        for row in rows:
            wr.writerow([row.mode, _fmt(row.value), _fmt(row.success_rate),
                         row.n])


def write_score_sets(scores: dict[float, ScoreSet], path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["intensity", "pair_type", "score"])
        for intensity in sorted(scores):
            ss = scores[intensity]
            for s in ss.genuine:
                wr.writerow([_fmt(intensity), "genuine", _fmt(s)])
            for s in ss.impostor:
                wr.writerow([_fmt(intensity), "impostor", _fmt(s)])


def write_baseline_log(records: list[BaselineRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["image_id", "method", "mode", "value", "ssim", "ncs",
                     "l2", "linf", "label_true", "label_pred", "confidence",
                     "success"])
        for r in records:
            wr.writerow([r.image_id, r.method, r.mode, _fmt(r.value),
                         _fmt(r.ssim), _fmt(r.ncs), _fmt(r.flow_l2),
                         _fmt(r.flow_linf), r.label_true, r.verdict.label,
                         _fmt(r.verdict.confidence),
                         "true" if r.success else "false"])
