"""Command-line pipeline driver.

Subcommands mirror the pipeline stages:

    synth         generate the seeded dataset (images + ground-truth flows)
    train-oracle  fit the toy recognizer on early frames
    query         collect perpetrating (image, flow) pairs
    learn         learn the joint dictionary from collected pairs
    attack        intensity sweep with assigned fields
    transfer      replay stored successful morphs against a second oracle
    open-set      genuine/impostor score sets per intensity
    baseline      proprietary vs permutation/random baselines (SSIM/NCS bins)
    eval          render verification/ROC CSVs and a plain-text summary

Every command is idempotent for a fixed config and seed; outputs land
under --out.  Failures print one `Category: message` line and exit 1.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import assign, attack, fileio, metrics, synth
from .config import RunConfig, load_config
from .core import Image, RoiMask
from .dictionary import (TrainingPair, learn_dictionary, load_dictionary,
                         save_dictionary)
from .errors import ConfigError, MissingArtifact, MorphAttackError
from .flow import FlowEstimatorConfig
from .metrics import roc
from .oracle import load_model, save_model, train_toy


def _fmt(x: float) -> str:
    return repr(float(x))


def _flow_cfg(cfg: RunConfig) -> FlowEstimatorConfig:
    return FlowEstimatorConfig(smoothness_weight=cfg.flow_smoothness_weight,
                               iterations=cfg.flow_iterations,
                               convergence_epsilon=cfg.flow_epsilon)


def _roi(cfg: RunConfig) -> RoiMask:
    return RoiMask(width=cfg.synth_width, height=cfg.synth_height,
                   top=cfg.roi_top, left=cfg.roi_left,
                   rows=cfg.roi_rows, cols=cfg.roi_cols)


def _sweep(cfg: RunConfig) -> list[assign.IntensitySpec]:
    values = list(cfg.sweep_values) or assign.sweep_values(cfg.sweep_metric,
                                                           cfg.sweep_group)
    return assign.sweep_specs(cfg.sweep_metric, values)


def _build_world(cfg: RunConfig, *, id_offset: int = 0,
                 identities: int | None = None) -> list[synth.SynthIdentity]:
    return synth.build_world(
        cfg.seed, identities if identities is not None else cfg.synth_identities,
        width=cfg.synth_width, height=cfg.synth_height,
        frames=cfg.synth_frames, amplitude=cfg.synth_amplitude,
        sigma=cfg.synth_sigma, smoothness=cfg.synth_smoothness,
        id_offset=id_offset)


def _load_dataset(cfg: RunConfig) -> dict[int, list[Image]]:
    data = Path(cfg.data_dir)
    if not (data / "manifest.csv").exists():
        raise MissingArtifact(f"no dataset manifest under {data} (run synth)")
    frames: dict[int, dict[int, Image]] = {}
    for label, t, img_rel, _ in synth.read_manifest(data):
        frames.setdefault(label, {})[t] = fileio.read_pgm(data / img_rel)
    return {label: [by_t[t] for t in sorted(by_t)]
            for label, by_t in sorted(frames.items())}


def _targets(cfg: RunConfig) -> list[tuple[str, int, Image]]:
    dataset = _load_dataset(cfg)
    if cfg.attack_target_frames == "all":
        wanted = None
    else:
        wanted = {int(tok) for tok in cfg.attack_target_frames.split(",")}
    out = []
    for label, frames in dataset.items():
        for t, img in enumerate(frames):
            if wanted is None or t in wanted:
                out.append((f"id{label}_f{t}", label, img))
    return out


def _require(path: str | Path, hint: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingArtifact(f"{p} not found ({hint})")
    return p


def cmd_synth(cfg: RunConfig) -> int:
    world = _build_world(cfg)
    synth.write_dataset(world, cfg.data_dir)
    print(f"synth: {len(world)} identities x {cfg.synth_frames} frames "
          f"-> {cfg.data_dir}")
    return 0


def cmd_train_oracle(cfg: RunConfig, *, model_out: str | None = None,
                     d: int | None = None, temperature: float | None = None,
                     train_frames: int | None = None) -> int:
    dataset = _load_dataset(cfg)
    take = train_frames if train_frames is not None else cfg.oracle_train_frames
    samples = [(img, label) for label, frames in dataset.items()
               for img in frames[:take]]
    model = train_toy(samples,
                      d=d if d is not None else cfg.oracle_d,
                      temperature=(temperature if temperature is not None
                                   else cfg.oracle_temperature))
    path = Path(model_out if model_out else cfg.model_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, path)
    print(f"train-oracle: {model.identity_count} identities, d={model.d} "
          f"-> {path}")
    return 0


def cmd_query(cfg: RunConfig) -> int:
    dataset = _load_dataset(cfg)
    model = load_model(_require(cfg.model_path, "run train-oracle"))
    seeds = [attack.QuerySeed(image_id=f"id{label}", label=label,
                              image=frames[0], frames=frames)
             for label, frames in dataset.items()]
    qcfg = attack.QueryStageConfig(
        gamma=cfg.query_gamma,
        max_queries_per_seed=cfg.query_max_queries_per_seed,
        frames_per_seed=cfg.query_frames_per_seed)
    result = attack.run_query_stage(seeds, model, _flow_cfg(cfg), qcfg,
                                    use_morphed_image=cfg.learn_use_morphed)

    out = Path(cfg.out_dir)
    pairs_dir = out / "pairs"
    pairs_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, pair in enumerate(result.pairs):
        img_rel = f"pair_{i:05d}.pgm"
        flw_rel = f"pair_{i:05d}.amfl"
        fileio.write_pgm(pair.image, pairs_dir / img_rel)
        fileio.write_flow(pair.flow, pairs_dir / flw_rel)
        rows.append((i, img_rel, flw_rel))
    with open(pairs_dir / "pairs.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["pair", "image", "flow"])
        wr.writerows(rows)
    attack.write_run_log(result.records, out / "query_log.csv")
    print(f"query: {len(result.pairs)} perpetrating pairs from "
          f"{len(seeds)} seeds ({len(result.records)} queries, "
          f"{len(result.budget_exhausted)} budget-exhausted)")
    return 0


def _load_pairs(cfg: RunConfig) -> list[TrainingPair]:
    pairs_dir = Path(cfg.out_dir) / "pairs"
    index = _require(pairs_dir / "pairs.csv", "run query")
    pairs = []
    with open(index, newline="") as fh:
        for rec in csv.DictReader(fh):
            pairs.append(TrainingPair(
                image=fileio.read_pgm(pairs_dir / rec["image"]),
                flow=fileio.read_flow(pairs_dir / rec["flow"])))
    return pairs


def cmd_learn(cfg: RunConfig) -> int:
    pairs = _load_pairs(cfg)
    if len(pairs) < 2:
        raise ConfigError(
            f"learning needs >= 2 training pairs, query produced {len(pairs)}")
    d = learn_dictionary(pairs, _roi(cfg),
                         k=cfg.learn_k if cfg.learn_k > 0 else None,
                         energy=cfg.learn_energy)
    Path(cfg.dict_path).parent.mkdir(parents=True, exist_ok=True)
    save_dictionary(d, cfg.dict_path)
    print(f"learn: {len(pairs)} pairs -> k={d.k} bases "
          f"(rank_deficient={d.rank_deficient}) -> {cfg.dict_path}")
    return 0


def cmd_attack(cfg: RunConfig) -> int:
    d = load_dictionary(_require(cfg.dict_path, "run learn"))
    model = load_model(_require(cfg.model_path, "run train-oracle"))
    targets = _targets(cfg)
    out = Path(cfg.out_dir)

    morph_rows = []
    sink = None
    if cfg.attack_save_morphs:
        morphs_dir = out / "morphs"
        morphs_dir.mkdir(parents=True, exist_ok=True)

        def sink(image_id, label, spec, image):
            name = f"{image_id}__{spec.mode}__{_fmt(spec.value)}.pgm"
            fileio.write_pgm(image, morphs_dir / name)
            morph_rows.append((image_id, spec.mode, _fmt(spec.value), label,
                               f"morphs/{name}"))

    before = model.query_count
    result = attack.run_attack_sweep(targets, d, model, _sweep(cfg),
                                     gamma=cfg.query_gamma,
                                     add_mean=cfg.learn_add_mean,
                                     jobs=cfg.jobs, morph_sink=sink)
    attack.write_run_log(result.records, out / "attack_log.csv")
    attack.write_sweep_report(result.rows, out / "sweep.csv")
    if cfg.attack_save_morphs:
        with open(out / "morphs.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["image_id", "mode", "value", "label_true", "path"])
            wr.writerows(morph_rows)
    print(f"attack: {len(targets)} targets x {len(result.rows)} intensities, "
          f"{model.query_count - before} oracle queries")
    return 0


def cmd_transfer(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    index = _require(out / "morphs.csv", "run attack with attack.save_morphs")
    model_b = load_model(_require(cfg.model_b_path,
                                  "train a second oracle to paths.model_b"))
    groups: dict[tuple[str, str], list[tuple[str, int, Image]]] = {}
    with open(index, newline="") as fh:
        for rec in csv.DictReader(fh):
            replay = (rec["image_id"], int(rec["label_true"]),
                      fileio.read_pgm(out / rec["path"]))
            groups.setdefault((rec["mode"], rec["value"]), []).append(replay)
    if not groups:
        raise ConfigError("no stored successful morphs to replay")

    all_replays = [r for g in groups.values() for r in g]
    overall = attack.run_transferability(all_replays, model_b,
                                         gamma=cfg.query_gamma)
    with open(out / "transfer.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["mode", "value", "n", "transfer_rate"])
        for (mode, value), replays in sorted(groups.items()):
            res = attack.run_transferability(replays, model_b,
                                             gamma=cfg.query_gamma)
            wr.writerow([mode, value, res.n, _fmt(res.rate)])
        wr.writerow(["all", "", overall.n, _fmt(overall.rate)])
    print(f"transfer: {overall.n} replays, rate={overall.rate:.3f}")
    return 0


def cmd_open_set(cfg: RunConfig) -> int:
    d = load_dictionary(_require(cfg.dict_path, "run learn"))
    model = load_model(_require(cfg.model_path, "run train-oracle"))
    world = _build_world(cfg, id_offset=cfg.openset_id_offset,
                         identities=cfg.openset_identities)
    gallery = [(ident.label, ident.frames[0]) for ident in world]
    probes = [(ident.label, frame) for ident in world
              for frame in ident.frames[1:]]
    scores = attack.run_open_set_attack(gallery, probes, d, model,
                                        _sweep(cfg),
                                        add_mean=cfg.learn_add_mean)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    attack.write_score_sets(scores, out / "openset_scores.csv")
    print(f"open-set: {len(gallery)} gallery / {len(probes)} probes, "
          f"{len(scores)} intensity levels (incl. unmorphed baseline)")
    return 0


def cmd_baseline(cfg: RunConfig) -> int:
    d = load_dictionary(_require(cfg.dict_path, "run learn"))
    model = load_model(_require(cfg.model_path, "run train-oracle"))
    targets = _targets(cfg)
    kinds = [k.strip() for k in cfg.baseline_kinds.split(",") if k.strip()]
    records = attack.run_baseline_comparison(targets, d, model, _sweep(cfg),
                                             kinds, cfg.seed,
                                             gamma=cfg.query_gamma,
                                             add_mean=cfg.learn_add_mean)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    attack.write_baseline_log(records, out / "baseline_log.csv")

    def bins_for(method: str, path) -> None:
        subset = [r for r in records if r.method == method]
        ssim_stats, _ = metrics.bin_by_similarity(
            [(r.ssim, r.success) for r in subset], metrics.SSIM_BIN_EDGES,
            roo_min=metrics.ROO_SSIM_MIN)
        ncs_stats, _ = metrics.bin_by_similarity(
            [(r.ncs, r.success) for r in subset], metrics.NCS_BIN_EDGES,
            roo_min=metrics.ROO_NCS_MIN)
        metrics.write_bins([("ssim", ssim_stats), ("ncs", ncs_stats)], path)

    bins_for("proprietary", out / "bins.csv")
    for kind in kinds:
        safe = kind.replace("(", "_").replace(")", "").replace(",", "_")
        bins_for(kind, out / f"bins_{safe}.csv")

    roo = attack.roo_success_rates(records)
    with open(out / "roo.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["method", "rate", "n"])
        for method in ["proprietary"] + kinds:
            if method in roo:
                rate, n = roo[method]
                wr.writerow([method, _fmt(rate), n])
    print(f"baseline: {len(records)} records over {1 + len(kinds)} methods")
    return 0


def _read_scores(path) -> dict[float, metrics.ScoreSet]:
    buckets: dict[float, dict[str, list[float]]] = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            b = buckets.setdefault(float(rec["intensity"]),
                                   {"genuine": [], "impostor": []})
            b[rec["pair_type"]].append(float(rec["score"]))
    return {i: metrics.ScoreSet(genuine=b["genuine"], impostor=b["impostor"])
            for i, b in sorted(buckets.items())}


def cmd_eval(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    eval_dir = out / "eval"
    sweep_path = out / "sweep.csv"
    scores_path = out / "openset_scores.csv"
    if not sweep_path.exists() and not scores_path.exists():
        raise MissingArtifact(
            f"nothing to evaluate: neither {sweep_path} nor {scores_path}")
    eval_dir.mkdir(parents=True, exist_ok=True)
    lines = []

    if sweep_path.exists():
        with open(sweep_path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        lines.append("Attack success rate by intensity")
        lines.append(f"{'mode':>16} {'value':>10} {'rate':>8} {'n':>6}")
        for rec in rows:
            lines.append(f"{rec['mode']:>16} {float(rec['value']):>10.4g} "
                         f"{float(rec['success_rate']):>8.3f} {rec['n']:>6}")
        lines.append("")

    if scores_path.exists():
        scores = _read_scores(scores_path)
        ver_rows = []
        for intensity, ss in scores.items():
            summary = roc(ss)
            ver_rows.append((intensity, summary))
            suffix = ("" if intensity == 0.0
                      else f"_{_fmt(intensity)}")
            metrics.write_roc_curve(summary,
                                    eval_dir / f"roc_curve{suffix}.csv")
        metrics.write_verification(ver_rows, eval_dir / "verification.csv")
        lines.append("Open-set verification scores (percent; intensity 0 = unmorphed)")
        lines.append(f"{'intensity':>10} {'VR@0.001':>9} {'EER':>7} {'AUC':>7}")
        for intensity, summary in ver_rows:
            lines.append(f"{intensity:>10.4g} {summary.vr_at_far * 100:>9.2f} "
                         f"{summary.eer * 100:>7.2f} {summary.auc * 100:>7.2f}")
        lines.append("")

    text = "\n".join(lines) + "\n"
    (eval_dir / "summary.txt").write_text(text)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="morphattack",
        description="Black-box morphing-attack pipeline")
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--seed", type=int, help="master run seed")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--jobs", type=int, help="parallel workers for sweeps")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth")
    tr = sub.add_parser("train-oracle")
    tr.add_argument("--model-out", help="override the model output path")
    tr.add_argument("--d", type=int, help="embedding dimensionality")
    tr.add_argument("--temperature", type=float)
    tr.add_argument("--train-frames", type=int,
                    help="frames per identity used for training")
    sub.add_parser("query")
    sub.add_parser("learn")
    sub.add_parser("attack")
    sub.add_parser("transfer")
    sub.add_parser("open-set")
    sub.add_parser("baseline")
    sub.add_parser("eval")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "out_dir": args.out, "jobs": args.jobs}
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "train-oracle":
            return cmd_train_oracle(cfg, model_out=args.model_out, d=args.d,
                                    temperature=args.temperature,
                                    train_frames=args.train_frames)
        if args.command == "query":
            return cmd_query(cfg)
        if args.command == "learn":
            return cmd_learn(cfg)
        if args.command == "attack":
            return cmd_attack(cfg)
        if args.command == "transfer":
            return cmd_transfer(cfg)
        if args.command == "open-set":
            return cmd_open_set(cfg)
        if args.command == "baseline":
            return cmd_baseline(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except MorphAttackError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"MissingArtifact: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
