"""Run configuration: flat `section.key = value` files plus CLI overrides.

Unknown keys are rejected so typos fail loudly.  CLI flags take precedence
over file values, which take precedence over the defaults below.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_floats(s: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in s.split(",") if tok.strip())


@dataclass
class RunConfig:
    seed: int = 0
    jobs: int = 1

    # Empty path fields are resolved against out_dir (see resolve_paths).
    data_dir: str = ""
    dict_path: str = ""
    model_path: str = ""
    model_b_path: str = ""
    out_dir: str = "out"

    synth_identities: int = 20
    synth_width: int = 32
    synth_height: int = 32
    synth_frames: int = 10
    synth_amplitude: float = 2.0
    synth_sigma: float = 8.0
    synth_smoothness: float = 2.0

    flow_smoothness_weight: float = 0.1
    flow_iterations: int = 200
    flow_epsilon: float = 1e-4

    # d/temperature calibrated on the default 20-identity fixture: unmorphed
    # probes classify with confidence ~1 while late-sequence morphs cross the
    # gamma=0.6 criterion at a useful rate.
    oracle_d: int = 24
    oracle_temperature: float = 0.1
    oracle_train_frames: int = 3

    query_gamma: float = 0.6
    query_max_queries_per_seed: int = 200
    query_frames_per_seed: int = 1000

    learn_k: int = 0  # 0 = auto (95% energy, capped)
    learn_energy: float = 0.95
    learn_use_morphed: bool = False
    learn_add_mean: bool = True

    roi_top: int = 0
    roi_left: int = 0
    roi_rows: int = 0  # 0 = full frame
    roi_cols: int = 0

    sweep_metric: str = "delta"
    sweep_group: str = "all"
    sweep_values: tuple[float, ...] = ()

    attack_target_frames: str = "all"
    attack_save_morphs: bool = True

    openset_identities: int = 8
    openset_id_offset: int = 1000

    baseline_kinds: str = ("intra_channel,inter_channel,"
                           "random_u(-2,1),random_u(-1,1),random_normal")


# config-file key -> (RunConfig field, parser)
CONFIG_KEYS = {
    "seed": ("seed", int),
    "jobs": ("jobs", int),
    "paths.data": ("data_dir", str),
    "paths.dictionary": ("dict_path", str),
    "paths.model": ("model_path", str),
    "paths.model_b": ("model_b_path", str),
    "paths.out": ("out_dir", str),
    "synth.identities": ("synth_identities", int),
    "synth.width": ("synth_width", int),
    "synth.height": ("synth_height", int),
    "synth.frames": ("synth_frames", int),
    "synth.amplitude": ("synth_amplitude", float),
    "synth.sigma": ("synth_sigma", float),
    "synth.smoothness": ("synth_smoothness", float),
    "flow.smoothness_weight": ("flow_smoothness_weight", float),
    "flow.iterations": ("flow_iterations", int),
    "flow.epsilon": ("flow_epsilon", float),
    "oracle.d": ("oracle_d", int),
    "oracle.temperature": ("oracle_temperature", float),
    "oracle.train_frames": ("oracle_train_frames", int),
    "query.gamma": ("query_gamma", float),
    "query.max_queries_per_seed": ("query_max_queries_per_seed", int),
    "query.frames_per_seed": ("query_frames_per_seed", int),
    "learn.k": ("learn_k", int),
    "learn.energy": ("learn_energy", float),
    "learn.use_morphed": ("learn_use_morphed", _parse_bool),
    "learn.add_mean": ("learn_add_mean", _parse_bool),
    "roi.top": ("roi_top", int),
    "roi.left": ("roi_left", int),
    "roi.rows": ("roi_rows", int),
    "roi.cols": ("roi_cols", int),
    "sweep.metric": ("sweep_metric", str),
    "sweep.group": ("sweep_group", str),
    "sweep.values": ("sweep_values", _parse_floats),
    "attack.target_frames": ("attack_target_frames", str),
    "attack.save_morphs": ("attack_save_morphs", _parse_bool),
    "openset.identities": ("openset_identities", int),
    "openset.id_offset": ("openset_id_offset", int),
    "baseline.kinds": ("baseline_kinds", str),
}

_FIELD_NAMES = {f.name for f in fields(RunConfig)}
assert all(field in _FIELD_NAMES for field, _ in CONFIG_KEYS.values())


def parse_config_file(path) -> dict[str, str]:
    """Read `key = value` lines; '#' starts a comment."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        raw[key] = value
    return raw


def resolve_paths(cfg: RunConfig) -> RunConfig:
    """Fill empty path fields with defaults under out_dir."""
    base = Path(cfg.out_dir)
    if not cfg.data_dir:
        cfg.data_dir = str(base / "data")
    if not cfg.dict_path:
        cfg.dict_path = str(base / "dictionary.amdc")
    if not cfg.model_path:
        cfg.model_path = str(base / "oracle.amfr")
    if not cfg.model_b_path:
        cfg.model_b_path = str(base / "oracle_b.amfr")
    return cfg


def load_config(path=None, overrides: dict[str, object] | None = None
                ) -> RunConfig:
    """Defaults <- config file <- overrides (CLI flags)."""
    cfg = RunConfig()
    if path is not None:
        for key, text in parse_config_file(path).items():
            field, parser = CONFIG_KEYS[key]
            try:
                setattr(cfg, field, parser(text))
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from exc
    for field, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, field, value)
    return resolve_paths(cfg)
