"""Run configuration: TOML loading, experiment presets, validation, snapshots.

The config file is flat key/value TOML; a section named after an experiment
holds overrides that apply only when that experiment is selected, so one
file can carry several profiles.  Defaults follow the reference experimental
setup (optimizer constants, widths, penalty weights); iteration counts
default to desk-scale presets, with full reference-scale counts available
through ``paper_scale``.
"""

import dataclasses
import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("nu_sweep", "obstacle", "congestion", "bottleneck", "symmetric",
               "analytic", "quadcopter")


class ConfigError(ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"config field '{field}': {message}")


@dataclass
class RunConfig:
    experiment: str
    dim: int
    nu: float
    gamma: float = 0.0
    beta: float = 1.0
    speed_c: float = 8.0
    gamma_obst: float = 5.0
    gamma_cong: float = 20.0
    horizon: float = 1.0
    batch_size: int = 50
    iterations: int = 5000
    lr_phi: float = 4e-4
    lr_gen: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    weight_decay: float = 1e-4
    lambda_hjb: float = 1.0
    smoothing_eps: float = 1e-3
    seed: int = 0
    log_interval: int = 100
    validate_interval: int = 1000
    output_dir: str = ""
    hamiltonian_variant: str = "derived"
    mass: float = 0.5
    gravity: float = 9.81
    width: int = 100
    hidden_layers: int = 3


# desk-scale defaults per experiment; tuned for minutes, not fidelity
PRESETS = {
    "nu_sweep": dict(speed_c=8.0, iterations=10000),
    "obstacle": dict(speed_c=8.0, gamma_obst=5.0, iterations=5000),
    "congestion": dict(speed_c=5.0, iterations=5000),
    "bottleneck": dict(speed_c=5.0, gamma_obst=5.0, iterations=5000),
    "symmetric": dict(speed_c=8.0, gamma_obst=20.0, lambda_hjb=0.1, iterations=5000),
    "analytic": dict(iterations=30000),
    "quadcopter": dict(batch_size=150, horizon=4.0, iterations=2000),
}

# reference-scale two-dimensional iteration counts; experiments without a
# defined count keep their desk preset
PAPER_ITERATIONS = {
    "obstacle": 200_000,
    "congestion": 100_000,
    "bottleneck": 100_000,
    "symmetric": 100_000,
}


def paper_scale_iterations(experiment, gamma=0.0):
    if experiment == "analytic":
        return 30_000 if gamma == 0.0 else 60_000
    return PAPER_ITERATIONS.get(experiment)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_REQUIRED = ("experiment", "dim", "nu")


def _coerce(field, value):
    want = _FIELDS[field].type
    if want is float or want == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(field, f"expected a number, got {value!r}")
        return float(value)
    if want is int or want == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(field, f"expected an integer, got {value!r}")
        return int(value)
    if not isinstance(value, str):
        raise ConfigError(field, f"expected a string, got {value!r}")
    return value


def _merge(target, source):
    for key, value in source.items():
        if key == "betas":
            if (not isinstance(value, (list, tuple)) or len(value) != 2
                    or not all(isinstance(v, (int, float)) for v in value)):
                raise ConfigError("betas", f"expected two numbers, got {value!r}")
            target["beta1"], target["beta2"] = float(value[0]), float(value[1])
            continue
        if key not in _FIELDS:
            raise ConfigError(key, "unknown key")
        target[key] = _coerce(key, value)


def resolve(raw, overrides=None, paper_scale=False):
    """Merge presets <- file values <- CLI overrides and validate."""
    raw = dict(raw)
    sections = {k: raw.pop(k) for k in list(raw) if isinstance(raw.get(k), dict)}
    for name in sections:
        if name not in EXPERIMENTS:
            raise ConfigError(name, "unknown section (sections must be experiment names)")

    experiment = raw.get("experiment")
    if experiment is None:
        raise ConfigError("experiment", "missing required key")
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {', '.join(EXPERIMENTS)}")

    merged = dict(PRESETS[experiment])
    merged["experiment"] = experiment
    _merge(merged, raw)
    if experiment in sections:
        _merge(merged, sections[experiment])
    if overrides:
        _merge(merged, {k: v for k, v in overrides.items() if v is not None})

    for key in _REQUIRED:
        if key not in merged:
            raise ConfigError(key, "missing required key")
    if paper_scale and "iterations" not in raw and not (overrides or {}).get("iterations"):
        count = paper_scale_iterations(experiment, merged.get("gamma", 0.0))
        if count is not None:
            merged["iterations"] = count

    cfg = RunConfig(**merged)
    _validate(cfg)
    return cfg


def _validate(cfg):
    def check(cond, field, message):
        if not cond:
            raise ConfigError(field, message)

    check(cfg.dim >= 1, "dim", "must be at least 1")
    check(cfg.nu >= 0, "nu", "must be nonnegative")
    check(cfg.gamma >= 0, "gamma", "must be nonnegative")
    check(cfg.beta > 0, "beta", "must be positive")
    check(cfg.horizon > 0, "horizon", "must be positive")
    check(cfg.batch_size >= 1, "batch_size", "must be at least 1")
    check(cfg.iterations >= 0, "iterations", "must be nonnegative")
    check(cfg.lr_phi > 0, "lr_phi", "must be positive")
    check(cfg.lr_gen > 0, "lr_gen", "must be positive")
    check(0 <= cfg.beta1 < 1, "beta1", "must be in [0, 1)")
    check(0 <= cfg.beta2 < 1, "beta2", "must be in [0, 1)")
    check(cfg.weight_decay >= 0, "weight_decay", "must be nonnegative")
    check(cfg.lambda_hjb >= 0, "lambda_hjb", "must be nonnegative")
    check(cfg.smoothing_eps > 0, "smoothing_eps", "must be positive")
    check(cfg.seed >= 0, "seed", "must be nonnegative")
    check(cfg.log_interval >= 1, "log_interval", "must be at least 1")
    check(cfg.validate_interval >= 1, "validate_interval", "must be at least 1")
    check(cfg.width >= 1, "width", "must be at least 1")
    check(cfg.hidden_layers >= 1, "hidden_layers", "must be at least 1")
    check(cfg.hamiltonian_variant in ("derived", "paper"), "hamiltonian_variant",
          "must be 'derived' or 'paper'")
    if cfg.experiment == "quadcopter":
        check(cfg.dim == 12, "dim", "quadcopter runs require dim = 12")
        check(cfg.mass > 0, "mass", "must be positive")
    if cfg.experiment == "analytic":
        check(cfg.nu > 0, "nu", "the analytic experiment requires nu > 0")


def load(path, overrides=None, paper_scale=False):
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return resolve(raw, overrides, paper_scale)


def _toml_value(v):
    if isinstance(v, str):
        escaped = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        text = repr(v)
        return text if any(c in text for c in ".eE") else text + ".0"
    raise TypeError(f"cannot serialize {v!r}")


def dumps(cfg):
    """Resolved-config snapshot; feeding it back reproduces the run."""
    lines = []
    for f in dataclasses.fields(RunConfig):
        lines.append(f"{f.name} = {_toml_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def save(cfg, path):
    with open(path, "w") as fh:
        fh.write(dumps(cfg))
