import os
from dataclasses import dataclass, fields, replace
from typing import Annotated, Any, Dict, Mapping, Optional, Tuple, get_args, get_origin, get_type_hints

from annotated_types import Ge, Gt, Le, Lt, MinLen
from dotenv import dotenv_values, load_dotenv

from .errors import ConfigError

load_dotenv()


@dataclass(frozen=True)
class Settings:
    epsilon: float
    kappa: float
    seed: int
    workers: int
    log_dir: Optional[str]
    log_level: str


def get_settings() -> Settings:
    return Settings(
        epsilon=float(os.getenv("CBSA_EPSILON", "0.5")),
        kappa=float(os.getenv("CBSA_KAPPA", "1.0")),
        seed=int(os.getenv("CBSA_SEED", "0")),
        workers=int(os.getenv("CBSA_WORKERS", "1")),
        log_dir=os.getenv("CBSA_LOG_DIR"),
        log_level=os.getenv("CBSA_LOG_LEVEL", "INFO"),
    )


OPERATOR_NAMES = ("exact", "softmax", "mssa", "linear", "channel", "agent")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: Annotated[int, Ge(0)] = 0
    epsilon: Annotated[float, Gt(0)] = 0.5
    kappa: float = 1.0
    d: Annotated[int, Gt(0)] = 12
    K: Annotated[int, Gt(0)] = 3
    m: Annotated[int, Gt(0)] = 4
    N: Annotated[int, Gt(0)] = 16
    iterations: Annotated[int, Ge(0)] = 1024
    layers: Annotated[int, Ge(0)] = 8
    classes: Annotated[int, Gt(0)] = 10
    samples_per_class: Annotated[int, Gt(0)] = 200
    noise_std: Annotated[float, Ge(0)] = 0.1
    op: str = "softmax"
    fig5_mode: bool = False
    n_values: Annotated[Tuple[int, ...], MinLen(1)] = (196,)
    grad_instances: Annotated[int, Gt(0)] = 20
    grad_tolerance: Annotated[float, Gt(0), Lt(1)] = 1e-5
    corrupt_gradient: Annotated[float, Ge(0), Le(1)] = 0.0
    workers: Annotated[int, Gt(0)] = 1
    output_path: str = "-"

    @property
    def p(self) -> int:
        return self.d // self.K


COMMAND_PRESETS: Dict[str, Dict[str, Any]] = {
    "demo-synthetic": {
        "d": 3, "K": 1, "epsilon": 0.15, "kappa": 1.5, "noise_std": 0.5,
        "classes": 10, "samples_per_class": 200, "iterations": 1024, "op": "linear",
        "output_path": "synthetic_trace.csv",
    },
    "trace-coding-rate": {
        "d": 24, "K": 6, "m": 4, "N": 32, "layers": 8, "op": "exact",
        "output_path": "coding_rate_trace.csv",
    },
    "flops": {
        "d": 384, "K": 6, "m": 64,
        "n_values": (64, 128, 196, 256, 576, 1024, 2304, 4096),
        "output_path": "flops.csv",
    },
    "grad-check": {"output_path": "-"},
    "variants-check": {"d": 12, "K": 3, "m": 4, "N": 16, "epsilon": 0.5, "output_path": "-"},
}


def _field_types() -> Dict[str, Any]:
    return get_type_hints(ExperimentConfig, include_extras=True)


def _base_type(hint: Any) -> Any:
    if get_origin(hint) is Annotated:
        return get_args(hint)[0]
    return hint


def _coerce(key: str, raw: Any, hint: Any) -> Any:
    base = _base_type(hint)
    if not isinstance(raw, str):
        if base is float and isinstance(raw, int):
            return float(raw)
        if get_origin(base) is tuple and isinstance(raw, (list, tuple)):
            return tuple(int(v) for v in raw)
        return raw
    text = raw.strip()
    try:
        if base is bool:
            if text.lower() in {"1", "true", "yes", "on"}:
                return True
            if text.lower() in {"0", "false", "no", "off"}:
                return False
            raise ValueError(text)
        if base is int:
            return int(text)
        if base is float:
            return float(text)
        if get_origin(base) is tuple:
            return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r} as {getattr(base, '__name__', base)}") from None
    return text


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    hints = _field_types()
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        hint = hints[f.name]
        if get_origin(hint) is not Annotated:
            continue
        for constraint in get_args(hint)[1:]:
            if isinstance(constraint, Gt) and not value > constraint.gt:
                raise ConfigError(f.name, f"must be > {constraint.gt}, got {value}")
            if isinstance(constraint, Ge) and not value >= constraint.ge:
                raise ConfigError(f.name, f"must be >= {constraint.ge}, got {value}")
            if isinstance(constraint, Lt) and not value < constraint.lt:
                raise ConfigError(f.name, f"must be < {constraint.lt}, got {value}")
            if isinstance(constraint, Le) and not value <= constraint.le:
                raise ConfigError(f.name, f"must be <= {constraint.le}, got {value}")
            if isinstance(constraint, MinLen) and len(value) < constraint.min_length:
                raise ConfigError(f.name, f"needs at least {constraint.min_length} entries")
        if isinstance(value, tuple) and any(v <= 0 for v in value):
            raise ConfigError(f.name, "entries must be positive")
    if cfg.d % cfg.K != 0:
        raise ConfigError("K", f"must divide d={cfg.d}")
    if cfg.op not in OPERATOR_NAMES:
        raise ConfigError("op", f"unknown operator {cfg.op!r}; expected one of {', '.join(OPERATOR_NAMES)}")
    return cfg


def read_config_file(path: str) -> Dict[str, str]:
    """Parse a KEY=VALUE file; keys match ExperimentConfig fields case-insensitively."""
    if not os.path.exists(path):
        raise ConfigError("config", f"file not found: {path}")
    known = {f.name.lower(): f.name for f in fields(ExperimentConfig)}
    values: Dict[str, str] = {}
    for key, raw in dotenv_values(path).items():
        name = known.get(key.strip().lower())
        if name is None:
            raise ConfigError(key, f"unknown key in {path}")
        if raw is not None:
            values[name] = raw
    return values


def load_experiment_config(
    command: Optional[str] = None,
    config_path: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    settings: Optional[Settings] = None,
) -> ExperimentConfig:
    """Merge layers: flag overrides > config file > command preset > environment > defaults."""
    settings = settings or get_settings()
    hints = _field_types()

    layers: Dict[str, Any] = {
        "seed": settings.seed,
        "epsilon": settings.epsilon,
        "kappa": settings.kappa,
        "workers": settings.workers,
    }
    if command is not None:
        layers.update(COMMAND_PRESETS.get(command, {}))
    if config_path:
        layers.update(read_config_file(config_path))
    for key, value in (overrides or {}).items():
        if value is not None:
            layers[key] = value

    coerced = {key: _coerce(key, value, hints[key]) for key, value in layers.items()}
    cfg = replace(ExperimentConfig(), **coerced)
    if cfg.fig5_mode:
        cfg = replace(cfg, kappa=1.0)
    return validate_config(cfg)
