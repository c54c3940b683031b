"""Line-oriented run configuration: ``section.key = value`` entries.

Sections: train, schedule, time_dist, loss, sampler, model.  Blank lines and
``#`` comments are ignored.  Unknown sections or keys are rejected with the
offending line number, as are malformed values.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .net import NetConfig
from .sampler import SamplerConfig
from .schedule import GlobalTimeDist, Scheduler


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 20_000
    batch_size: int = 32
    lr: float = 3e-4
    optimizer: str = "adam"  # "adam" | "sgd"
    cond_dropout_prob: float = 0.1
    n_start: int = 1
    seed: int = 0
    ctx_frames_max: int = 2  # condition on a clean prefix of 1..max frames; 0 disables

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not (0.0 <= self.cond_dropout_prob < 1.0):
            raise ValueError("cond_dropout_prob must lie in [0, 1)")
        if self.n_start < 1:
            raise ValueError("n_start must be >= 1")
        if min(self.steps, self.batch_size) < 1 or self.lr < 0:
            raise ValueError("steps/batch_size must be positive, lr nonnegative")


@dataclass(frozen=True)
class LossConfig:
    w_ins: float = 1.0
    elbo_weighted: bool = False


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    scheduler: Scheduler = field(default_factory=Scheduler)
    time_dist: GlobalTimeDist = field(default_factory=GlobalTimeDist)
    loss: LossConfig = field(default_factory=LossConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    model: NetConfig = field(default_factory=NetConfig)

    def sampler_config(self, **overrides) -> SamplerConfig:
        """Sampler config with this run's scheduler attached."""
        return replace(self.sampler, scheduler=self.scheduler, **overrides)


_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}

# section -> (dataclass attr on RunConfig, key -> python type)
_SCHEMA = {
    "train": {
        "steps": int,
        "batch_size": int,
        "lr": float,
        "optimizer": str,
        "cond_dropout_prob": float,
        "n_start": int,
        "seed": int,
        "ctx_frames_max": int,
    },
    "schedule": {"family": str, "power_p": float},
    "time_dist": {"kind": str, "mu": float, "sigma": float},
    "loss": {"w_ins": float, "elbo_weighted": bool},
    "sampler": {
        "h": float,
        "n_start": int,
        "thinning": str,
        "exact_integral": bool,
        "w_s": float,
        "gamma": float,
        "max_len": int,
        "max_inserts_per_slot_step": int,
        "seed": int,
    },
    "model": {"hidden": int, "blocks": int, "mlp_ratio": int},
}

_SECTION_ATTR = {
    "train": "train",
    "schedule": "scheduler",
    "time_dist": "time_dist",
    "loss": "loss",
    "sampler": "sampler",
    "model": "model",
}


def _convert(raw: str, typ, lineno: int):
    raw = raw.strip()
    try:
        if typ is bool:
            if raw.lower() not in _BOOL:
                raise ValueError(raw)
            return _BOOL[raw.lower()]
        return typ(raw)
    except ValueError:
        raise ConfigError(f"line {lineno}: cannot parse {raw!r} as {typ.__name__}") from None


def parse_config(text: str) -> RunConfig:
    values: dict[str, dict[str, object]] = {s: {} for s in _SCHEMA}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key.count(".") != 1:
            raise ConfigError(f"line {lineno}: key must look like 'section.key', got {key!r}")
        section, name = key.split(".")
        if section not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown section {section!r}")
        if name not in _SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key {name!r} in section {section!r}")
        if name in values[section]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[section][name] = _convert(raw, _SCHEMA[section][name], lineno)

    cfg = RunConfig()
    try:
        for section, attr in _SECTION_ATTR.items():
            if values[section]:
                cfg = replace(cfg, **{attr: replace(getattr(cfg, attr), **values[section])})
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


def config_field_names(section: str) -> tuple[str, ...]:
    return tuple(_SCHEMA[section])
