"""Layered run configuration: defaults <- preset <- JSON file <- command-line flags."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .protocol import CHANNEL_VARIANTS, CX_CONVENTIONS, FOURIER_CONVENTIONS, ProtocolConfig, uniform_grid
from .training import SAMPLE_MODES, TrainConfig


@dataclass
class RunConfig:
    d: list[int] = field(default_factory=lambda: [8])
    d_prime: int | None = None
    d_prime_list: list[int] | None = None
    k: int = 4
    channel_variant: str = "literal-unitary"
    ansatz_depth: int = 4
    hidden: int = 1024
    batch: int = 512
    outer_iters: int = 10
    decoder_steps: int = 100
    estimator_steps: int = 100
    ansatz_steps: int = 100
    lr_theta: float = 1e-3
    lr_phi: float = 1e-3
    lr_mu: float = 1e-2
    w_x: float = 1.0
    w_m: float = 1.0
    w_acc: float = 1.0
    w_succ: float = 1.0
    sample_mode: str = "exact"
    shots: int = 1
    objective_cap: int = 4096
    mu_init_scale: float = 0.1
    final_refit: bool = True
    fourier_convention: str = "inverse"
    cx_convention: str = "subtract"
    seeds: list[int] = field(default_factory=lambda: [0])
    jobs: int = 1
    out: str = "results"
    single: bool = False
    save_params: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    def d_primes(self, d: int) -> list[int]:
        if self.single or self.d_prime is not None:
            return [self.d_prime if self.d_prime is not None else d]
        if self.d_prime_list is not None:
            return sorted(set(self.d_prime_list))
        return list(range(1, d + 1))

    def protocol(self, d: int, d_prime: int | None = None) -> ProtocolConfig:
        return ProtocolConfig(
            d=d,
            d_prime=d if d_prime is None else d_prime,
            grid=uniform_grid(self.k),
            channel_variant=self.channel_variant,
            ansatz_depth=self.ansatz_depth,
            fourier_convention=self.fourier_convention,
            cx_convention=self.cx_convention,
        )

    def training(self, seed: int = 0) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        values = {k: v for k, v in self.to_dict().items() if k in names}
        return TrainConfig(**values, seed=seed)


PRESETS = {
    # same code path as a full run, just smaller
    "fast": {"d": [4], "hidden": 128, "batch": 128, "outer_iters": 10, "lr_mu": 0.2},
    "paper": {"d": [8, 10], "hidden": 1024, "batch": 512, "outer_iters": 10, "lr_theta": 1e-3,
              "lr_phi": 1e-3, "lr_mu": 1e-2, "decoder_steps": 100, "estimator_steps": 100,
              "ansatz_steps": 100, "w_x": 1.0, "w_m": 1.0, "k": 4},
}

_INT, _FLOAT, _STR, _BOOL, _INTLIST = "int", "float", "str", "bool", "int-list"
_KINDS = {
    "d": _INTLIST, "d_prime": _INT, "d_prime_list": _INTLIST, "k": _INT, "channel_variant": _STR,
    "ansatz_depth": _INT, "hidden": _INT, "batch": _INT, "outer_iters": _INT, "decoder_steps": _INT,
    "estimator_steps": _INT, "ansatz_steps": _INT, "lr_theta": _FLOAT, "lr_phi": _FLOAT, "lr_mu": _FLOAT,
    "w_x": _FLOAT, "w_m": _FLOAT, "w_acc": _FLOAT, "w_succ": _FLOAT, "sample_mode": _STR, "shots": _INT,
    "objective_cap": _INT, "mu_init_scale": _FLOAT, "final_refit": _BOOL, "fourier_convention": _STR,
    "cx_convention": _STR, "seeds": _INTLIST, "jobs": _INT, "out": _STR, "single": _BOOL,
    "save_params": _BOOL,
}
_NULLABLE = {"d_prime", "d_prime_list"}
_CHOICES = {
    "channel_variant": CHANNEL_VARIANTS,
    "sample_mode": SAMPLE_MODES,
    "fourier_convention": FOURIER_CONVENTIONS,
    "cx_convention": CX_CONVENTIONS,
}


def _coerce(key: str, value):
    if key not in _KINDS:
        raise ConfigError(key, "unknown configuration key")
    kind = _KINDS[key]
    if value is None and key in _NULLABLE:
        return None
    if kind == _INTLIST:
        if isinstance(value, int) and not isinstance(value, bool):
            value = [value]
        if not isinstance(value, list) or not value or not all(
                isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError(key, f"expected a non-empty list of integers, got {value!r}")
        return list(value)
    if kind == _INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if kind == _FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if kind == _BOOL:
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true/false, got {value!r}")
        return value
    if not isinstance(value, str):
        raise ConfigError(key, f"expected a string, got {value!r}")
    if key in _CHOICES and value not in _CHOICES[key]:
        raise ConfigError(key, f"must be one of {', '.join(_CHOICES[key])}, got {value!r}")
    return value


def validate(cfg: RunConfig) -> RunConfig:
    if any(d < 2 for d in cfg.d):
        raise ConfigError("d", "qudit dimension must be >= 2")
    d_min = min(cfg.d)
    if cfg.d_prime is not None and not 1 <= cfg.d_prime <= d_min:
        raise ConfigError("d_prime", f"must lie in 1..d (d={d_min}), got {cfg.d_prime}")
    if cfg.d_prime_list is not None and any(not 1 <= v <= d_min for v in cfg.d_prime_list):
        raise ConfigError("d_prime_list", f"entries must lie in 1..d (d={d_min}), got {cfg.d_prime_list}")
    positive = ("k", "hidden", "shots", "objective_cap", "jobs", "lr_theta", "lr_phi", "lr_mu")
    for key in positive:
        if getattr(cfg, key) <= 0:
            raise ConfigError(key, "must be > 0")
    non_negative = ("ansatz_depth", "batch", "outer_iters", "decoder_steps", "estimator_steps",
                    "ansatz_steps", "w_x", "w_m", "w_acc", "w_succ", "mu_init_scale")
    for key in non_negative:
        if getattr(cfg, key) < 0:
            raise ConfigError(key, "must be >= 0")
    return cfg


def load_file(path) -> dict:
    """Read a flat JSON config, or the ``config`` section of a run manifest."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a JSON object")
    if "artifact_version" in data and isinstance(data.get("config"), dict):
        return data["config"]
    return data


def resolve(file_values: dict | None = None, flag_values: dict | None = None,
            preset: str | None = None) -> RunConfig:
    merged = RunConfig().to_dict()
    layers = [PRESETS[preset] if preset else {}, file_values or {}, flag_values or {}]
    for layer in layers:
        for key, value in layer.items():
            merged[key] = _coerce(key, value)
    return validate(RunConfig(**merged))


def parse_config(path=None, flags: dict | None = None, preset: str | None = None) -> RunConfig:
    return resolve(load_file(path) if path else None, flags, preset)
