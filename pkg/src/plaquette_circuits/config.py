"""Experiment configuration: a flat ``key = value`` text format.

Every experiment kind declares its keys with a type and default.  Parsing is
strict: unknown keys, duplicate keys and malformed values raise
:class:`ConfigError` naming the offending key.  ``to_text`` writes a
normalized echo that parses back to an identical configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError

__all__ = ["ExperimentConfig", "KINDS", "parse_config", "load_config"]


def _int_list(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in str(s).split(",") if v.strip())


def _float_list(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in str(s).split(",") if v.strip())


def _fmt(v: Any) -> str:
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# name -> (parser, default)
Spec = dict[str, tuple[Callable[[str], Any], Any]]

COMMON: Spec = {
    "seed": (int, 0),
    "ensemble": (int, 1),
    "output_dir": (str, "results"),
}

KINDS: dict[str, Spec] = {
    "circuit-trajectory": {
        "L": (int, 100),
        "t_max": (int, 1000),
        "p": (float, 0.1),
        "init": (str, "x"),
        "perturbation": (str, "none"),
        "record": (str, "log:100"),
        "fit_t_min": (float, 0.0),
        "fit_t_max": (float, 0.0),
    },
    "mipt-sweep": {
        "L_grid": (_int_list, (8, 12, 16)),
        "p_grid": (_float_list, (0.1, 0.4)),
        "T": (int, 0),
        "initial": (str, "fixed-zero"),
    },
    "renyi-classical": {
        "L": (int, 8),
        "T": (int, 8),
        "p": (float, 0.1),
        "initial": (str, "fixed-zero"),
        "region_cells": (int, -1),
        "method": (str, "both"),
    },
    "kw-check": {
        "L": (int, 3),
        "T": (int, 4),
        "p": (float, 0.3),
        "beta": (float, 1.0),
        "replicas": (int, 1),
        "initial": (str, "fixed-zero"),
    },
    "finite-beta-sweep": {
        "L": (int, 6),
        "T": (int, 5),
        "p": (float, 0.1),
        "beta_grid": (_float_list, (0.5, 1.0, 2.0)),
        "initial": (str, "fixed-zero"),
    },
    "mcmc-quench": {
        "L": (int, 64),
        "p": (float, 0.0),
        "beta": (float, 4.0),
        "t_max": (float, 1e4),
        "samples": (int, 50),
        "t_min": (float, 0.1),
    },
    "collapse": {
        "L": (int, 64),
        "p": (float, 0.0),
        "beta_grid": (_float_list, (4.0, 6.0)),
        "t_max": (float, 1e5),
        "samples": (int, 50),
        "t_min": (float, 0.1),
        "collapse_t_min": (float, 1.0),
    },
    "support-stats": {
        "L": (int, 40),
        "T": (int, 80),
        "p_grid": (_float_list, (0.1, 0.4)),
        "initial": (str, "free"),
        "measure": (str, "support"),
    },
}

CHOICES = {
    "initial": ("fixed-zero", "free"),
    "method": ("replica", "groups", "both"),
    "measure": ("support", "localization"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    params: dict = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        return self.params[key]

    @property
    def seed(self) -> int:
        return self.params["seed"]

    @property
    def ensemble(self) -> int:
        return self.params["ensemble"]

    @property
    def output_dir(self) -> str:
        return self.params["output_dir"]

    def to_text(self) -> str:
        lines = [f"kind = {self.kind}"]
        lines += [f"{k} = {_fmt(v)}" for k, v in sorted(self.params.items())]
        return "\n".join(lines) + "\n"

    def replace(self, **changes) -> "ExperimentConfig":
        return build_config(self.kind, {**{k: _fmt(v) for k, v in self.params.items()},
                                        **{k: _fmt(v) for k, v in changes.items()}})


def _validate(kind: str, params: dict) -> None:
    for key, allowed in CHOICES.items():
        if key in params and params[key] not in allowed:
            raise ConfigError(f"{kind}.{key}: {params[key]!r} not in {allowed}")
    if params["ensemble"] < 1:
        raise ConfigError(f"{kind}.ensemble: must be at least 1")
    for key in ("p",):
        if key in params and not 0.0 <= params[key] <= 1.0:
            raise ConfigError(f"{kind}.{key}: must lie in [0, 1]")
    for key in ("p_grid",):
        if key in params:
            if not params[key]:
                raise ConfigError(f"{kind}.{key}: grid is empty")
            if any(not 0.0 <= v <= 1.0 for v in params[key]):
                raise ConfigError(f"{kind}.{key}: values must lie in [0, 1]")
    for key in ("L_grid", "beta_grid"):
        if key in params and not params[key]:
            raise ConfigError(f"{kind}.{key}: grid is empty")


def build_config(kind: str, raw: dict[str, str]) -> ExperimentConfig:
    if kind not in KINDS:
        raise ConfigError(f"kind: unknown experiment kind {kind!r}; expected one of {sorted(KINDS)}")
    spec = {**COMMON, **KINDS[kind]}
    params = {}
    for key, value in raw.items():
        if key not in spec:
            raise ConfigError(f"{kind}.{key}: unknown key")
        parser = spec[key][0]
        try:
            params[key] = parser(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{kind}.{key}: cannot parse {value!r}") from exc
    for key, (_, default) in spec.items():
        params.setdefault(key, default)
    _validate(kind, params)
    return ExperimentConfig(kind, params)


def parse_config(text: str, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) plus overrides."""
    raw: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        raw[key] = value
    raw.update(overrides or {})
    kind = raw.pop("kind", None)
    if kind is None:
        raise ConfigError("kind: missing")
    return build_config(kind, raw)


def load_config(path, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, overrides)
