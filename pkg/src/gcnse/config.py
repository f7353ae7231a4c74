"""Experiment configuration: defaults, flat key=value files and overrides.

A config file is a list of ``key = value`` lines. Keys may optionally sit
under a ``[scenario]`` header; the header is cosmetic and every key maps to
one field of :class:`ExperimentConfig`. Lists are comma separated.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, fields

import numpy as np

from .model import TrainConfig, WeightingScheme

SCENARIOS = ("base", "static", "deletion", "densify", "anomaly", "single-relevant", "transition", "periodic")
VARIANTS = ("single", "dual")
_SECTIONS = ("experiment", "scenario")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # scenario
    scenario: str = "base"
    num_nodes: int = 200
    num_classes: int = 4
    num_timesteps: int = 10
    p_intra: float = 0.10
    p_inter: float = 0.005
    # per-step label change probability; None picks the scenario default
    label_drift: float | None = None
    steps: tuple[int, ...] | None = None
    fraction: float = 0.5
    classes: tuple[int, ...] | None = None
    p_intra_hi: float = 0.40
    p_inter_hi: float = 0.10
    boost_between_listed: bool = False
    period: int = 3
    repeats: int = 4
    flip_prob: float = 0.01
    high_prob: float = 0.80
    low_prob: float = 0.20
    # model and training
    scheme: str = "se"
    variant: str = "single"
    lam: float = 0.5
    lr: float = 0.0025
    iterations: int = 500
    dropout: float = 0.5
    reduction: float = 0.5
    # experiment
    runs: int = 20
    runs_per_mask: int = 20
    eval_on: str = "test"
    seed: int = 1
    workers: int | None = None
    out: str = "out"
    min_r: float | None = None
    min_acc: float | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {', '.join(SCENARIOS)}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {', '.join(VARIANTS)}")
        if self.eval_on not in ("test", "val"):
            raise ConfigError("eval_on must be 'test' or 'val'")
        if self.runs < 1 or self.runs_per_mask < 1:
            raise ConfigError("runs and runs_per_mask must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        try:
            self.weighting()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, iterations=self.iterations, dropout=self.dropout, reduction=self.reduction)

    def weighting(self) -> WeightingScheme:
        kind = self.scheme
        if self.variant == "dual":
            if kind not in ("se", "se-dual"):
                raise ValueError("the dual variant needs the learned 'se' scheme")
            kind = "se-dual"
        return WeightingScheme(kind=kind, lam=self.lam)

    def seeds(self) -> tuple[int, int]:
        """(scenario seed, training-run root seed), both derived from ``seed``."""
        a, b = np.random.SeedSequence(self.seed).spawn(2)
        return int(a.generate_state(1)[0]), int(b.generate_state(1)[0])

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v) for f in fields(self)}


def _field_types() -> dict[str, str]:
    return {f.name: str(f.type) for f in fields(ExperimentConfig)}


def _coerce(key: str, raw: str, type_name: str):
    raw = raw.strip()
    optional = "None" in type_name
    if optional and raw.lower() in ("", "none", "null"):
        return None
    try:
        if type_name.startswith("tuple"):
            return tuple(int(x) for x in raw.replace(" ", "").split(",") if x)
        if type_name.startswith("bool"):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if type_name.startswith("int"):
            return int(raw)
        if type_name.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(f"[{_SECTIONS[0]}]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    types = _field_types()
    values = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            norm = key.strip().replace("-", "_")
            if norm not in types:
                raise ConfigError(f"unknown config key {key!r}")
            values[norm] = _coerce(norm, raw, types[norm])
    try:
        return dataclasses.replace(base or ExperimentConfig(), **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | os.PathLike, base: ExperimentConfig | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)
