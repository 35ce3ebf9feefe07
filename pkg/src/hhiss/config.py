"""Run configuration: INI file sections plus ``section.key=value`` overrides.

Sections are ``[train]`` (training options), ``[split]`` (evaluation
protocol), ``[synth]`` (synthetic benchmark generator) and ``[bench]``.
Every value left unset keeps its default.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .synthgen import SyntheticSpec
from .trainer import METHODS, TrainConfig


@dataclass(frozen=True)
class SplitConfig:
    protocol: str = "none"  # none | holdout | kfold
    n_train: int = 12
    k: int = 5
    fold: int = 0
    key: str = "subject"
    seed: int = 0

    def __post_init__(self):
        if self.protocol not in ("holdout", "kfold", "none"):
            raise ConfigError(f"unknown split protocol {self.protocol!r}")
        if self.key not in ("subject", "session"):
            raise ConfigError(f"split key must be subject or session, got {self.key!r}")


@dataclass(frozen=True)
class BenchConfig:
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    methods: tuple[str, ...] = ("erm", "hhiss")
    margin: float = 0.05
    oracle_slack: float = 0.02
    budget_s: float = 900.0

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}")
        if not self.seeds:
            raise ConfigError("bench needs at least one seed")


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    synth: SyntheticSpec = field(default_factory=SyntheticSpec)
    bench: BenchConfig = field(default_factory=BenchConfig)

    def to_dict(self) -> dict:
        return {s: asdict(getattr(self, s)) for s in _SECTIONS}


_SECTIONS = {"train": TrainConfig, "split": SplitConfig, "synth": SyntheticSpec, "bench": BenchConfig}


def _coerce(default, text: str):
    text = text.strip()
    try:
        if isinstance(default, bool):
            v = text.lower()
            if v not in configparser.ConfigParser.BOOLEAN_STATES:
                raise ValueError(text)
            return configparser.ConfigParser.BOOLEAN_STATES[v]
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            items = [t.strip() for t in text.split(",") if t.strip()]
            kind = type(default[0]) if default else str
            return tuple(kind(t) for t in items)
    except ValueError:
        raise ConfigError(f"cannot parse {text!r} as {type(default).__name__}") from None
    return text


def _apply(section_obj, values: dict[str, str], section: str):
    names = {f.name for f in fields(section_obj)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    kw = {k: _coerce(getattr(section_obj, k), v) for k, v in values.items()}
    try:
        return replace(section_obj, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def parse_override(text: str) -> tuple[str, str, str]:
    key, sep, value = text.partition("=")
    section, dot, name = key.strip().partition(".")
    if not sep or not dot or section not in _SECTIONS:
        raise ConfigError(f"override must look like section.key=value with section in {sorted(_SECTIONS)}: {text!r}")
    return section, name.strip(), value


def load_run_config(path=None, overrides=()) -> RunConfig:
    """Defaults, then the INI file at ``path``, then ``overrides`` in order."""
    values: dict[str, dict[str, str]] = {s: {} for s in _SECTIONS}
    if path is not None:
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            with open(Path(path)) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        for s in cp.sections():
            if s not in _SECTIONS:
                raise ConfigError(f"unknown config section [{s}]")
            values[s].update(cp[s])
    for o in overrides:
        s, k, v = parse_override(o)
        values[s][k] = v
    return RunConfig(**{s: _apply(cls(), values[s], s) for s, cls in _SECTIONS.items()})


def format_run_config(cfg: RunConfig) -> str:
    """INI text that :func:`load_run_config` reads back to ``cfg``."""
    lines = []
    for s, d in cfg.to_dict().items():
        lines.append(f"[{s}]")
        for k, v in d.items():
            if isinstance(v, (tuple, list)):
                v = ", ".join(str(x) for x in v)
            lines.append(f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)
