"""Run configuration: one TOML or JSON file, flag overrides on top.

Every numeric field is validated against the range its owning module
states; a violated range is a malformed config (CLI exit 3).
"""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Malformed or out-of-range run configuration."""


@dataclass
class PathsSection:
    corpus: str | None = None
    queries: str | None = None
    workdir: str | None = None


@dataclass
class SplitSection:
    ratio: float = 0.1
    seed: int = 7


@dataclass
class NegativesSection:
    k: int = 100


@dataclass
class InstancesSection:
    n_shots: int = 3
    seed: int = 0


@dataclass
class DecodeSection:
    beam_width: int = 10


@dataclass
class EvalSection:
    n_candidates: int = 100
    shots: list[int] = field(default_factory=lambda: [3, 10, 20, 50, 100])
    ece_bins: int = 10
    seed: int = 0
    systems: list[str] = field(default_factory=lambda: ["icicle", "bm25"])


@dataclass
class MockSection:
    copy_temperature: float = 0.1
    route_bias: float = 0.0
    noise_seed: int | None = None


@dataclass
class DpoSection:
    beta: float = 0.1


@dataclass
class RunConfig:
    paths: PathsSection = field(default_factory=PathsSection)
    split: SplitSection = field(default_factory=SplitSection)
    negatives: NegativesSection = field(default_factory=NegativesSection)
    instances: InstancesSection = field(default_factory=InstancesSection)
    decode: DecodeSection = field(default_factory=DecodeSection)
    eval: EvalSection = field(default_factory=EvalSection)
    mock: MockSection = field(default_factory=MockSection)
    dpo: DpoSection = field(default_factory=DpoSection)

    def validate(self) -> None:
        if not 0.0 < self.split.ratio < 1.0:
            raise ConfigError(f"split.ratio must be in (0, 1), got {self.split.ratio}")
        if self.negatives.k < 1:
            raise ConfigError("negatives.k must be >= 1")
        if self.instances.n_shots < 1:
            raise ConfigError("instances.n_shots must be >= 1")
        if self.decode.beam_width < 1:
            raise ConfigError("decode.beam_width must be >= 1")
        if self.eval.n_candidates < 1:
            raise ConfigError("eval.n_candidates must be >= 1")
        if self.eval.ece_bins < 1:
            raise ConfigError("eval.ece_bins must be >= 1")
        if list(self.eval.shots) != sorted(self.eval.shots):
            raise ConfigError("eval.shots must be sorted ascending")
        if any(n < 1 for n in self.eval.shots):
            raise ConfigError("eval.shots entries must be >= 1")
        unknown = [s for s in self.eval.systems if s not in ("icicle", "bm25")]
        if unknown:
            raise ConfigError(f"unknown systems {unknown}; pick from icicle, bm25")
        if self.mock.copy_temperature <= 0:
            raise ConfigError("mock.copy_temperature must be positive")
        if self.dpo.beta < 0:
            raise ConfigError("dpo.beta must be >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {
    "paths": PathsSection,
    "split": SplitSection,
    "negatives": NegativesSection,
    "instances": InstancesSection,
    "decode": DecodeSection,
    "eval": EvalSection,
    "mock": MockSection,
    "dpo": DpoSection,
}


def _build_section(cls, data: dict, name: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad [{name}] section: {exc}") from None


def config_from_dict(data: dict) -> RunConfig:
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = data.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"section [{name}] must be a table/object")
        kwargs[name] = _build_section(cls, section, name)
    cfg = RunConfig(**kwargs)
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(path.read_text(encoding="utf-8"))
        else:
            with path.open("rb") as fh:
                data = tomllib.load(fh)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a table/object at top level")
    return config_from_dict(data)
