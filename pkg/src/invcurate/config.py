"""Run configuration shared by the pipeline and evaluation commands.

Precedence when building a config: command-line flag, then environment
variable (``INVCURATE_<FIELD>``), then JSON config file, then default.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields

from .llm import LLMConfig
from .verify import DEFAULT_TIMEOUT, BuiltinBackend, ExternalBackend, ExternalBackendConfig

ENV_PREFIX = "INVCURATE_"


@dataclass
class BuiltinConfig:
    max_states: int = 100_000
    max_steps: int = 100_000
    clock: str = "wall"
    trace_seconds: float = 0.001

    @classmethod
    def from_dict(cls, d: dict) -> "BuiltinConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown builtin backend keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ToolConfig:
    backend: str = "builtin"
    builtin: BuiltinConfig = field(default_factory=BuiltinConfig)
    external: ExternalBackendConfig = field(default_factory=ExternalBackendConfig)
    llm: LLMConfig = field(default_factory=LLMConfig)
    eta: int = 64
    n_candidates: int = 4
    timeout: float = DEFAULT_TIMEOUT
    k: int = 3
    hard_threshold: float = 15.0
    workers: int = 4
    out_dir: str = "out"
    seed: int = 0
    val_fraction: float = 0.2
    grading_runs: int = 1
    keep_artifacts: str | None = None
    serial: bool = False

    _NESTED = ("builtin", "external", "llm")

    def validate(self) -> "ToolConfig":
        if self.backend not in ("builtin", "external"):
            raise ValueError(f"backend must be 'builtin' or 'external', not {self.backend!r}")
        if self.builtin.clock not in ("wall", "trace"):
            raise ValueError("builtin.clock must be 'wall' or 'trace'")
        for name in ("n_candidates", "timeout", "k", "hard_threshold", "workers", "grading_runs"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must lie in [0, 1)")
        return self

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in self._NESTED:
                v = {k: getattr(v, k) for k in v.__dataclass_fields__}
            out[f.name] = v
        return out

    def make_backend(self):
        if self.backend == "external":
            if self.keep_artifacts:
                self.external.keep_artifacts = self.keep_artifacts
            return ExternalBackend(self.external)
        b = self.builtin
        return BuiltinBackend(b.max_states, b.max_steps, b.clock, b.trace_seconds)


def _coerce(value: str, like):
    if isinstance(like, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def load_config(path: str | None = None, overrides: dict | None = None,
                environ: dict | None = None) -> ToolConfig:
    """Merge defaults, an optional JSON file, environment and overrides."""
    cfg = ToolConfig()
    if path:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        for key, value in data.items():
            if key == "builtin":
                cfg.builtin = BuiltinConfig.from_dict(value)
            elif key == "external":
                cfg.external = ExternalBackendConfig.from_dict(value)
            elif key == "llm":
                cfg.llm = LLMConfig.from_dict(value)
            elif key in cfg.__dataclass_fields__:
                setattr(cfg, key, value)
            else:
                raise ValueError(f"unknown config key {key!r}")
    env = os.environ if environ is None else environ
    defaults = ToolConfig()
    for f in fields(cfg):
        if f.name in ToolConfig._NESTED:
            continue
        raw = env.get(ENV_PREFIX + f.name.upper())
        if raw is not None:
            like = getattr(defaults, f.name)
            setattr(cfg, f.name, _coerce(raw, like if like is not None else ""))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if "." in key:
            section, attr = key.split(".", 1)
            setattr(getattr(cfg, section), attr, value)
        else:
            setattr(cfg, key, value)
    return cfg.validate()
