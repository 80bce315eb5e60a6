"""Campaign configuration."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .mutation import MutationConfig
from .transport import TargetConfig

SNIPPET = "snippet"
NOSNIPPET = "nosnippet"


class ConfigError(ValueError):
    pass


@dataclass
class CampaignConfig:
    rng_seed: int
    target: TargetConfig = field(default_factory=TargetConfig)
    corpus_path: str | None = None
    mode: str = SNIPPET
    time_budget_s: float | None = None
    exec_budget: int | None = None
    mutation: MutationConfig = field(default_factory=MutationConfig)
    out_dir: str | None = None
    # "host:port" for a socket target, or "inproc:<profile>" for the loopback mock
    target_spec: str | None = None

    def __post_init__(self):
        if self.mode not in (SNIPPET, NOSNIPPET):
            raise ConfigError(f"mode must be snippet or nosnippet, got {self.mode!r}")
        if not isinstance(self.rng_seed, int) or isinstance(self.rng_seed, bool):
            raise ConfigError("rng_seed must be an integer")
        if isinstance(self.target, dict):
            self.target = TargetConfig.from_dict(self.target)
        if isinstance(self.mutation, dict):
            self.mutation = MutationConfig.from_dict(self.mutation)
        for name in ("time_budget_s", "exec_budget"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigError(f"{name} must be non-negative")

    def to_dict(self) -> dict:
        return {
            "rng_seed": self.rng_seed,
            "target": self.target.to_dict(),
            "corpus_path": self.corpus_path,
            "mode": self.mode,
            "time_budget_s": self.time_budget_s,
            "exec_budget": self.exec_budget,
            "mutation": self.mutation.to_dict(),
            "out_dir": self.out_dir,
            "target_spec": self.target_spec,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        if "rng_seed" not in d:
            raise ConfigError("rng_seed is mandatory")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path) -> "CampaignConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
