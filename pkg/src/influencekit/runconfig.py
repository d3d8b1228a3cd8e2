"""Declarative run configuration shared by the CLI commands.

A config can come from a JSON file, be overridden flag by flag, and is
validated before any work starts. The effective (post-override) config is
echoed into every output header together with a short hash, so any result
file names the exact settings that produced it.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any

from .cascades import MarkConfig, MemoryKernel
from .engine import DEFAULT_MAX_EVENTS, CapitalPolicy
from .simulation import DEFAULT_EXPONENT


class ConfigError(ValueError):
    """Bad run configuration."""


@dataclass
class RunConfig:
    # cascade model
    kernel_type: str = "exponential"
    kernel_r: float = 1.0
    kernel_c: float = 1.0  # power_law only
    mark_exponent: float = 0.0
    # conductance
    lens: str = "none"  # none | topological | following | lexical
    beta: float = 0.18
    top_k: int = 1000
    # capital split; None disables the mechanism
    alpha: float | None = 0.02
    max_events: int = DEFAULT_MAX_EVENTS
    # simulation
    n_targets: int = 500
    budget: int = 30_000
    noise: float = 1.22
    exponent: float = DEFAULT_EXPONENT
    runs_cap: int = 1000
    normalization: str = "raw"
    # shared
    seed: int = 0
    threads: int = 0  # 0 = available parallelism

    @staticmethod
    def load(path: str | None, overrides: dict[str, Any]) -> "RunConfig":
        """Config file values first, explicit flags on top.

        `overrides` must contain only keys the caller really wants to set;
        a present None (e.g. alpha) is itself a meaningful override.
        """
        values: dict[str, Any] = {}
        if path is not None:
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    raw = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(raw, dict):
                raise ConfigError(f"config {path} must hold a JSON object")
            known = {f.name for f in fields(RunConfig)}
            unknown = set(raw) - known
            if unknown:
                raise ConfigError(f"config {path} has unknown keys: {sorted(unknown)}")
            values.update(raw)
        values.update(overrides)
        try:
            cfg = RunConfig(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.kernel_type not in ("exponential", "power_law"):
            raise ConfigError(f"unknown kernel type {self.kernel_type!r}")
        if self.kernel_r <= 0:
            raise ConfigError(f"kernel decay r must be > 0, got {self.kernel_r}")
        if self.kernel_type == "power_law" and self.kernel_c <= 0:
            raise ConfigError(f"power_law cutoff c must be > 0, got {self.kernel_c}")
        if self.lens not in ("none", "topological", "following", "lexical"):
            raise ConfigError(f"unknown conductance lens {self.lens!r}")
        if not (0.0 <= self.beta <= 1.0):
            raise ConfigError(f"beta must be in [0, 1], got {self.beta}")
        if self.alpha is not None and not (0.0 < self.alpha < 1.0):
            raise ConfigError(f"alpha must be in (0, 1) or disabled, got {self.alpha}")
        if self.threads < 0:
            raise ConfigError(f"threads must be >= 0, got {self.threads}")
        if self.normalization not in ("raw", "log", "percentile"):
            raise ConfigError(f"unknown normalization {self.normalization!r}")

    def kernel(self) -> MemoryKernel:
        if self.kernel_type == "exponential":
            return MemoryKernel.exponential(self.kernel_r)
        return MemoryKernel.power_law(self.kernel_r, self.kernel_c)

    def marks(self) -> MarkConfig:
        return MarkConfig(self.mark_exponent)

    def policy(self) -> CapitalPolicy:
        if self.alpha is None:
            return CapitalPolicy.none()
        return CapitalPolicy.social_capital(self.alpha)

    def effective_threads(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)

    def as_dict(self) -> dict[str, Any]:
        # thread count changes how fast results arrive, never what they are,
        # so it stays out of the echoed config and its hash
        d = asdict(self)
        d.pop("threads")
        return d

    def canonical_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()[:12]

    def header_lines(self, command: str) -> list[str]:
        return [
            f"influencekit {command}",
            f"config_hash={self.config_hash()}",
            f"config={self.canonical_json()}",
        ]
