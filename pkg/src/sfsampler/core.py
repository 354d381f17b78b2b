"""Shared types: time grid, run configuration and the counter-based RNG."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "SFSError",
    "ConfigError",
    "NumericalFailure",
    "PathAbort",
    "TimeGrid",
    "make_time_grid",
    "RngStream",
    "derive_stream",
    "RunConfig",
    "check_beta",
    "SCHEMES",
    "DRIFT_MODES",
    "PATH_STREAM_BASE",
    "MC_STREAM_BASE",
    "AUX_STREAM_BASE",
]

SCHEMES = ("srk", "euler", "ula")
DRIFT_MODES = ("exact", "mc", "empirical")

# Stream index namespaces. Path p draws its Brownian increments from
# PATH_STREAM_BASE + p and its Monte-Carlo drift samples from MC_STREAM_BASE + p.
PATH_STREAM_BASE = 0
MC_STREAM_BASE = 1 << 62
AUX_STREAM_BASE = 1 << 63

_U64 = (1 << 64) - 1


class SFSError(Exception):
    pass


class ConfigError(SFSError, ValueError):
    """Invalid run configuration or argument combination."""


class NumericalFailure(SFSError, ArithmeticError):
    """Too many paths produced non-finite states."""


class PathAbort(SFSError, ArithmeticError):
    """A single path produced a non-finite drift or state."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite value at step {step}")


def check_beta(beta):
    beta = float(beta)
    if not (math.isfinite(beta) and beta > 0):
        raise ConfigError(f"temperature beta must be positive and finite, got {beta}")
    return beta


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, 1] into ``n_steps`` intervals."""

    n_steps: int

    def __post_init__(self):
        if not isinstance(self.n_steps, (int, np.integer)) or self.n_steps < 2:
            raise ConfigError(f"n_steps must be an integer >= 2, got {self.n_steps!r}")

    @property
    def h(self) -> float:
        return 1.0 / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        # n / N rather than n * h so that the last node is exactly 1.
        return np.arange(self.n_steps + 1, dtype=np.float64) / self.n_steps

    def time(self, n: int) -> float:
        return n / self.n_steps


def make_time_grid(n_steps: int) -> TimeGrid:
    return TimeGrid(n_steps)


class RngStream:
    """Standard-normal source keyed by ``(seed, stream)``.

    Backed by the Philox counter-based generator: the 128-bit key is the pair
    of 64-bit words and draws advance the internal counter, so the sequence
    depends only on the key and how many values were consumed before.
    """

    __slots__ = ("seed", "stream", "_gen")

    def __init__(self, seed: int, stream: int):
        self.seed = int(seed) & _U64
        self.stream = int(stream) & _U64
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def standard_normal(self, shape=None) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def choice(self, a, size=None, p=None, replace=True):
        return self._gen.choice(a, size=size, p=p, replace=replace)

    def permutation(self, x):
        return self._gen.permutation(x)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"


def derive_stream(master_seed: int, stream_index: int) -> RngStream:
    return RngStream(master_seed, stream_index)


_CONFIG_KEYS = ("dim", "beta", "n_steps", "scheme", "drift", "mc_samples", "paths", "seed", "out")


@dataclass(frozen=True)
class RunConfig:
    dim: int
    beta: float = 1.0
    n_steps: int = 100
    scheme: str = "srk"
    drift: str = "exact"
    mc_samples: int | None = None
    paths: int = 1000
    seed: int = 0
    out: str | None = None
    # Langevin step size; None means the grid step 1/n_steps.
    ula_step: float | None = None

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigError(f"dim must be a positive integer, got {self.dim}")
        check_beta(self.beta)
        TimeGrid(self.n_steps)
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.drift not in DRIFT_MODES:
            raise ConfigError(f"unknown drift mode {self.drift!r}; expected one of {DRIFT_MODES}")
        if self.drift == "mc" and (self.mc_samples is None or self.mc_samples < 1):
            raise ConfigError("mc_samples >= 1 is required when drift is 'mc'")
        if self.paths < 1:
            raise ConfigError(f"paths must be >= 1, got {self.paths}")
        if not 0 <= int(self.seed) <= _U64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.ula_step is not None and not self.ula_step > 0:
            raise ConfigError(f"ula_step must be positive, got {self.ula_step}")

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.n_steps)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in _CONFIG_KEYS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        for key in data:
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"unknown configuration key {key!r}")
        return cls(**data)

    @classmethod
    def from_json(cls, text_or_path) -> "RunConfig":
        if isinstance(text_or_path, Path):
            text = text_or_path.read_text()
        else:
            text = text_or_path
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ConfigError("run configuration must be a JSON object")
        return cls.from_dict(data)
