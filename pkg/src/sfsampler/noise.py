"""Correlated Brownian increments (dW, dZ) and their fine-to-coarse aggregation.

Over one step of length ``h`` the pair is jointly Gaussian per coordinate with

    Var dW = h,   Var dZ = h**3 / 3,   Cov(dW, dZ) = h**2 / 2,

where ``dZ`` is the time-weighted integral of ``(t_{n+1} - r) dW_r`` over the step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigError

__all__ = ["NoisePair", "sample_pair", "pair_from_normals", "aggregate", "aggregate_increments"]

_INV_2SQRT3 = 1.0 / (2.0 * math.sqrt(3.0))


@dataclass(frozen=True)
class NoisePair:
    dW: np.ndarray
    dZ: np.ndarray
    h: float


def pair_from_normals(xi, eta, h):
    """Map independent standard normals to ``(dW, dZ)`` for step ``h``."""
    if not h > 0:
        raise ConfigError(f"step size must be positive, got {h}")
    xi = np.asarray(xi, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    dW = math.sqrt(h) * xi
    dZ = h ** 1.5 * (0.5 * xi + _INV_2SQRT3 * eta)
    return dW, dZ


def sample_pair(h: float, d: int, rng) -> NoisePair:
    """Draw one increment pair; consumes ``xi`` (d values) then ``eta`` (d values)."""
    if not h > 0:
        raise ConfigError(f"step size must be positive, got {h}")
    if d < 1:
        raise ConfigError(f"dimension must be >= 1, got {d}")
    z = np.asarray(rng.standard_normal((2, d)), dtype=np.float64)
    dW, dZ = pair_from_normals(z[0], z[1], h)
    return NoisePair(dW, dZ, h)


def aggregate_increments(dW, dZ, h_fine, m):
    """Aggregate consecutive groups of ``m`` fine increments along axis -2.

    ``dW`` and ``dZ`` have shape ``(..., n_fine, d)`` with ``n_fine`` divisible
    by ``m``. The coarse dZ picks up each fine dW weighted by the time left
    between that fine interval's right end and the coarse interval's right end.
    """
    dW = np.asarray(dW)
    dZ = np.asarray(dZ)
    *lead, n_fine, d = dW.shape
    if n_fine % m:
        raise ConfigError(f"{n_fine} fine increments cannot be grouped by {m}")
    shape = (*lead, n_fine // m, m, d)
    w = dW.reshape(shape)
    z = dZ.reshape(shape)
    lag = ((m - 1 - np.arange(m)) * h_fine)[:, None]
    dW_c = w.sum(axis=-2)
    dZ_c = (z + lag * w).sum(axis=-2)
    return dW_c, dZ_c


def aggregate(fine_pairs, coarse_h: float) -> NoisePair:
    fine_pairs = list(fine_pairs)
    m = len(fine_pairs)
    if m < 1:
        raise ConfigError("need at least one fine pair to aggregate")
    h_f = fine_pairs[0].h
    for k, p in enumerate(fine_pairs):
        if p.h != h_f:
            raise ConfigError(f"fine pair {k} has step {p.h}, expected {h_f}")
    if not math.isclose(coarse_h, m * h_f, rel_tol=1e-12):
        raise ConfigError(f"coarse step {coarse_h} != {m} x {h_f}")
    if m == 1:
        return fine_pairs[0]
    dW = np.stack([np.atleast_1d(p.dW) for p in fine_pairs])
    dZ = np.stack([np.atleast_1d(p.dZ) for p in fine_pairs])
    dW_c, dZ_c = aggregate_increments(dW, dZ, h_f, m)
    return NoisePair(dW_c[0], dZ_c[0], coarse_h)
