"""Sample-quality and convergence metrics."""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .core import AUX_STREAM_BASE, ConfigError, derive_stream

__all__ = [
    "ConvergenceTable",
    "W2Estimate",
    "strong_rmse",
    "fit_order",
    "w2_exact_1d",
    "w2_sliced",
    "w2_assignment",
    "mode_mass",
    "mean_nn_distance",
    "required_budget",
]


def _matrix(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ConfigError(f"{name} must be a (n, d) sample matrix, got shape {a.shape}")
    return a


def strong_rmse(ref_terminals, coarse_terminals) -> float:
    """Root-mean-square distance between index-aligned terminal states."""
    a = _matrix(ref_terminals, "reference")
    b = _matrix(coarse_terminals, "coarse")
    if a.shape != b.shape:
        raise ConfigError(f"coupled terminals must align: {a.shape} vs {b.shape}")
    diff = a - b
    return float(math.sqrt(np.mean((diff * diff).sum(axis=1))))


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)  # (h, rmse, paths)
    slope: float | None = None
    intercept: float | None = None

    def add(self, h, rmse, paths):
        if rmse < 0:
            raise ConfigError("rmse must be non-negative")
        self.rows.append((float(h), float(rmse), int(paths)))

    def fit(self):
        self.slope, self.intercept = fit_order(self)
        return self.slope, self.intercept

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("h,rmse,paths\n")
        for h, rmse, paths in sorted(self.rows, reverse=True):
            buf.write(f"{h!r},{rmse!r},{paths}\n")
        if self.slope is not None:
            buf.write(f"# slope={self.slope!r} intercept={self.intercept!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ConvergenceTable":
        table = cls()
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0].strip() != "h,rmse,paths":
            raise ConfigError("convergence CSV must start with the header 'h,rmse,paths'")
        for ln in lines[1:]:
            if ln.startswith("#"):
                for part in ln[1:].split():
                    key, _, val = part.partition("=")
                    if key in ("slope", "intercept"):
                        setattr(table, key, float(val))
                continue
            h, rmse, paths = ln.split(",")
            table.add(float(h), float(rmse), int(paths))
        return table


def fit_order(table) -> tuple[float, float]:
    """Least-squares line through ``(log2 h, log2 rmse)``; zero-error rows are dropped."""
    rows = table.rows if isinstance(table, ConvergenceTable) else list(table)
    kept = []
    for h, rmse, *_ in rows:
        if rmse == 0:
            warnings.warn(f"dropping zero-error row at h={h!r} from the order fit", stacklevel=2)
            continue
        kept.append((h, rmse))
    if len({h for h, _ in kept}) < 3:
        raise ConfigError(f"order fit needs at least 3 distinct step sizes with nonzero error, got {len(kept)}")
    kept.sort()
    x = np.log2([h for h, _ in kept])
    y = np.log2([r for _, r in kept])
    xm, ym = x.mean(), y.mean()
    slope = float(((x - xm) * (y - ym)).sum() / ((x - xm) ** 2).sum())
    return slope, float(ym - slope * xm)


@dataclass(frozen=True)
class W2Estimate:
    value: float
    method: str

    def __float__(self):
        return self.value


def _w2_sorted(a, b):
    diff = np.sort(a, axis=0) - np.sort(b, axis=0)
    return np.mean(diff * diff, axis=0)


def w2_exact_1d(a, b) -> W2Estimate:
    """Exact W2 between two equal-size 1-D empirical measures (order statistics)."""
    a = np.ravel(np.asarray(a, dtype=np.float64))
    b = np.ravel(np.asarray(b, dtype=np.float64))
    if a.size != b.size:
        raise ConfigError(f"1-D W2 needs equal sample counts, got {a.size} and {b.size}")
    if a.size == 0:
        raise ConfigError("empty sample set")
    return W2Estimate(float(math.sqrt(_w2_sorted(a, b))), "exact-1d")


def _random_directions(d, k, seed):
    dirs = np.empty((k, d))
    for j in range(k):
        v = derive_stream(seed, AUX_STREAM_BASE + j).standard_normal(d)
        dirs[j] = v / np.linalg.norm(v)
    return dirs


def w2_sliced(a, b, n_projections=128, seed=0) -> W2Estimate:
    """Sliced W2: root mean over random unit directions of squared 1-D W2.

    Direction ``j`` comes from its own stream, so the estimate is symmetric in
    ``a`` and ``b``. If counts differ, the larger set is subsampled without
    replacement.
    """
    a = _matrix(a, "a")
    b = _matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ConfigError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if n_projections < 1:
        raise ConfigError("need at least one projection")
    if a.shape[0] != b.shape[0]:
        n = min(a.shape[0], b.shape[0])
        rng = derive_stream(seed, AUX_STREAM_BASE - 1)
        if a.shape[0] > n:
            a = a[np.sort(rng.permutation(a.shape[0])[:n])]
        else:
            b = b[np.sort(rng.permutation(b.shape[0])[:n])]
    dirs = _random_directions(a.shape[1], n_projections, seed)
    proj_a = (a[:, None, :] * dirs).sum(axis=-1)
    proj_b = (b[:, None, :] * dirs).sum(axis=-1)
    return W2Estimate(float(math.sqrt(np.mean(_w2_sorted(proj_a, proj_b)))), f"sliced{{K={n_projections}}}")


def w2_assignment(a, b, max_n=1024) -> W2Estimate:
    """Exact W2 between equal-size empirical measures via optimal assignment."""
    a = _matrix(a, "a")
    b = _matrix(b, "b")
    if a.shape != b.shape:
        raise ConfigError(f"assignment W2 needs equal shapes, got {a.shape} and {b.shape}")
    if a.shape[0] > max_n:
        raise ConfigError(f"assignment W2 is limited to {max_n} samples, got {a.shape[0]}")
    diff = a[:, None, :] - b[None, :, :]
    cost = (diff * diff).sum(axis=-1)
    rows, cols = linear_sum_assignment(cost)
    return W2Estimate(float(math.sqrt(cost[rows, cols].mean())), f"assignment{{N={a.shape[0]}}}")


def mode_mass(samples, modes) -> np.ndarray:
    """Fraction of samples whose nearest mode is each entry of ``modes``."""
    x = _matrix(samples, "samples")
    modes = _matrix(modes, "modes")
    if modes.shape[0] < 1:
        raise ConfigError("need at least one mode")
    if modes.shape[1] != x.shape[1]:
        raise ConfigError(f"mode dimension {modes.shape[1]} != sample dimension {x.shape[1]}")
    if x.shape[0] == 0:
        return np.zeros(modes.shape[0])
    diff = x[:, None, :] - modes[None, :, :]
    nearest = np.argmin((diff * diff).sum(axis=-1), axis=1)
    return np.bincount(nearest, minlength=modes.shape[0]) / x.shape[0]


def mean_nn_distance(queries, reference, exclude_self=False) -> float:
    """Mean Euclidean distance from each query point to its nearest reference point."""
    q = _matrix(queries, "queries")
    r = _matrix(reference, "reference")
    tree = cKDTree(r)
    if exclude_self:
        dist, _ = tree.query(q, k=2)
        return float(dist[:, 1].mean())
    dist, _ = tree.query(q, k=1)
    return float(dist.mean())


def required_budget(epsilon, d, C=1.0) -> tuple[int, int]:
    """Step count N and Monte-Carlo sample count M for W2 accuracy ``epsilon``.

    ``N = ceil(d / eps^(2/3) * ln(d^(3/2) / eps)^(2/3))`` and
    ``M = ceil(4 C^2 d / eps^2)``; ``C`` is the unknown constant of the error
    bound and defaults to 1.
    """
    epsilon = float(epsilon)
    if not epsilon > 0:
        raise ConfigError("epsilon must be positive")
    if int(d) != d or d < 1:
        raise ConfigError("dimension must be a positive integer")
    if C <= 0:
        raise ConfigError("constant C must be positive")
    log_term = math.log(d**1.5 / epsilon)
    if log_term <= 0:
        raise ConfigError(f"epsilon must be below d^(3/2) = {d ** 1.5:g}")
    n = math.ceil(d / epsilon ** (2 / 3) * log_term ** (2 / 3))
    m_real = 4 * C * C * d / epsilon**2
    # Absorb last-bit rounding so exact integers (e.g. 800 at eps=0.1, d=2) stay put.
    m = math.ceil(m_real * (1 - 1e-12))
    return n, m
