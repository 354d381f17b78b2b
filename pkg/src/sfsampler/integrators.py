"""Time stepping: the two-stage stochastic Runge-Kutta step, Euler and Langevin.

The SRK step for ``dX = f(t, X) dt + sqrt(beta) dW`` is::

    H     = Y + 3/4 f(t, Y) h + 3 sqrt(beta) dZ / (2 h)
    Y_new = Y + 1/3 f(t, Y) h + 2/3 f(t + 3h/4, H) h + sqrt(beta) dW

It uses two drift evaluations per step and no drift derivatives; with the
correlated increment ``dZ`` it reaches strong order 1.5 for additive noise.

Path drivers run paths in fixed-size blocks. Each path draws its noise from
its own stream, so results do not depend on block scheduling or thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import (
    MC_STREAM_BASE,
    PATH_STREAM_BASE,
    ConfigError,
    NumericalFailure,
    PathAbort,
    RunConfig,
    TimeGrid,
    check_beta,
    derive_stream,
)
from .drift import EmpiricalDrift, ExactGMDrift, MonteCarloDrift
from .noise import aggregate_increments, pair_from_normals
from .targets import EmpiricalDataset, GaussianMixture, Target

__all__ = [
    "SRK_WEIGHTS",
    "SRK_NODE",
    "SRK_STAGE_DRIFT",
    "SRK_STAGE_NOISE",
    "order_conditions",
    "srksfs_step",
    "euler_step",
    "ula_step",
    "SampleMatrix",
    "CoupledRun",
    "simulate_paths",
    "simulate_coupled",
    "build_drift",
    "ABORT_TOLERANCE",
    "BLOCK_SIZE",
]

# Coefficients of the general two-stage family. The first stage is unused
# (weight zero), leaving the second stage at c2 = a21 = 3/4, b2 = 3/2.
SRK_WEIGHTS = (Fraction(0), Fraction(1, 3), Fraction(2, 3))  # (f(t, Y), stage 1, stage 2)
SRK_NODE = (Fraction(0), Fraction(3, 4))  # (c1, c2)
SRK_STAGE_DRIFT = ((Fraction(0), Fraction(0)), (Fraction(3, 4), Fraction(0)))  # (a11, a12), (a21, a22)
SRK_STAGE_NOISE = (Fraction(0), Fraction(3, 2))  # (b1, b2)

ABORT_TOLERANCE = 1e-3
BLOCK_SIZE = 256


def order_conditions():
    """Left-hand sides of the four order-1.5 conditions, as exact fractions.

    Expected values: 1/2, 1/2, 1, 3/4.
    """
    _, w1, w2 = SRK_WEIGHTS
    c1, c2 = SRK_NODE
    (a11, _), (a21, a22) = SRK_STAGE_DRIFT
    b1, b2 = SRK_STAGE_NOISE
    return (
        c1 * w1 + c2 * w2,
        a11 * w1 + (a21 + a22) * w2,
        b1 * w1 + b2 * w2,
        Fraction(1, 2) * (b1 * b1 * w1 + b2 * b2 * w2),
    )


def _srk_update(f, sqrt_beta, t, h, y, dW, dZ):
    f0 = f(t, y)
    stage = y + 0.75 * h * f0 + (1.5 * sqrt_beta / h) * dZ
    f1 = f(t + 0.75 * h, stage)
    return y + (h / 3.0) * f0 + (2.0 * h / 3.0) * f1 + sqrt_beta * dW


def _euler_update(f, sqrt_beta, t, h, y, dW):
    return y + h * f(t, y) + sqrt_beta * dW


def _check_step_args(grid, n, noise):
    if not 0 <= n < grid.n_steps:
        raise ConfigError(f"step index {n} outside [0, {grid.n_steps - 1}]")
    if not math.isclose(noise.h, grid.h, rel_tol=1e-12):
        raise ConfigError(f"noise step {noise.h} does not match grid step {grid.h}")


def srksfs_step(f, beta, grid: TimeGrid, n: int, y, noise):
    _check_step_args(grid, n, noise)
    sb = math.sqrt(check_beta(beta))
    out = _srk_update(f, sb, grid.time(n), grid.h, np.asarray(y, dtype=np.float64), noise.dW, noise.dZ)
    if not np.all(np.isfinite(out)):
        raise PathAbort(n)
    return out


def euler_step(f, beta, grid: TimeGrid, n: int, y, noise):
    _check_step_args(grid, n, noise)
    sb = math.sqrt(check_beta(beta))
    out = _euler_update(f, sb, grid.time(n), grid.h, np.asarray(y, dtype=np.float64), noise.dW)
    if not np.all(np.isfinite(out)):
        raise PathAbort(n)
    return out


def ula_step(grad_v, gamma, x, xi):
    """One unadjusted Langevin step ``x - grad V(x) gamma + sqrt(2 gamma) xi``."""
    if not gamma > 0:
        raise ConfigError(f"Langevin step must be positive, got {gamma}")
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(grad_v(x), dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise PathAbort(0, "non-finite potential gradient")
    return x - gamma * g + math.sqrt(2.0 * gamma) * np.asarray(xi)


@dataclass
class SampleMatrix:
    """Terminal states of the surviving paths plus run metadata."""

    samples: np.ndarray
    path_index: np.ndarray
    aborted: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def n_aborted(self):
        return len(self.aborted)

    def __len__(self):
        return self.samples.shape[0]


def build_drift(config: RunConfig, target=None, dataset=None, paths=None):
    """Drift evaluator for ``config.drift``; ``paths`` selects MC streams."""
    beta = config.beta
    if config.drift == "exact":
        if not isinstance(target, GaussianMixture):
            raise ConfigError("exact drift is only available for Gaussian-mixture targets")
        return ExactGMDrift(target, beta)
    if config.drift == "empirical":
        if dataset is None:
            raise ConfigError("empirical drift requires a dataset")
        return EmpiricalDrift(dataset, beta)
    if target is None:
        raise ConfigError("Monte-Carlo drift requires a target with a potential")
    streams = [derive_stream(config.seed, MC_STREAM_BASE + int(p)) for p in paths]
    return MonteCarloDrift(target, beta, config.mc_samples, streams, strict=False)


def _path_normals(seed, paths, shape):
    return np.stack([derive_stream(seed, PATH_STREAM_BASE + int(p)).standard_normal(shape) for p in paths])


def _run_block(config: RunConfig, target, dataset, paths):
    d = config.dim
    grid = config.grid
    N, h = grid.n_steps, grid.h
    B = len(paths)
    y = np.zeros((B, d))
    alive = np.ones(B, dtype=bool)
    abort_step = np.full(B, -1)

    if config.scheme == "ula":
        gamma = config.ula_step if config.ula_step is not None else h
        xi = _path_normals(config.seed, paths, (N, d))
        grad_v = target.grad_potential
        noise_scale = math.sqrt(2.0 * gamma)
        for n in range(N):
            with np.errstate(all="ignore"):
                y = y - gamma * grad_v(y) + noise_scale * xi[:, n]
            alive, y = _mark(y, alive, abort_step, n)
    else:
        f = build_drift(config, target, dataset, paths)
        z = _path_normals(config.seed, paths, (N, 2, d))
        dW, dZ = pair_from_normals(z[:, :, 0], z[:, :, 1], h)
        sb = math.sqrt(config.beta)
        for n in range(N):
            t = grid.time(n)
            with np.errstate(all="ignore"):
                if config.scheme == "srk":
                    y = _srk_update(f, sb, t, h, y, dW[:, n], dZ[:, n])
                else:
                    y = _euler_update(f, sb, t, h, y, dW[:, n])
            alive, y = _mark(y, alive, abort_step, n)
    return y, alive, abort_step


def _mark(y, alive, abort_step, n):
    bad = alive & ~np.all(np.isfinite(y), axis=-1)
    if bad.any():
        abort_step[bad] = n
        alive = alive & ~bad
    # Dead rows are parked at the origin so that they cannot poison later steps.
    y = np.where(alive[:, None], y, 0.0)
    return alive, y


def _blocks(n_paths, block_size):
    return [np.arange(s, min(s + block_size, n_paths)) for s in range(0, n_paths, block_size)]


def _map_blocks(fn, blocks, n_jobs):
    if n_jobs is None or n_jobs <= 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, blocks))


def _check_inputs(config, target, dataset):
    if config.drift == "empirical":
        if dataset is None:
            raise ConfigError("empirical drift requires a dataset")
        if not isinstance(dataset, EmpiricalDataset):
            raise ConfigError("dataset must be an EmpiricalDataset")
        if dataset.dim != config.dim:
            raise ConfigError(f"dataset dimension {dataset.dim} != config dim {config.dim}")
        if config.scheme == "ula":
            raise ConfigError("the Langevin baseline needs a potential; it cannot run on a dataset")
        return
    if not isinstance(target, Target):
        raise ConfigError("a target distribution is required")
    if target.dim != config.dim:
        raise ConfigError(f"target dimension {target.dim} != config dim {config.dim}")
    if config.drift == "exact" and config.scheme != "ula" and not isinstance(target, GaussianMixture):
        raise ConfigError("exact drift is only available for Gaussian-mixture targets")


def simulate_paths(config: RunConfig, target=None, dataset=None, n_jobs=None, block_size=BLOCK_SIZE):
    """Run ``config.paths`` independent paths from the origin and return terminal states.

    SRK and Euler integrate over [0, 1] with ``config.n_steps`` steps. The
    Langevin baseline runs the same number of steps with step size
    ``config.ula_step`` (default ``1 / n_steps``).

    Raises :class:`NumericalFailure` if more than 0.1% of paths abort.
    """
    _check_inputs(config, target, dataset)
    blocks = _blocks(config.paths, block_size)
    results = _map_blocks(lambda b: _run_block(config, target, dataset, b), blocks, n_jobs)
    y = np.concatenate([r[0] for r in results])
    alive = np.concatenate([r[1] for r in results])
    steps = np.concatenate([r[2] for r in results])
    aborted = {int(p): int(steps[p]) for p in np.flatnonzero(~alive)}
    if len(aborted) > ABORT_TOLERANCE * config.paths:
        raise NumericalFailure(
            f"{len(aborted)} of {config.paths} paths aborted (tolerance {ABORT_TOLERANCE:.1%}); "
            f"first at path {min(aborted)} step {aborted[min(aborted)]}"
        )
    meta = {"scheme": config.scheme, "drift": config.drift, "beta": config.beta, "n_steps": config.n_steps}
    if config.scheme == "ula":
        meta["ula_step"] = config.ula_step if config.ula_step is not None else config.grid.h
    return SampleMatrix(y[alive], np.flatnonzero(alive), aborted, meta)


@dataclass
class CoupledRun:
    """Terminal states of coupled discretisations driven by one Brownian path per path index."""

    h_ref: float
    h_list: list
    paths: int
    reference: dict  # scheme -> (P, d)
    terminals: dict  # (scheme, h) -> (P, d)


def _ratio(h, h_ref):
    m = h / h_ref
    k = round(m)
    if k < 1 or abs(m - k) > 1e-9 * max(1.0, m):
        raise ConfigError(f"reference step {h_ref!r} does not divide step {h!r}")
    n = 1.0 / h
    if abs(n - round(n)) > 1e-9 * n:
        raise ConfigError(f"step {h!r} does not partition [0, 1] evenly")
    return int(k)


def _integrate(f, scheme, sb, h, dW, dZ):
    n_steps = dW.shape[1]
    y = np.zeros((dW.shape[0], dW.shape[2]))
    for n in range(n_steps):
        t = n / n_steps
        if scheme == "srk":
            y = _srk_update(f, sb, t, h, y, dW[:, n], dZ[:, n])
        else:
            y = _euler_update(f, sb, t, h, y, dW[:, n])
    return y


def simulate_coupled(config: RunConfig, target, h_ref, h_list, schemes=None, n_jobs=None, block_size=BLOCK_SIZE):
    """Strong-error experiment: coarse solutions driven by aggregated fine noise.

    For each path one increment sequence is drawn on the ``h_ref`` grid. The
    reference solution uses it directly; the solution at each ``h`` in
    ``h_list`` uses the same increments aggregated to step ``h``.
    """
    if config.drift != "exact":
        raise ConfigError("coupled runs use the exact drift only")
    if not isinstance(target, GaussianMixture):
        raise ConfigError("coupled runs need a Gaussian-mixture target")
    schemes = list(schemes or [config.scheme])
    for s in schemes:
        if s not in ("srk", "euler"):
            raise ConfigError(f"coupled runs support srk and euler, not {s!r}")
    ratios = [_ratio(h, h_ref) for h in h_list]
    n_fine = _ratio(1.0, h_ref)
    f = ExactGMDrift(target, config.beta)
    sb = math.sqrt(config.beta)
    d = config.dim

    def run(paths):
        z = _path_normals(config.seed, paths, (n_fine, 2, d))
        dW, dZ = pair_from_normals(z[:, :, 0], z[:, :, 1], h_ref)
        ref = {s: _integrate(f, s, sb, h_ref, dW, dZ) for s in schemes}
        out = {}
        for h, m in zip(h_list, ratios):
            dWc, dZc = aggregate_increments(dW, dZ, h_ref, m)
            for s in schemes:
                out[(s, h)] = ref[s] if m == 1 else _integrate(f, s, sb, h, dWc, dZc)
        return ref, out

    results = _map_blocks(run, _blocks(config.paths, block_size), n_jobs)
    reference = {s: np.concatenate([r[0][s] for r in results]) for s in schemes}
    terminals = {k: np.concatenate([r[1][k] for r in results]) for k in results[0][1]}
    return CoupledRun(h_ref, list(h_list), config.paths, reference, terminals)
