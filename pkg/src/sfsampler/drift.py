"""Drift evaluators for the temperature-``beta`` Schrodinger-Follmer diffusion.

The drift is ``beta * grad log Q_{1-t} g(x)`` where ``g`` is the density of the
target relative to ``N(0, beta I)`` and ``Q`` is Gaussian smoothing. Three
evaluators are provided:

* :class:`ExactGMDrift` -- closed form for Gaussian mixtures.
* :class:`MonteCarloDrift` -- self-normalised Monte-Carlo estimate using only
  the potential ``V`` (no gradients).
* :class:`EmpiricalDrift` -- plug-in estimate from samples of the target.

All three reduce to a softmax-weighted average, computed in the log domain.
Evaluators accept ``x`` of shape ``(d,)`` or ``(P, d)``; ``t`` is a scalar.
"""

from __future__ import annotations

import math

import numpy as np

from .core import ConfigError, check_beta
from .targets import EmpiricalDataset, GaussianMixture, Target

__all__ = [
    "T_EPS",
    "SingularTimeError",
    "DriftEvaluator",
    "ExactGMDrift",
    "MonteCarloDrift",
    "EmpiricalDrift",
    "softmax_weights",
    "exact_gm_drift",
    "mc_drift",
    "mc_drift_with_stderr",
    "empirical_drift",
]

T_EPS = 1e-12


class SingularTimeError(ConfigError):
    """Drift requested at a time where ``1 - t`` vanishes."""


def softmax_weights(logits, axis=-1):
    """Normalised weights ``exp(s_j) / sum exp(s)`` via the max-shift trick."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    w = np.exp(shifted)
    return w / w.sum(axis=axis, keepdims=True)


def _check_time(t, strict_one=False):
    t = float(t)
    if not math.isfinite(t) or t < 0:
        raise ConfigError(f"time must lie in [0, 1), got {t}")
    if strict_one:
        if t >= 1.0:
            raise SingularTimeError(f"drift is undefined at t={t!r} >= 1")
    elif t >= 1.0 - T_EPS:
        raise SingularTimeError(f"1 - t = {1.0 - t:.3g} is below the singularity floor {T_EPS:g}")
    return t


class DriftEvaluator:
    """Callable ``f(t, x)``; subclasses implement :meth:`evaluate`."""

    beta: float
    dim: int
    mode = "abstract"

    def __call__(self, t, x):
        return self.evaluate(t, x)

    def evaluate(self, t, x):
        raise NotImplementedError

    def _points(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1:] != (self.dim,):
            raise ConfigError(f"expected state of dimension {self.dim}, got shape {x.shape}")
        return x


class ExactGMDrift(DriftEvaluator):
    """Closed-form drift for a Gaussian-mixture target.

    Each component contributes a Gaussian convolution that is evaluated in the
    component's covariance eigenbasis. The per-coordinate expressions below are
    rearranged so that no term scales like ``1 / (1 - t)``; this keeps the
    evaluation well conditioned as ``t -> 1``.
    """

    mode = "exact"

    def __init__(self, gm: GaussianMixture, beta: float = 1.0):
        if not isinstance(gm, GaussianMixture):
            raise ConfigError("exact drift requires a Gaussian-mixture target")
        self.gm = gm
        self.beta = check_beta(beta)
        self.dim = gm.dim
        lam = gm.eigvals
        self._a = gm.rot_means / lam
        self._c = 1.0 / self.beta - 1.0 / lam
        self._const = -0.5 * (gm.rot_means * self._a).sum(axis=1)

    def log_weights(self, t, x):
        """Unnormalised log responsibilities, shape ``(..., K)``."""
        return self._terms(_check_time(t, strict_one=True), self._points(x))[0]

    def _terms(self, t, x):
        gm = self.gm
        lam = gm.eigvals
        s = (1.0 - t) * self.beta
        den = t + s / lam
        xr = gm._rotate(x)
        a, c = self._a, self._c
        grad_r = (a + xr * c) / den
        expo = 0.5 * ((s * a * a + 2.0 * a * xr + c * xr * xr) / den).sum(axis=-1) + self._const
        log_w = gm.log_weights - 0.5 * np.log(t * lam + s).sum(axis=-1) + expo
        return log_w, grad_r

    def evaluate(self, t, x):
        t = _check_time(t, strict_one=True)
        x = self._points(x)
        log_w, grad_r = self._terms(t, x)
        w = softmax_weights(log_w, axis=-1)
        # Back to standard coordinates: U_i @ grad_r_i.
        grad = (self.gm.eigvecs * grad_r[..., None, :]).sum(axis=-1)
        return self.beta * (w[..., None] * grad).sum(axis=-2)


class MonteCarloDrift(DriftEvaluator):
    """Self-normalised Monte-Carlo drift using ``M`` fresh normals per call.

    ``rng`` is a single stream for one state, or a sequence of streams, one
    per row of a ``(P, d)`` batch. Every call consumes ``M * d`` normals from
    each stream, so results only depend on the stream and the call count.

    With ``strict=True`` a NaN potential raises; otherwise the affected row of
    the output is NaN and the caller decides what to do with it.
    """

    mode = "mc"

    def __init__(self, target: Target, beta: float, n_samples: int, rng, strict=True):
        if n_samples < 1:
            raise ConfigError("Monte-Carlo drift needs at least one sample")
        self.target = target
        self.beta = check_beta(beta)
        self.dim = target.dim
        self.n_samples = int(n_samples)
        self.rng = rng
        self.strict = strict
        self.last_stderr = None

    def _draw(self, batch_shape):
        M, d = self.n_samples, self.dim
        if batch_shape == ():
            return self.rng.standard_normal((M, d))
        streams = self.rng
        if len(streams) != batch_shape[0]:
            raise ConfigError(f"{len(streams)} streams for a batch of {batch_shape[0]} states")
        return np.stack([r.standard_normal((M, d)) for r in streams])

    def evaluate(self, t, x):
        t = _check_time(t)
        x = self._points(x)
        if x.ndim > 2:
            raise ConfigError("Monte-Carlo drift accepts a single state or a (P, d) batch")
        xi = self._draw(x.shape[:-1])
        scale = math.sqrt((1.0 - t) * self.beta)
        y = x[..., None, :] + scale * xi
        V = self.target.potential(y)
        logits = -V + (y * y).sum(axis=-1) / (2.0 * self.beta)
        bad = np.isnan(logits)
        if bad.any():
            if self.strict:
                j = int(np.argwhere(bad)[0][-1])
                raise FloatingPointError(f"potential returned NaN at Monte-Carlo sample {j}")
            logits = np.where(bad.any(axis=-1, keepdims=True), np.nan, logits)
        w = softmax_weights(logits, axis=-1)
        coef = math.sqrt(self.beta / (1.0 - t))
        z = coef * xi
        f = (w[..., None] * z).sum(axis=-2)
        self.last_stderr = np.sqrt((w[..., None] ** 2 * (z - f[..., None, :]) ** 2).sum(axis=-2))
        return f


class EmpiricalDrift(DriftEvaluator):
    """Drift of the diffusion whose terminal law is the empirical measure of a dataset."""

    mode = "empirical"

    def __init__(self, dataset: EmpiricalDataset, beta: float = 1.0):
        if not isinstance(dataset, EmpiricalDataset):
            dataset = EmpiricalDataset(dataset)
        self.dataset = dataset
        self.beta = check_beta(beta)
        self.dim = dataset.dim

    def weights(self, t, x):
        t = _check_time(t)
        x = self._points(x)
        data = self.dataset.samples
        diff = data - x[..., None, :]
        dist2 = (diff * diff).sum(axis=-1)
        logits = self.dataset.sq_norms / (2.0 * self.beta) - dist2 / (2.0 * (1.0 - t) * self.beta)
        return softmax_weights(logits, axis=-1)

    def evaluate(self, t, x):
        t = _check_time(t)
        x = self._points(x)
        w = self.weights(t, x)
        mean = np.einsum("...n,nd->...d", w, self.dataset.samples)
        return (mean - x) / (1.0 - t)


def exact_gm_drift(gm, beta, t, x):
    return ExactGMDrift(gm, beta)(t, x)


def mc_drift(target, beta, t, x, M, rng):
    return MonteCarloDrift(target, beta, M, rng, strict=True)(t, x)


def mc_drift_with_stderr(target, beta, t, x, M, rng):
    """Monte-Carlo drift and its delta-method standard error per coordinate."""
    ev = MonteCarloDrift(target, beta, M, rng, strict=True)
    f = ev(t, x)
    return f, ev.last_stderr


def empirical_drift(ds, beta, t, x):
    return EmpiricalDrift(ds, beta)(t, x)
