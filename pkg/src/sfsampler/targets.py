"""Target distributions.

Every target exposes a batched ``log_density(X)`` and ``potential(X)``
(``V = -log p`` up to a constant) over arrays of shape ``(..., d)``. Gaussian
mixtures additionally support the closed-form drift, an analytic potential
gradient and exact sampling.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from scipy.special import erfc, logsumexp

from .core import ConfigError

__all__ = [
    "Target",
    "GaussianMixture",
    "RingMixture",
    "ClaytonCopulaTarget",
    "GenericLogDensity",
    "EmpiricalDataset",
    "gm_log_density",
    "gm_grad_potential",
    "gm_sample",
    "ring_log_density",
    "copula_log_density",
    "gaussian_circle",
    "gaussian_cross",
    "concentric_rings",
    "clayton_target",
    "BUILTIN_TARGETS",
    "make_target",
    "load_mixture_spec",
]

_LOG_2PI = math.log(2.0 * math.pi)


def _as_points(x, dim):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (dim,):
        raise ConfigError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


class Target:
    """Base class: subclasses implement ``log_density`` and set ``dim``."""

    dim: int
    name = "target"

    def log_density(self, x):
        raise NotImplementedError

    def potential(self, x):
        return -self.log_density(x)

    def grad_potential(self, x, eps=1e-6):
        """Central finite-difference gradient of the potential."""
        x = _as_points(x, self.dim)
        grad = np.empty_like(x)
        for k in range(self.dim):
            step = np.zeros(self.dim)
            step[k] = eps
            grad[..., k] = (self.potential(x + step) - self.potential(x - step)) / (2 * eps)
        return grad

    @property
    def modes(self):
        return None

    def sample(self, n, rng):
        raise NotImplementedError(f"{type(self).__name__} has no exact sampler")


class GaussianMixture(Target):
    """Finite mixture of full-covariance Gaussians.

    Covariances are stored through their spectral decomposition, which the
    drift evaluator uses to apply the time-dependent matrix functions as
    diagonal scalings.
    """

    name = "gaussian-mixture"

    def __init__(self, weights, means, covs):
        weights = np.asarray(weights, dtype=np.float64)
        means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        covs = np.asarray(covs, dtype=np.float64)
        k, d = means.shape
        if covs.shape != (k, d, d):
            raise ConfigError(f"covariances must have shape {(k, d, d)}, got {covs.shape}")
        if weights.shape != (k,):
            raise ConfigError(f"expected {k} weights, got shape {weights.shape}")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)) or weights.sum() <= 0:
            raise ConfigError("mixture weights must be finite and non-negative with positive sum")
        if not np.all(np.isfinite(means)) or not np.all(np.isfinite(covs)):
            raise ConfigError("means and covariances must be finite")
        if not np.allclose(covs, np.swapaxes(covs, -1, -2), rtol=0, atol=1e-12):
            raise ConfigError("covariance matrices must be symmetric")
        self.weights = weights / weights.sum()
        self.means = means
        self.covs = covs
        self.dim = d
        evals, evecs = np.linalg.eigh(covs)
        if np.any(evals <= 0):
            bad = int(np.argmin(evals.min(axis=1)))
            raise ConfigError(f"covariance {bad} is not positive definite (min eigenvalue {evals[bad].min():g})")
        self.eigvals = evals
        self.eigvecs = evecs
        self.precisions = np.einsum("kij,kj,klj->kil", evecs, 1.0 / evals, evecs)
        self.log_dets = np.log(evals).sum(axis=1)
        with np.errstate(divide="ignore"):
            self.log_weights = np.log(self.weights)
        # Means expressed in each component's eigenbasis.
        self.rot_means = np.einsum("kji,kj->ki", evecs, means)

    def __repr__(self):
        return f"GaussianMixture(n_components={len(self.weights)}, dim={self.dim})"

    def _rotate(self, x):
        # x: (..., d) -> (..., K, d) coordinates in each component's eigenbasis.
        return (x[..., None, :, None] * self.eigvecs).sum(axis=-2)

    def component_log_terms(self, x):
        """``log w_i + log N(x; mean_i, cov_i)`` with shape ``(..., K)``."""
        x = _as_points(x, self.dim)
        r = self._rotate(x) - self.rot_means
        maha = (r * r / self.eigvals).sum(axis=-1)
        return self.log_weights - 0.5 * (self.dim * _LOG_2PI + self.log_dets + maha)

    def log_density(self, x):
        return logsumexp(self.component_log_terms(x), axis=-1)

    def grad_potential(self, x, eps=None):
        x = _as_points(x, self.dim)
        terms = self.component_log_terms(x)
        resp = np.exp(terms - logsumexp(terms, axis=-1, keepdims=True))
        r = self._rotate(x) - self.rot_means
        # cov_i^{-1} (x - mean_i), rotated back to the standard basis.
        scaled = r / self.eigvals
        pull = (self.eigvecs * scaled[..., None, :]).sum(axis=-1)
        return (resp[..., None] * pull).sum(axis=-2)

    @property
    def modes(self):
        return self.means

    def sample(self, n, rng):
        n = int(n)
        if n < 1:
            raise ConfigError("sample count must be >= 1")
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        xi = rng.standard_normal((n, self.dim))
        scale = self.eigvecs * np.sqrt(self.eigvals)[:, None, :]
        return self.means[comp] + np.einsum("nij,nj->ni", scale[comp], xi)

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covs": self.covs.tolist(),
        }


def gm_log_density(gm: GaussianMixture, x):
    return gm.log_density(x)


def gm_grad_potential(gm: GaussianMixture, x):
    return gm.grad_potential(x)


def gm_sample(gm: GaussianMixture, p: int, rng):
    return gm.sample(p, rng)


class RingMixture(Target):
    """Equal-weight mixture of radial Gaussian rings in the plane."""

    name = "rings"
    dim = 2

    def __init__(self, radii=(1.0, 2.0, 3.0), sigma=0.1):
        radii = np.asarray(radii, dtype=np.float64)
        if radii.ndim != 1 or radii.size < 1 or np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
            raise ConfigError("ring radii must be positive and strictly increasing")
        if not sigma > 0:
            raise ConfigError("ring width sigma must be positive")
        self.radii = radii
        self.sigma = float(sigma)
        self._log_norm = -np.log(2 * np.pi * radii * self.sigma * math.sqrt(2 * np.pi))

    def log_density(self, x):
        x = _as_points(x, 2)
        r = np.hypot(x[..., 0], x[..., 1])[..., None]
        terms = self._log_norm - (r - self.radii) ** 2 / (2 * self.sigma**2)
        return logsumexp(terms, axis=-1) - math.log(self.radii.size)

    def grad_potential(self, x, eps=None):
        x = _as_points(x, 2)
        r = np.hypot(x[..., 0], x[..., 1])
        rr = r[..., None]
        terms = self._log_norm - (rr - self.radii) ** 2 / (2 * self.sigma**2)
        resp = np.exp(terms - logsumexp(terms, axis=-1, keepdims=True))
        dV_dr = (resp * (rr - self.radii)).sum(axis=-1) / self.sigma**2
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r[..., None] > 0, x / r[..., None], 0.0)
        return dV_dr[..., None] * unit

    def sample(self, n, rng):
        ring = rng.choice(self.radii.size, size=int(n))
        # Radial Gaussian around the chosen ring, uniform angle.
        radius = self.radii[ring] + self.sigma * rng.standard_normal(int(n))
        angle = rng.uniform(0.0, 2 * np.pi, size=int(n))
        return np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=-1)


def ring_log_density(rm: RingMixture, x):
    return rm.log_density(x)


class ClaytonCopulaTarget(Target):
    """Clayton copula joined with identical two-component normal-mixture marginals."""

    name = "clayton"
    u_clip = 1e-12

    def __init__(self, dim=2, theta=2.0, weights=(0.7, 0.3), locs=(-1.0, 1.0), scales=(0.2, 0.2)):
        if int(dim) != dim or dim < 1:
            raise ConfigError("copula dimension must be a positive integer")
        if not theta > 0:
            raise ConfigError("Clayton parameter theta must be positive")
        self.dim = int(dim)
        self.theta = float(theta)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.locs = np.asarray(locs, dtype=np.float64)
        self.scales = np.asarray(scales, dtype=np.float64)
        if not math.isclose(self.weights.sum(), 1.0, abs_tol=1e-12) or np.any(self.scales <= 0):
            raise ConfigError("marginal weights must sum to 1 and scales must be positive")

    def marginal_cdf(self, x):
        z = (np.asarray(x)[..., None] - self.locs) / self.scales
        return (self.weights * 0.5 * erfc(-z / math.sqrt(2.0))).sum(axis=-1)

    def marginal_log_pdf(self, x):
        z = (np.asarray(x)[..., None] - self.locs) / self.scales
        terms = np.log(self.weights) - np.log(self.scales) - 0.5 * _LOG_2PI - 0.5 * z * z
        return logsumexp(terms, axis=-1)

    def log_density(self, x):
        x = _as_points(x, self.dim)
        d, th = self.dim, self.theta
        marg = self.marginal_log_pdf(x).sum(axis=-1)
        if d == 1:
            return marg
        u = np.clip(self.marginal_cdf(x), self.u_clip, 1.0 - self.u_clip)
        log_u = np.log(u)
        s = np.exp(-th * log_u).sum(axis=-1) - d + 1
        log_c = (d - 1) * math.log1p(th) - (1 + th) * log_u.sum(axis=-1) - (1 / th + d) * np.log(s)
        return log_c + marg


def copula_log_density(ct: ClaytonCopulaTarget, x):
    return ct.log_density(x)


class GenericLogDensity(Target):
    """Target known through an unnormalised potential ``V`` (density ``exp(-V)``).

    ``V`` receives a point of shape ``(d,)``; pass ``vectorized=True`` if it
    accepts ``(..., d)`` arrays and reduces the last axis.
    """

    name = "generic"

    def __init__(self, potential, dim, vectorized=False):
        if int(dim) != dim or dim < 1:
            raise ConfigError("dimension must be a positive integer")
        self._V = potential
        self.dim = int(dim)
        self.vectorized = vectorized

    def potential(self, x):
        x = _as_points(x, self.dim)
        if self.vectorized:
            return np.asarray(self._V(x), dtype=np.float64)
        flat = x.reshape(-1, self.dim)
        out = np.fromiter((self._V(p) for p in flat), dtype=np.float64, count=flat.shape[0])
        return out.reshape(x.shape[:-1])

    def log_density(self, x):
        return -self.potential(x)


class EmpiricalDataset:
    """Samples stored as an ``(n, d)`` matrix with cached squared norms."""

    def __init__(self, samples):
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.ndim != 2 or samples.shape[0] < 1 or samples.shape[1] < 1:
            raise ConfigError(f"dataset must be a non-empty (n, d) matrix, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ConfigError("dataset contains non-finite entries")
        self.samples = samples
        self.sq_norms = (samples * samples).sum(axis=1)

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"EmpiricalDataset(n={self.n}, dim={self.dim})"


def gaussian_circle(n_modes=8, radius=4.0, var=0.3):
    angles = 2 * np.pi * np.arange(n_modes) / n_modes
    means = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    covs = np.repeat(var * np.eye(2)[None], n_modes, axis=0)
    gm = GaussianMixture(np.full(n_modes, 1.0 / n_modes), means, covs)
    gm.name = "circle"
    return gm


def gaussian_cross(offset=1.5, rho=0.9):
    centers = np.array([[offset, 0.0], [-offset, 0.0], [0.0, offset], [0.0, -offset]])
    means, covs = [], []
    for c in centers:
        for sign in (1.0, -1.0):
            means.append(c)
            covs.append([[1.0, sign * rho], [sign * rho, 1.0]])
    gm = GaussianMixture(np.full(8, 1 / 8), means, covs)
    gm.name = "cross"
    return gm


def concentric_rings():
    return RingMixture((1.0, 2.0, 3.0), 0.1)


def clayton_target(dim=2):
    return ClaytonCopulaTarget(dim=dim)


BUILTIN_TARGETS = {
    "circle": lambda dim=None: gaussian_circle(),
    "cross": lambda dim=None: gaussian_cross(),
    "rings": lambda dim=None: concentric_rings(),
    "clayton": lambda dim=None: clayton_target(2 if dim is None else dim),
}


def load_mixture_spec(path) -> GaussianMixture:
    """Read a mixture from JSON with keys ``weights``, ``means`` and ``covs``."""
    data = json.loads(Path(path).read_text())
    missing = {"weights", "means", "covs"} - set(data)
    if missing:
        raise ConfigError(f"mixture spec {path} is missing keys {sorted(missing)}")
    extra = set(data) - {"weights", "means", "covs"}
    if extra:
        raise ConfigError(f"mixture spec {path} has unknown keys {sorted(extra)}")
    gm = GaussianMixture(data["weights"], data["means"], data["covs"])
    gm.name = Path(path).stem
    return gm


def make_target(name_or_path, dim=None) -> Target:
    if isinstance(name_or_path, Target):
        return name_or_path
    if name_or_path in BUILTIN_TARGETS:
        target = BUILTIN_TARGETS[name_or_path](dim)
        if dim is not None and target.dim != dim:
            raise ConfigError(f"target {name_or_path!r} has fixed dimension {target.dim}, not {dim}")
        return target
    path = Path(name_or_path)
    if path.suffix == ".json":
        if not path.exists():
            raise FileNotFoundError(f"mixture spec not found: {path}")
        return load_mixture_spec(path)
    raise ConfigError(f"unknown target {name_or_path!r}; builtins are {sorted(BUILTIN_TARGETS)}")
