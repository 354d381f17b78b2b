"""scikit-learn style front end for the samplers."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .core import DRIFT_MODES, SCHEMES, ConfigError, RunConfig
from .integrators import simulate_paths
from .targets import EmpiricalDataset, GaussianMixture, Target, make_target

__all__ = ["SchrodingerFollmerSampler"]


class SchrodingerFollmerSampler(BaseEstimator):
    """Draw samples by integrating the Schrodinger-Follmer diffusion from the origin.

    Parameters
    ----------
    target : str or Target, optional
        Builtin name (``circle``, ``cross``, ``rings``, ``clayton``), path to a
        mixture JSON spec, or a :class:`~sfsampler.targets.Target`. Ignored
        when ``drift="empirical"``; the data passed to :meth:`fit` defines the
        target instead.
    scheme : {"srk", "euler", "ula"}
        Stochastic Runge-Kutta (two drift calls per step), Euler, or the
        unadjusted Langevin baseline.
    drift : {"exact", "mc", "empirical"}
    beta : float
        Temperature of the reference Gaussian and diffusion scale.
    n_steps : int
        Number of steps on [0, 1].
    mc_samples : int, optional
        Monte-Carlo sample count; required when ``drift="mc"``.
    ula_step : float, optional
        Langevin step size, ``1 / n_steps`` when omitted.
    standardize : bool
        Centre and scale the training data before building the empirical drift;
        samples are mapped back to data coordinates.
    dim : int, optional
        Dimension for builtin targets that accept one (``clayton``).
    random_state : int
        Master seed of the counter-based generator.
    n_jobs : int, optional
        Worker threads; affects speed only.

    Examples
    --------
    >>> sampler = SchrodingerFollmerSampler(target="circle", n_steps=64, random_state=0)
    >>> X = sampler.fit().sample(100)
    >>> X.shape
    (100, 2)
    """

    def __init__(
        self,
        target=None,
        scheme="srk",
        drift="exact",
        beta=1.0,
        n_steps=100,
        mc_samples=None,
        ula_step=None,
        standardize=False,
        dim=None,
        random_state=0,
        n_jobs=None,
    ):
        self.target = target
        self.scheme = scheme
        self.drift = drift
        self.beta = beta
        self.n_steps = n_steps
        self.mc_samples = mc_samples
        self.ula_step = ula_step
        self.standardize = standardize
        self.dim = dim
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        """Resolve the target, or store ``X`` as the dataset for the empirical drift."""
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.drift not in DRIFT_MODES:
            raise ConfigError(f"unknown drift {self.drift!r}")
        self.shift_ = None
        self.scale_ = None
        if self.drift == "empirical":
            if X is None:
                raise ConfigError("empirical drift needs training data: call fit(X)")
            X = check_array(X, dtype=np.float64, ensure_min_samples=1)
            if self.standardize:
                self.shift_ = X.mean(axis=0)
                sd = X.std(axis=0)
                self.scale_ = np.where(sd > 0, sd, 1.0)
                X = (X - self.shift_) / self.scale_
            self.dataset_ = EmpiricalDataset(X)
            self.target_ = None
            self.n_features_in_ = X.shape[1]
        else:
            if self.target is None:
                raise ConfigError("a target is required unless drift='empirical'")
            self.target_ = make_target(self.target, self.dim)
            if self.drift == "exact" and self.scheme != "ula" and not isinstance(self.target_, GaussianMixture):
                raise ConfigError("exact drift requires a Gaussian-mixture target; use drift='mc'")
            self.dataset_ = None
            self.n_features_in_ = self.target_.dim
        self.config_ = self._config(paths=1)
        return self

    def _config(self, paths):
        return RunConfig(
            dim=self.n_features_in_,
            beta=float(self.beta),
            n_steps=int(self.n_steps),
            scheme=self.scheme,
            drift=self.drift,
            mc_samples=self.mc_samples,
            paths=int(paths),
            seed=int(self.random_state),
            ula_step=self.ula_step,
        )

    def sample(self, n_samples=1):
        """Terminal states of ``n_samples`` paths, shape ``(n_surviving, d)``.

        Paths that hit non-finite values are dropped and counted in
        ``n_aborted_``; more than 0.1% aborted paths raise ``NumericalFailure``.
        """
        check_is_fitted(self, "config_")
        result = simulate_paths(self._config(n_samples), self.target_, self.dataset_, n_jobs=self.n_jobs)
        self.n_aborted_ = result.n_aborted
        self.sample_meta_ = result.meta
        X = result.samples
        if self.scale_ is not None:
            X = X * self.scale_ + self.shift_
        return X

    def score_samples(self, X):
        """Log density of the target at ``X`` (known-density targets only)."""
        check_is_fitted(self, "config_")
        if not isinstance(self.target_, Target):
            raise ConfigError("score_samples needs an explicit target density")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ConfigError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self.target_.log_density(X)
