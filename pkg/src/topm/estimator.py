"""Online regularized least squares over arm features.

EstimatorState maintains the design matrix lam*I + sum N_a x_a x_a^T (with its
inverse), the cumulative response vector, per-arm counts, and exposes the
empirical means, gaps, and deviation norms the gap indices are built from.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionMismatch
from .linalg import PosDefState


class EstimatorState:
    """One estimator per trial; single-threaded mutation.

    lam = 0 is allowed only for canonical (identity) features and defers the
    inverse until every arm has been pulled at least once, which is exactly
    what the mandatory initialization pass guarantees.
    """

    def __init__(self, features, sigma: float, lam: float,
                 recompute_every: int = 1000):
        x = np.array(features, dtype=np.float64)
        if x.ndim != 2:
            raise DimensionMismatch("features must be a 2-D (N, K) matrix")
        self.features = x
        self._xt = np.ascontiguousarray(x.T)
        n, k = x.shape
        self.sigma = float(sigma)
        self.lam = float(lam)
        self.recompute_every = int(recompute_every)
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.lam == 0 and not (n == k and np.array_equal(x, np.eye(k))):
            raise ConfigError(
                "lambda = 0 is only supported for canonical features with a "
                "full initialization pass"
            )
        self.design = (
            PosDefState.from_regularization(n, self.lam, recompute_every)
            if self.lam > 0 else None
        )
        self._raw_design = None if self.lam > 0 else np.zeros((n, n))
        self.response = np.zeros(n)
        self.counts = np.zeros(k, dtype=np.int64)
        self.round = 0

    @property
    def K(self) -> int:
        return self.features.shape[1]

    @property
    def N(self) -> int:
        return self.features.shape[0]

    def update(self, arm: int, reward: float) -> "EstimatorState":
        """Record one pull of ``arm`` with the observed reward.  Returns self."""
        if not 0 <= arm < self.K:
            raise DimensionMismatch(f"arm {arm} out of range [0, {self.K})")
        x = self._xt[arm]
        self.counts[arm] += 1
        self.round += 1
        self.response += float(reward) * x
        if self.design is not None:
            self.design.rank_one_update(x)
        else:
            self._raw_design += x.reshape(-1, 1) * x.reshape(1, -1)
            if np.all(self.counts >= 1):
                self.design = PosDefState(self._raw_design,
                                          recompute_every=self.recompute_every)
                self._raw_design = None
        return self

    def _require_design(self) -> PosDefState:
        if self.design is None:
            raise ConfigError(
                "design not yet invertible: lam = 0 requires one pull of every "
                "arm before estimates are defined"
            )
        return self.design

    @property
    def theta_hat(self) -> np.ndarray:
        return self._require_design().inverse @ self.response

    def empirical_mean(self, arm: int) -> float:
        if not 0 <= arm < self.K:
            raise DimensionMismatch(f"arm {arm} out of range [0, {self.K})")
        return float(self._xt[arm] @ self.theta_hat)

    def empirical_gap(self, i: int, j: int) -> float:
        return self.empirical_mean(i) - self.empirical_mean(j)

    def deviation(self, y) -> float:
        """sigma * ||y|| in the inverse-design norm (the width factor)."""
        return self.sigma * float(np.sqrt(self._require_design().quad_form(y)))

    def arm_deviation(self, arm: int) -> float:
        return self.deviation(self._xt[arm])
