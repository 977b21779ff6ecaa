"""Dense positive-definite matrices with incrementally maintained inverses."""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import DimensionMismatch


class PosDefState:
    """A symmetric positive-definite matrix A together with A^-1.

    The inverse tracks rank-one updates A <- A + x x^T through the
    Sherman-Morrison identity and is re-derived by dense inversion every
    ``recompute_every`` updates, which bounds floating-point drift on long
    update sequences.  Single-writer: not safe for concurrent mutation.
    """

    def __init__(self, matrix, recompute_every: int = 1000):
        a = np.array(matrix, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"matrix must be square, got shape {a.shape}")
        scale = 1.0 + np.abs(a).max()
        if np.abs(a - a.T).max() > 1e-10 * scale:
            raise ValueError("matrix is not symmetric within 1e-10 relative tolerance")
        try:
            np.linalg.cholesky(a)
        except np.linalg.LinAlgError:
            raise ValueError("matrix is not positive definite") from None
        self.matrix = a
        self.inverse = np.linalg.inv(a)
        kernels.symmetrize(self.inverse)
        self.dim = a.shape[0]
        self.recompute_every = int(recompute_every)
        self._updates_since_recompute = 0

    @classmethod
    def from_regularization(cls, dim: int, lam: float, recompute_every: int = 1000):
        """The fresh design state lam * I_N."""
        if lam <= 0:
            raise ValueError("regularization must be positive")
        return cls(np.eye(int(dim)) * float(lam), recompute_every=recompute_every)

    def rank_one_update(self, x):
        """A <- A + x x^T, maintaining the inverse in place.  Returns self."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise DimensionMismatch(
                f"update vector has shape {x.shape}, expected ({self.dim},)"
            )
        x = np.ascontiguousarray(x)
        self.matrix += x.reshape(-1, 1) * x.reshape(1, -1)
        kernels.sm_update(self.inverse, x)
        self._updates_since_recompute += 1
        if self._updates_since_recompute >= self.recompute_every:
            self.recompute()
        return self

    def quad_form(self, y) -> float:
        """y^T A^-1 y >= 0 using the maintained inverse."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.dim,):
            raise DimensionMismatch(
                f"vector has shape {y.shape}, expected ({self.dim},)"
            )
        y = np.ascontiguousarray(y)
        v = kernels.quad_form_inv(self.inverse, y)
        return v if v > 0.0 else 0.0

    def recompute(self) -> None:
        """Re-derive the inverse from the accumulated matrix."""
        self.inverse = np.linalg.inv(self.matrix)
        kernels.symmetrize(self.inverse)
        self._updates_since_recompute = 0

    def inverse_error(self) -> float:
        """Max-entry error of matrix @ inverse against the identity."""
        return float(
            np.abs(self.matrix @ self.inverse - np.eye(self.dim)).max()
        )
