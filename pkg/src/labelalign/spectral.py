"""Spectral decomposition of design matrices through their Gram matrix.

The right singular vectors and singular values of ``phi`` are read off the
eigendecomposition of the d x d Gram matrix ``phi.T @ phi``. The n x n left
singular basis is never formed; anything that needs it goes through the
identity ``u_i = phi @ v_i / sigma_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError

# Single-precision machine epsilon, used by the numerical-rank rule.
RANK_EPS = 1.19209e-07


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """An n x d feature matrix, optionally carrying a trailing constant bias column."""

    data: np.ndarray
    has_bias: bool = False

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 2:
            raise DataError(f"design matrix must be 2-D, got shape {data.shape}")
        n, d = data.shape
        if n < 1 or d < 1:
            raise DataError(f"design matrix must be non-empty, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise DataError("design matrix has non-finite entries")
        if self.has_bias and not np.all(data[:, -1] == 1.0):
            raise DataError("bias column must be exactly 1.0 in every row")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def with_bias(cls, features) -> "DesignMatrix":
        """Append a constant-one column to ``features``."""
        x = np.asarray(features, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        return cls(np.hstack([x, np.ones((x.shape[0], 1))]), has_bias=True)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def __len__(self):
        return self.n


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Descending singular values, right singular vectors (columns) and numerical rank."""

    singular_values: np.ndarray
    right_vectors: np.ndarray
    rank: int
    n: int

    @property
    def d(self) -> int:
        return self.singular_values.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.singular_values**2


def _as_array(m) -> np.ndarray:
    return m.data if isinstance(m, DesignMatrix) else np.asarray(m, dtype=np.float64)


def gram(m: DesignMatrix) -> np.ndarray:
    """Return the symmetric Gram matrix phi^T phi."""
    phi = _as_array(m)
    s = phi.T @ phi
    return 0.5 * (s + s.T)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # flip each column so that its largest-magnitude entry is positive
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def eigh_descending(sym: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, sorted descending, sign-normalized."""
    try:
        evals, evecs = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    order = np.argsort(-evals, kind="stable")  # ties keep the solver's order
    return evals[order], _fix_signs(evecs[:, order])


def _count_above_threshold(sigma: np.ndarray, n: int, d: int) -> int:
    if sigma.size == 0 or sigma[0] <= 0:
        return 0
    return int(np.sum(sigma > sigma[0] * max(n, d) * RANK_EPS))


def numerical_rank(sd: SpectralDecomposition, n: int, d: int) -> int:
    """Count singular values strictly above ``sigma_1 * max(n, d) * RANK_EPS``."""
    return _count_above_threshold(np.asarray(sd.singular_values), n, d)


def decompose(m: DesignMatrix) -> SpectralDecomposition:
    phi = _as_array(m)
    n, d = phi.shape
    evals, evecs = eigh_descending(gram(phi))
    sigma = np.sqrt(np.clip(evals, 0.0, None))
    return SpectralDecomposition(sigma, evecs, _count_above_threshold(sigma, n, d), n)


def label_components(m: DesignMatrix, y, sd: SpectralDecomposition) -> np.ndarray:
    """Components of ``y`` along the left singular vectors with nonzero singular value.

    Uses ``u_i^T y = v_i^T (phi^T y) / sigma_i``, so only the first ``sd.rank``
    components are returned.
    """
    phi = _as_array(m)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (phi.shape[0],):
        raise DataError(f"label vector has shape {y.shape}, expected ({phi.shape[0]},)")
    r = sd.rank
    proj = sd.right_vectors[:, :r].T @ (phi.T @ y)
    return proj / sd.singular_values[:r]


def coordinates(w, sd: SpectralDecomposition) -> np.ndarray:
    """Express ``w`` in the right singular basis, V^T w."""
    return sd.right_vectors.T @ np.asarray(w, dtype=np.float64)


def truncated_gram(sd: SpectralDecomposition, k: int) -> np.ndarray:
    """Rank-k spectral truncation, sum_{i<=k} sigma_i^2 v_i v_i^T."""
    v = sd.right_vectors[:, :k]
    return (v * sd.eigenvalues[:k]) @ v.T


def tail_gram(sd: SpectralDecomposition, k: int) -> np.ndarray:
    """Residual after truncation, sum_{i>k} sigma_i^2 v_i v_i^T."""
    v = sd.right_vectors[:, k:]
    return (v * sd.eigenvalues[k:]) @ v.T
