"""Label-alignment diagnostics and the correlated-features emergence bound."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError
from .spectral import DesignMatrix, SpectralDecomposition, decompose, label_components


@dataclass(frozen=True, eq=False)
class AlignmentProfile:
    """Label components in the left singular basis, truncated at the numerical rank."""

    components: np.ndarray
    total_energy: float
    rank: int
    n: int
    d: int
    label_norm: float

    @property
    def cumulative_energy(self) -> np.ndarray:
        """Captured squared norm for k = 0..rank."""
        return np.concatenate([[0.0], np.cumsum(self.components**2)])


@dataclass(frozen=True)
class EmergenceParams:
    k_hat: int
    delta: float
    d: int
    s: float = 0.0

    def __post_init__(self):
        if self.k_hat < 1 or self.d < self.k_hat:
            raise ValueError(f"need 1 <= k_hat <= d, got k_hat={self.k_hat}, d={self.d}")


def alignment_profile(
    m: DesignMatrix, y, sd: SpectralDecomposition | None = None
) -> AlignmentProfile:
    if sd is None:
        sd = decompose(m)
    if sd.rank == 0:
        raise NumericalError("degenerate design matrix")
    comps = label_components(m, y, sd)
    return AlignmentProfile(
        components=comps,
        total_energy=float(np.sum(comps**2)),
        rank=sd.rank,
        n=m.n,
        d=m.d,
        label_norm=float(np.linalg.norm(y)),
    )


def k_epsilon(p: AlignmentProfile, eps: float) -> int:
    """Smallest k whose tail energy beyond k is below ``eps`` times the in-span norm."""
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if p.total_energy <= 0:
        raise NumericalError("label orthogonal to feature span")
    sq = p.components**2
    # tails[k] = sum_{i > k} sq_i for k = 0..r, accumulated from the end to avoid cancellation
    tails = np.concatenate([np.cumsum(sq[::-1])[::-1], [0.0]])
    hits = np.flatnonzero(np.sqrt(tails) < eps * math.sqrt(p.total_energy))
    return int(hits[0]) if hits.size else p.rank


def projection_energy(p: AlignmentProfile, k: int) -> float:
    """Fraction of ||y|| captured by the top-k left singular directions."""
    if not 0 <= k <= p.rank:
        raise ValueError(f"k must lie in [0, {p.rank}], got {k}")
    if p.label_norm == 0:
        raise NumericalError("zero label vector")
    return float(math.sqrt(np.sum(p.components[:k] ** 2)) / p.label_norm)


def emergence_conditions(k_hat: int, delta: float, d: int) -> bool:
    if not 0 < delta < 0.2:
        return False
    c = 16 * delta**2
    return k_hat > c / (-15 * delta**2 - 2 * delta + 1) and d > c * (k_hat - 1)


def emergence_lower_bound(p: EmergenceParams) -> float | None:
    """Lower bound on the label projection onto the top d - k_hat + 1 left singular vectors.

    Returns None when the side conditions on (k_hat, delta, d) do not hold.
    """
    if not emergence_conditions(p.k_hat, p.delta, p.d):
        return None
    c = 16 * p.delta**2 * (p.k_hat - 1)
    return math.sqrt((p.k_hat * (1 - p.delta) ** 2 - c) / (p.d - c))


def normalize_columns(m: DesignMatrix | np.ndarray) -> np.ndarray:
    phi = m.data if isinstance(m, DesignMatrix) else np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(phi, axis=0)
    norms[norms == 0] = 1.0
    return phi / norms


def column_label_dots(m: DesignMatrix, y) -> np.ndarray:
    """|phi_i^T y| after scaling every column and y to unit norm."""
    y = np.asarray(y, dtype=np.float64)
    ny = np.linalg.norm(y)
    if ny == 0:
        raise DataError("label vector is zero")
    return np.abs(normalize_columns(m).T @ (y / ny))


def measured_delta(m: DesignMatrix, y, columns=None, threshold: float | None = None) -> tuple[float, int]:
    """Realized (delta, k_hat) of an instance.

    ``delta`` is one minus the smallest |phi_i^T y| over ``columns`` (all columns
    by default), nudged up by a few ulps so that every designated column
    satisfies the strict inequality |phi_i^T y| > 1 - delta. ``k_hat`` counts all columns
    above ``1 - threshold``; the threshold defaults to the measured delta.
    """
    dots = column_label_dots(m, y)
    chosen = dots if columns is None else dots[np.asarray(columns)]
    lowest = float(chosen.min())
    ulp = float(np.finfo(np.float64).epsneg)  # spacing just below 1.0
    delta = max(1.0 - lowest, ulp)
    while not 1.0 - delta < lowest:
        delta += max(ulp, float(np.spacing(delta)))
    cut = delta if threshold is None else threshold
    return delta, int(np.sum(dots > 1.0 - cut))
