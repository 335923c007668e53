"""Label-alignment regularized least squares for unsupervised domain adaptation.

The objective for weights ``w`` is

    ||phi w - y||^2 - sum_{i>k} sigma_i^2 (v_i^T w)^2 + lam * sum_{i>kt} st_i^2 (vt_i^T w)^2

where (sigma_i, v_i) come from the labeled source design ``phi`` and
(st_i, vt_i) from the unlabeled target design. Written as a quadratic it is
``w^T M w - 2 b^T w + ||y||^2`` with ``M = S_k + lam (St - St_kt)`` and
``b = phi^T y``; every solver here works from ``M`` and ``b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .errors import NumericalError
from .spectral import (
    DesignMatrix,
    SpectralDecomposition,
    coordinates,
    decompose,
    eigh_descending,
    gram,
    label_components,
    tail_gram,
    truncated_gram,
)

MODES = ("label-align", "unregularized", "l2")
STEP_RULES = ("auto", "inv2sigma1")
DIVERGENCE_LIMIT = 1e12
# Consistency tolerance for rank-deficient systems, relative to ||b||.
CONSISTENCY_RTOL = 1e-6


class SingularSystemError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


@dataclass(frozen=True)
class AdaptConfig:
    """Hyperparameters of one training run.

    ``step_size`` is a positive float, ``"auto"`` (1 / (2 lambda_max(M)), which
    makes gradient descent monotone) or ``"inv2sigma1"`` (1 / (2 sigma_1) with
    sigma_1 the top singular value of the source design).
    """

    k: int = 1
    k_tilde: int = 1
    lam: float = 1.0
    iterations: int = 5000
    step_size: Union[float, str] = "auto"
    mode: str = "label-align"
    l2_coef: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.lam < 0 or self.l2_coef < 0:
            raise ValueError("lam and l2_coef must be nonnegative")
        if isinstance(self.step_size, str):
            if self.step_size not in STEP_RULES:
                raise ValueError(f"unknown step rule {self.step_size!r}")
        elif self.step_size < 0:
            raise ValueError("step_size must be nonnegative")
        if self.k < 0 or self.k_tilde < 0:
            raise ValueError("cutoffs must be nonnegative")

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "lam": self.lam,
            "k": self.k,
            "k_tilde": self.k_tilde,
            "l2_coef": self.l2_coef,
            "iterations": self.iterations,
            "step_size": self.step_size,
        }


@dataclass(frozen=True, eq=False)
class RegularizedProblem:
    """Labeled source, unlabeled target and a config; spectra are computed once.

    Use :meth:`with_config` to try other hyperparameters on the same data; the
    derived matrices are memoized and shared between such siblings.
    """

    source: DesignMatrix
    y: np.ndarray
    target: DesignMatrix
    config: AdaptConfig = field(default_factory=AdaptConfig)
    source_spectrum: Optional[SpectralDecomposition] = None
    target_spectrum: Optional[SpectralDecomposition] = None
    _memo: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        if y.shape != (self.source.n,):
            raise ValueError(f"labels have shape {y.shape}, expected ({self.source.n},)")
        if self.source.d != self.target.d:
            raise ValueError(
                f"source and target feature dimensions differ ({self.source.d} != {self.target.d})"
            )
        cfg = self.config
        if cfg.k > self.d or cfg.k_tilde > self.d:
            raise ValueError(f"cutoffs k={cfg.k}, k_tilde={cfg.k_tilde} exceed d={self.d}")
        object.__setattr__(self, "y", y)
        if self.source_spectrum is None:
            object.__setattr__(self, "source_spectrum", decompose(self.source))
        if self.target_spectrum is None:
            object.__setattr__(self, "target_spectrum", decompose(self.target))

    @property
    def d(self) -> int:
        return self.source.d

    def with_config(self, config: AdaptConfig) -> "RegularizedProblem":
        return replace(self, config=config)

    def _cached(self, key, fn):
        if key not in self._memo:
            self._memo[key] = fn()
        return self._memo[key]

    @property
    def rhs(self) -> np.ndarray:
        """phi^T y."""
        return self._cached("rhs", lambda: self.source.data.T @ self.y)

    @property
    def label_sq_norm(self) -> float:
        return self._cached("ysq", lambda: float(self.y @ self.y))

    @property
    def source_gram(self) -> np.ndarray:
        return self._cached("S", lambda: gram(self.source))

    @property
    def target_gram(self) -> np.ndarray:
        return self._cached("St", lambda: gram(self.target))

    def source_truncated(self, k: int) -> np.ndarray:
        return self._cached(("S_k", k), lambda: truncated_gram(self.source_spectrum, k))

    def target_truncated(self, k: int) -> np.ndarray:
        return self._cached(("St_k", k), lambda: truncated_gram(self.target_spectrum, k))

    def target_tail(self, k: int) -> np.ndarray:
        return self._cached(("St_tail", k), lambda: tail_gram(self.target_spectrum, k))

    def system_matrix(self) -> np.ndarray:
        """M such that the objective is w^T M w - 2 b^T w + ||y||^2."""
        cfg = self.config
        if cfg.mode == "unregularized":
            return self.source_gram
        if cfg.mode == "l2":
            return self.source_gram + cfg.l2_coef * np.eye(self.d)
        return self.source_truncated(cfg.k) + cfg.lam * self.target_tail(cfg.k_tilde)


@dataclass
class SolutionReport:
    weights: np.ndarray
    solver: str
    config: Optional[AdaptConfig] = None
    objective_trace: np.ndarray = field(default_factory=lambda: np.empty(0))
    step_size: Optional[float] = None
    param_distance: Optional[float] = None
    bound_thm1: Optional[tuple[float, float]] = None
    bound_thm2: Optional[tuple[float, float]] = None
    metrics: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)


def objective_value(w, prob: RegularizedProblem) -> float:
    """Three-term objective evaluated directly from the designs and spectra."""
    w = np.asarray(w, dtype=np.float64)
    resid = prob.source.data @ w - prob.y
    value = float(resid @ resid)
    cfg = prob.config
    if cfg.mode == "unregularized":
        return value
    if cfg.mode == "l2":
        return value + cfg.l2_coef * float(w @ w)
    sd, sdt = prob.source_spectrum, prob.target_spectrum
    wv = coordinates(w, sd)
    wt = coordinates(w, sdt)
    value -= float(np.sum(sd.eigenvalues[cfg.k :] * wv[cfg.k :] ** 2))
    value += cfg.lam * float(np.sum(sdt.eigenvalues[cfg.k_tilde :] * wt[cfg.k_tilde :] ** 2))
    return value


def objective_gradient(w, prob: RegularizedProblem) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    return 2.0 * (prob.system_matrix() @ w - prob.rhs)


def _quadratic_objective(w, m, b, ysq) -> float:
    return float(w @ (m @ w) - 2.0 * (b @ w) + ysq)


def resolve_step_size(prob: RegularizedProblem, m: Optional[np.ndarray] = None) -> float:
    step = prob.config.step_size
    if step == "auto":
        if m is None:
            m = prob.system_matrix()
        top = float(np.linalg.eigvalsh(m)[-1])
        return 0.0 if top <= 0 else 1.0 / (2.0 * top)
    if step == "inv2sigma1":
        s1 = float(prob.source_spectrum.singular_values[0])
        return 0.0 if s1 == 0 else 1.0 / (2.0 * s1)
    return float(step)


def _check_divergence(trace: np.ndarray, step: float):
    bad = ~np.isfinite(trace) | ((trace > DIVERGENCE_LIMIT) & (trace > trace[0]))
    if bad.any():
        j = int(np.argmax(bad))
        raise DivergenceError(
            f"gradient descent diverged at iteration {j} "
            f"(objective {trace[j]:.3e}, step size {step:.3e})"
        )


def fit_gd(prob: RegularizedProblem, method: str = "loop") -> SolutionReport:
    """Full-batch gradient descent from w = 0 for ``config.iterations`` steps.

    ``method="loop"`` iterates literally. ``method="spectral"`` evaluates the
    same iterate in closed form through the eigendecomposition of M:
    after t steps from zero, w_t = sum_i (1 - (1 - 2 a l_i)^t) / l_i * q_i q_i^T b.
    The trace holds the objective at w_0 = 0 and after each step.
    """
    m = prob.system_matrix()
    b = prob.rhs
    ysq = prob.label_sq_norm
    t = prob.config.iterations
    step = resolve_step_size(prob, m)

    if method == "loop":
        w = np.zeros(prob.d)
        trace = np.empty(t + 1)
        trace[0] = ysq
        for j in range(1, t + 1):
            w = w - step * 2.0 * (m @ w - b)
            trace[j] = _quadratic_objective(w, m, b, ysq)
            if not math.isfinite(trace[j]) or trace[j] > DIVERGENCE_LIMIT:
                _check_divergence(trace[: j + 1], step)
    elif method == "spectral":
        evals, q = eigh_descending(m)
        evals = np.clip(evals, 0.0, None)
        beta = q.T @ b
        gains = gd_gains(evals, step, np.arange(t + 1))
        coef = gains * beta  # (t+1, d): coordinates of w_j in the eigenbasis
        with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
            trace = np.sum(evals * coef**2 - 2.0 * beta * coef, axis=1) + ysq
            w = q @ coef[-1]
    else:
        raise ValueError(f"unknown method {method!r}")

    _check_divergence(trace, step)
    return SolutionReport(
        weights=w,
        solver=f"gd-{method}",
        config=prob.config,
        objective_trace=trace,
        step_size=step,
    )


def gd_gains(evals: np.ndarray, step: float, steps: np.ndarray) -> np.ndarray:
    """Gain g_j(l) = (1 - (1 - 2 a l)^j) / l, with the limit 2 a j at l = 0.

    Returns an array of shape (len(steps), len(evals)).
    """
    evals = np.asarray(evals, dtype=np.float64)
    j = np.asarray(steps, dtype=np.float64)[:, None]
    x = 2.0 * step * evals
    out = np.empty((j.shape[0], evals.size))
    zero = evals <= 0
    out[:, zero] = 2.0 * step * j
    nz = ~zero
    x = x[nz]
    with np.errstate(over="ignore", invalid="ignore"):
        # exp/log1p keeps contraction factors close to one accurate
        small = np.abs(x) < 0.5
        pw = np.where(small, np.exp(j * np.log1p(-np.where(small, x, 0.0))), np.power(1.0 - x, j))
        out[:, nz] = (1.0 - pw) / evals[nz]
    return out


def solve_psd(m: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, list]:
    """Solve M w = b for symmetric PSD M through its eigendecomposition.

    Eigenvalues below ``lambda_max * d * eps64`` count as zero. A rank-deficient
    system is solved in the minimum-norm sense when b lies in the range of M;
    otherwise SingularSystemError is raised.
    """
    d = m.shape[0]
    evals, q = eigh_descending(0.5 * (m + m.T))
    top = evals[0] if evals.size else 0.0
    if top <= 0:
        raise SingularSystemError("regularized system singular; increase λ, k, or k̃")
    keep = evals > top * d * np.finfo(np.float64).eps
    beta = q.T @ b
    flags = []
    if not np.all(keep):
        null_part = float(np.linalg.norm(beta[~keep]))
        if null_part > CONSISTENCY_RTOL * max(float(np.linalg.norm(b)), 1e-300):
            raise SingularSystemError("regularized system singular; increase λ, k, or k̃")
        flags.append("pseudoinverse")
    w = q[:, keep] @ (beta[keep] / evals[keep])
    return w, flags


def fit_closed_form(prob: RegularizedProblem) -> SolutionReport:
    """Stationary point of the objective: (S_k + lam (St - St_kt)) w = phi^T y."""
    m = prob.system_matrix()
    w, flags = solve_psd(m, prob.rhs)
    trace = np.array([_quadratic_objective(w, m, prob.rhs, prob.label_sq_norm)])
    return SolutionReport(
        weights=w, solver="closed", config=prob.config, objective_trace=trace, flags=flags
    )


def target_oracle(target: DesignMatrix, y_target) -> np.ndarray:
    """Least-squares weights fitted on the labeled target (evaluation only)."""
    st = gram(target)
    evals = np.linalg.eigvalsh(st)
    if evals[-1] <= 0 or evals[0] <= evals[-1] * st.shape[0] * np.finfo(np.float64).eps:
        raise NumericalError("target Gram matrix is singular")
    return np.linalg.solve(st, target.data.T @ np.asarray(y_target, dtype=np.float64))


def source_least_squares(
    source: DesignMatrix, y, mode: str = "unregularized", l2_coef: float = 0.0
) -> SolutionReport:
    """No-adaptation baseline: plain or ridge least squares on the source."""
    y = np.asarray(y, dtype=np.float64)
    s = gram(source)
    if mode == "l2":
        s = s + l2_coef * np.eye(source.d)
    elif mode != "unregularized":
        raise ValueError(f"mode must be 'unregularized' or 'l2', got {mode!r}")
    b = source.data.T @ y
    try:
        w, flags = solve_psd(s, b)
    except SingularSystemError:
        # the normal equations are always consistent; this only triggers on roundoff
        w = np.linalg.lstsq(source.data, y, rcond=None)[0]
        flags = ["pseudoinverse"]
    cfg = AdaptConfig(k=source.d, k_tilde=source.d, mode=mode, l2_coef=l2_coef)
    return SolutionReport(weights=w, solver="closed", config=cfg, flags=flags)


def _spectral_norm_sym(a: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (a + a.T)))))


def _target_min_eig(prob: RegularizedProblem) -> float:
    lo = float(np.linalg.eigvalsh(prob.target_gram)[0])
    if lo <= 0:
        raise NumericalError("target Gram matrix is singular")
    return lo


def bound_thm1(prob: RegularizedProblem, w_hat, w_target, y_target) -> tuple[float, float]:
    """Distance of the regularized solution to the target optimum and its upper bound.

    Only defined for the unit regularization weight, lam = 1.
    """
    if prob.config.mode != "label-align" or prob.config.lam != 1.0:
        raise ValueError("the regularized-solution bound requires mode='label-align' and lam=1")
    w_hat = np.asarray(w_hat, dtype=np.float64)
    lo = _target_min_eig(prob)
    b_diff = prob.rhs - prob.target.data.T @ np.asarray(y_target, dtype=np.float64)
    gram_gap = _spectral_norm_sym(
        prob.source_truncated(prob.config.k) - prob.target_truncated(prob.config.k_tilde)
    )
    lhs = float(np.linalg.norm(w_hat - w_target))
    rhs = (float(np.linalg.norm(b_diff)) + float(np.linalg.norm(w_hat)) * gram_gap) / lo
    return lhs, rhs


def bound_thm2(prob: RegularizedProblem, w_source, w_target, y_target) -> tuple[float, float]:
    """Same as :func:`bound_thm1` for the unregularized source solution and full Grams."""
    w_source = np.asarray(w_source, dtype=np.float64)
    lo = _target_min_eig(prob)
    b_diff = prob.rhs - prob.target.data.T @ np.asarray(y_target, dtype=np.float64)
    gram_gap = _spectral_norm_sym(prob.source_gram - prob.target_gram)
    lhs = float(np.linalg.norm(w_source - w_target))
    rhs = (float(np.linalg.norm(b_diff)) + float(np.linalg.norm(w_source)) * gram_gap) / lo
    return lhs, rhs


def rewrite_check(
    w, source: DesignMatrix, y, sd: Optional[SpectralDecomposition] = None
) -> tuple[float, float]:
    """Least-squares loss computed directly and in the singular bases."""
    if sd is None:
        sd = decompose(source)
    w = np.asarray(w, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    resid = source.data @ w - y
    direct = float(resid @ resid)
    r = sd.rank
    yu = label_components(source, y, sd)
    wv = coordinates(w, sd)[:r]
    in_span = float(np.sum((sd.singular_values[:r] * wv - yu) ** 2))
    out_of_span = float(y @ y) - float(yu @ yu)
    return direct, in_span + out_of_span
