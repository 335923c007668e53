"""Synthetic scenarios: rotated anisotropic Gaussians and the correlated-features toy.

All randomness goes through ``numpy.random.Generator`` backed by PCG64, seeded
explicitly, so a (spec, seed) pair always produces the same arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .spectral import DesignMatrix, decompose

RNG_ALGORITHM = "PCG64"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class SyntheticSpec:
    n_source: int = 2000
    n_target: int = 2000
    anisotropy: tuple[float, float] = (2.0, 1.0)
    rotation_deg: float = 45.0
    seed: int = 0
    task: str = "classification"

    def __post_init__(self):
        major, minor = self.anisotropy
        if not major > minor > 0:
            raise ValueError(f"anisotropy needs major > minor > 0, got {self.anisotropy}")
        if self.n_source < 2 or self.n_target < 2:
            raise ValueError("need at least two samples per domain")
        if self.task not in ("classification", "regression"):
            raise ValueError(f"unknown task {self.task!r}")

    def as_dict(self) -> dict:
        return {
            "n_source": self.n_source,
            "n_target": self.n_target,
            "anisotropy": list(self.anisotropy),
            "rotation_deg": self.rotation_deg,
            "seed": self.seed,
            "task": self.task,
            "rng": RNG_ALGORITHM,
        }


class Domain(NamedTuple):
    design: DesignMatrix
    labels: np.ndarray


def rotation_matrix(deg: float) -> np.ndarray:
    th = math.radians(deg)
    c, s = math.cos(th), math.sin(th)
    return np.array([[c, -s], [s, c]])


def _gaussian_with_signs(rng, n, scales):
    x = rng.standard_normal((n, 2)) * np.asarray(scales)
    # a zero first coordinate has probability zero; redraw it rather than pick a class
    while np.any(x[:, 0] == 0.0):
        hit = x[:, 0] == 0.0
        x[hit, 0] = rng.standard_normal(int(hit.sum())) * scales[0]
    return x


def top_left_singular_vector(m: DesignMatrix, reference: np.ndarray) -> np.ndarray:
    """First left singular vector, signed to correlate positively with ``reference``."""
    sd = decompose(m)
    u = m.data @ sd.right_vectors[:, 0] / sd.singular_values[0]
    return u if float(u @ reference) >= 0 else -u


def synth_task(spec: SyntheticSpec, extra_rotation_deg: float = 0.0) -> tuple[Domain, Domain]:
    """Source and rotated target domains with a bias column appended.

    Target points are fresh draws labeled by their pre-rotation first
    coordinate, so the class boundary rotates along with the inputs. Regression
    labels are the first left singular vector of each realized design, signed
    to agree with that same pre-rotation coordinate. ``extra_rotation_deg``
    rotates both domains jointly (used for equivariance checks).
    """
    rng = make_rng(spec.seed)
    xs_raw = _gaussian_with_signs(rng, spec.n_source, spec.anisotropy)
    xt_raw = _gaussian_with_signs(rng, spec.n_target, spec.anisotropy)
    xs = xs_raw
    xt = xt_raw @ rotation_matrix(spec.rotation_deg).T
    if extra_rotation_deg:
        extra = rotation_matrix(extra_rotation_deg).T
        xs, xt = xs @ extra, xt @ extra
    source = DesignMatrix.with_bias(xs)
    target = DesignMatrix.with_bias(xt)
    if spec.task == "classification":
        ys, yt = np.sign(xs_raw[:, 0]), np.sign(xt_raw[:, 0])
    else:
        ys = top_left_singular_vector(source, xs_raw[:, 0])
        yt = top_left_singular_vector(target, xt_raw[:, 0])
    return Domain(source, ys), Domain(target, yt)


def correlated_features_toy(
    s: float, seed: int, n: int = 1000, d: int = 10, n_correlated: int = 9
) -> tuple[DesignMatrix, np.ndarray]:
    """Unit-norm labels with ``n_correlated`` noisy copies as features plus pure-noise columns.

    Every column is rescaled to unit norm. No bias column is added.
    """
    if s < 0:
        raise ValueError("s must be nonnegative")
    rng = make_rng(seed)
    y = rng.standard_normal(n)
    y /= np.linalg.norm(y)
    phi = np.empty((n, d))
    phi[:, :n_correlated] = y[:, None] + s * rng.standard_normal((n, n_correlated))
    phi[:, n_correlated:] = rng.standard_normal((n, d - n_correlated))
    phi /= np.linalg.norm(phi, axis=0)
    return DesignMatrix(phi), y


def label_balance(labels: np.ndarray) -> float:
    """Fraction of +1 labels."""
    return float(np.mean(np.asarray(labels) > 0))

