"""Seeded Gaussian-mixture generators, including the two benchmark sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .clustering import DataSet
from .errors import InputError
from .numkernel import cholesky


@dataclass(frozen=True)
class MixtureSpec:
    counts: tuple[int, ...]
    means: NDArray[np.float64]
    covs: NDArray[np.float64]

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        covs = np.asarray(self.covs, dtype=float).reshape(means.shape[0], means.shape[1], means.shape[1])
        if len(self.counts) != means.shape[0] or any(int(c) < 1 for c in self.counts):
            raise InputError("need one positive count per component")
        for c in covs:
            cholesky(c, reg_eps=0.0)
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)

    @property
    def k(self) -> int:
        return len(self.counts)

    @property
    def r(self) -> int:
        return self.means.shape[1]

    @property
    def n(self) -> int:
        return sum(self.counts)

    def to_dict(self) -> dict:
        return {"counts": list(self.counts), "means": self.means.tolist(), "covs": self.covs.tolist()}


@dataclass(frozen=True)
class LabeledDraw:
    data: DataSet
    labels: NDArray[np.int64]
    spec: MixtureSpec

    @property
    def true_k(self) -> int:
        return self.spec.k


def sample_mvn(n: int, mu: ArrayLike, sigma: ArrayLike, rng: np.random.Generator) -> NDArray[np.float64]:
    """``n`` draws of ``mu + L z`` with ``L`` the Cholesky factor of ``sigma``."""
    mu = np.asarray(mu, dtype=float).reshape(-1)
    low = cholesky(sigma, reg_eps=0.0).lower
    z = rng.standard_normal((n, mu.shape[0]))
    return mu + z @ low.T


def sample_mixture(spec: MixtureSpec, rng: np.random.Generator, name: str = "") -> LabeledDraw:
    """Exactly ``spec.counts[k]`` points from component ``k``, in component order."""
    x = np.vstack([sample_mvn(c, mu, cov, rng) for c, mu, cov in zip(spec.counts, spec.means, spec.covs)])
    labels = np.repeat(np.arange(spec.k), spec.counts)
    return LabeledDraw(DataSet(x, labels, name), labels, spec)


DATA1_MEANS = np.array([[2.0, 3.5], [6.0, 2.7], [9.0, 4.0]])
DATA1_COVS = np.array([
    [[0.2, 0.1], [0.1, 0.75]],
    [[0.5, 0.25], [0.25, 0.5]],
    [[1.0, 0.5], [0.5, 1.0]],
])
DATA1_BASE_COUNTS = (50, 100, 200)

DATA2_MEANS = np.array([
    [0.0, 0.0], [3.0, -2.5], [3.0, 1.0], [-1.0, -3.0], [-4.0, 0.0],
    [-1.0, 1.0], [-3.0, 3.0], [2.5, 4.0], [-3.5, -2.5], [0.0, 3.0],
])
DATA2_COVS = np.array(
    [[[0.25, -0.15], [-0.15, 0.15]], [[0.5, 0.0], [0.0, 0.15]]] + [[[0.1, 0.0], [0.0, 0.1]]] * 8
)


def data1_spec(gamma: int) -> MixtureSpec:
    if gamma < 1:
        raise InputError("gamma must be >= 1")
    return MixtureSpec(tuple(gamma * c for c in DATA1_BASE_COUNTS), DATA1_MEANS, DATA1_COVS)


def data2_spec(n_k: int) -> MixtureSpec:
    if n_k < 1:
        raise InputError("n_k must be >= 1")
    return MixtureSpec((n_k,) * 10, DATA2_MEANS, DATA2_COVS)


def gen_data1(gamma: int, rng: np.random.Generator) -> LabeledDraw:
    """Three overlapping, unbalanced clusters with sizes 50, 100, 200 times ``gamma``."""
    return sample_mixture(data1_spec(gamma), rng, f"data1-gamma{gamma}")


def gen_data2(n_k: int, rng: np.random.Generator) -> LabeledDraw:
    """Ten equally sized clusters: two elliptical, eight spherical."""
    return sample_mixture(data2_spec(n_k), rng, f"data2-nk{n_k}")
