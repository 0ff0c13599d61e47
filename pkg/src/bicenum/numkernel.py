"""Dense linear algebra and Gaussian kernels shared by the fitters and criteria."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from .errors import DimMismatch, EmptySubset, NotSpd

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class SpdFactor:
    """Lower Cholesky factor of ``m + reg * I``.

    ``reg`` is the ridge that had to be added (0.0 when ``m`` was already
    positive definite).
    """

    lower: NDArray[np.float64]
    logdet: float
    reg: float = 0.0

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def regularized(self) -> bool:
        return self.reg > 0.0

    def matrix(self) -> NDArray[np.float64]:
        return self.lower @ self.lower.T

    def whiten(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Return ``L^-1 x`` for a vector or for the columns of ``x``."""
        return linalg.solve_triangular(self.lower, x, lower=True, check_finite=False)

    def solve(self, b: NDArray[np.float64]) -> NDArray[np.float64]:
        return linalg.cho_solve((self.lower, True), b, check_finite=False)

    def inverse(self) -> NDArray[np.float64]:
        inv = self.solve(np.eye(self.dim))
        return 0.5 * (inv + inv.T)


def _try_factor(m):
    try:
        low = linalg.cholesky(m, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return None
    d = np.diag(low)
    if not np.all(np.isfinite(low)) or np.any(d <= 0.0):
        return None
    return low


def default_reg_eps(m: NDArray[np.float64]) -> float:
    r = m.shape[0]
    scale = float(np.trace(m)) / r
    # all-zero (or negative-trace) input: fall back to an absolute ridge
    if not np.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    return 1e-8 * scale


def cholesky(m: ArrayLike, reg_eps: float | None = None) -> SpdFactor:
    """Factor a symmetric matrix, adding an escalating ridge when needed.

    The ridge is tried at ``reg_eps``, ``10 * reg_eps`` and ``100 * reg_eps``;
    the default ``reg_eps`` is ``1e-8 * trace(m) / r``.

    Raises
    ------
    NotSpd
        If ``m`` is not square/symmetric or cannot be factored even with the
        largest ridge.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSpd(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NotSpd("matrix has non-finite entries")
    scale = max(float(np.max(np.abs(m))), np.finfo(float).tiny)
    if np.max(np.abs(m - m.T)) > 1e-10 * scale:
        raise NotSpd("matrix is not symmetric")
    m = 0.5 * (m + m.T)

    if reg_eps is None:
        reg_eps = default_reg_eps(m)
    eye = np.eye(m.shape[0])
    for delta in (0.0, reg_eps, 10.0 * reg_eps, 100.0 * reg_eps):
        low = _try_factor(m + delta * eye if delta else m)
        if low is not None:
            return SpdFactor(low, 2.0 * float(np.sum(np.log(np.diag(low)))), delta)
    raise NotSpd(f"not positive definite even with ridge {100.0 * reg_eps:g}")


def mvn_logpdf(x: ArrayLike, mu: ArrayLike, sigma: SpdFactor) -> float | NDArray[np.float64]:
    """Log density of N(mu, sigma) at ``x``.

    ``x`` may be a single vector (returns a float) or an ``(n, r)`` array
    (returns ``n`` values).
    """
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    r = mu.shape[0]
    if sigma.dim != r or x.shape[-1] != r:
        raise DimMismatch(f"x has dim {x.shape[-1]}, mu {r}, sigma {sigma.dim}")
    z = sigma.whiten(np.atleast_2d(x - mu).T)
    out = -0.5 * (r * LOG_2PI + sigma.logdet + np.sum(z * z, axis=0))
    return float(out[0]) if x.ndim == 1 else out


def scatter_matrix(points: ArrayLike, center: ArrayLike) -> NDArray[np.float64]:
    """Sum of outer products of the deviations ``x - center``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        raise EmptySubset("scatter of an empty subset")
    dev = points - np.asarray(center, dtype=float)
    s = dev.T @ dev
    return 0.5 * (s + s.T)


def duplication_matrix(r: int) -> NDArray[np.float64]:
    """0/1 matrix ``D`` with ``vec(S) = D @ vech(S)`` for symmetric ``S``.

    ``vec`` stacks columns; ``vech`` stacks the lower triangle column by column.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    d = np.zeros((r * r, r * (r + 1) // 2))
    k = 0
    for j in range(r):
        for i in range(j, r):
            d[i + j * r, k] = 1.0
            d[j + i * r, k] = 1.0
            k += 1
    return d


def vech(s: ArrayLike) -> NDArray[np.float64]:
    s = np.asarray(s, dtype=float)
    r = s.shape[0]
    return np.array([s[i, j] for j in range(r) for i in range(j, r)])


def unvech(u: ArrayLike, r: int) -> NDArray[np.float64]:
    u = np.asarray(u, dtype=float)
    s = np.empty((r, r))
    k = 0
    for j in range(r):
        for i in range(j, r):
            s[i, j] = s[j, i] = u[k]
            k += 1
    return s


def vec(a: ArrayLike) -> NDArray[np.float64]:
    return np.asarray(a, dtype=float).reshape(-1, order="F")


def kron(a: ArrayLike, b: ArrayLike) -> NDArray[np.float64]:
    return np.kron(np.atleast_2d(np.asarray(a, dtype=float)), np.atleast_2d(np.asarray(b, dtype=float)))
