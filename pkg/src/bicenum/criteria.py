"""Bayesian cluster-enumeration criteria scored on a hard partition.

Every criterion has the common form ``2 log L - eta``. ``data_fidelity``
stores ``2 log L`` (for the spherical criteria, ``2 log L`` up to
model-independent constants) and ``penalty`` stores ``eta``. How ``total``
relates to the two is criterion specific; :meth:`CandidateScore.recomputed_total`
rebuilds it from the stored terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .clustering import HardPartition
from .errors import InvalidCluster, NotSpd, UnknownCriterion, ZeroVariance
from .numkernel import LOG_2PI, SpdFactor, cholesky, duplication_matrix, kron

BIC_N = "bic_n"
BIC_O = "bic_o"
BIC_OS = "bic_os"
BIC_NS = "bic_ns"
BIC_G = "bic_g"
CRITERIA = (BIC_N, BIC_O, BIC_OS, BIC_NS, BIC_G)
GAUSSIAN_CRITERIA = (BIC_N, BIC_O, BIC_G)
SPHERICAL_CRITERIA = (BIC_OS, BIC_NS)


def criterion_id(name: str) -> str:
    key = name.strip().lower().replace("-", "_")
    if key not in CRITERIA:
        raise UnknownCriterion(f"unknown criterion {name!r}; expected one of {', '.join(CRITERIA)}")
    return key


@dataclass(frozen=True)
class ModelDims:
    r: int

    @property
    def q(self) -> int:
        """Free parameters of one full-covariance Gaussian cluster."""
        return self.r * (self.r + 3) // 2

    def alpha_os(self, l: int) -> int:
        return self.r * l + 1

    @property
    def alpha_ns(self) -> int:
        return self.r + 1


@dataclass
class CandidateScore:
    l: int
    criterion: str
    total: float
    data_fidelity: float
    penalty: float
    valid: bool = True
    reason: str = ""
    counts: list[int] = field(default_factory=list)
    logdets: list[float] = field(default_factory=list)
    dropped: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def nlogn(self) -> float:
        return float(sum(n * np.log(n) for n in self.counts))

    def recomputed_total(self) -> float:
        """``total`` rebuilt from the stored fidelity/penalty terms."""
        if self.criterion in (BIC_O, BIC_OS):
            return self.data_fidelity - self.penalty
        return 0.5 * (self.data_fidelity - self.penalty) + self.dropped

    @classmethod
    def invalid(cls, l: int, criterion: str, reason: str, counts=()) -> "CandidateScore":
        return cls(l, criterion, -np.inf, np.nan, np.nan, False, reason, [int(c) for c in counts])


def loglik_cluster(n_m: int, scatter: ArrayLike, sigma: SpdFactor | ArrayLike, n: int) -> float:
    """Log-likelihood of the points of one cluster under its Gaussian.

    ``scatter`` is the sum of outer products of the deviations from the
    cluster mean parameter; ``n`` is the total number of points.
    """
    if n_m < 1:
        raise InvalidCluster("cluster has no points")
    if not isinstance(sigma, SpdFactor):
        sigma = cholesky(sigma)
    r = sigma.dim
    tr = float(np.trace(sigma.solve(np.asarray(scatter, dtype=float))))
    return n_m * np.log(n_m / n) - 0.5 * r * n_m * LOG_2PI - 0.5 * n_m * sigma.logdet - 0.5 * tr


def _cluster_factors(part: HardPartition):
    """Covariance factors of every cluster, or a reason they are unusable.

    Every cluster needs more than ``r`` hard-assigned points, whichever way
    its covariance was estimated, and a covariance that factors without a
    ridge.
    """
    r = part.scatters.shape[1]
    covs = part.cluster_covs()
    factors = []
    for m in range(part.l):
        n_m = int(part.counts[m])
        if n_m == 0:
            return None, "empty cluster"
        if n_m <= r:
            return None, f"cluster {m} has {n_m} <= r points"
        try:
            f = cholesky(covs[m])
        except NotSpd:
            return None, f"cluster {m} covariance not positive definite"
        if f.regularized:
            return None, f"cluster {m} covariance singular"
        factors.append(f)
    return factors, ""


def gaussian_fidelity(part: HardPartition):
    """``2 log L`` at the per-cluster MLEs, plus the factors used.

    Returns ``(fidelity, factors, reason)``; ``fidelity`` is NaN when the
    partition cannot be scored.
    """
    factors, reason = _cluster_factors(part)
    if factors is None:
        return np.nan, None, reason
    n = part.n
    # trace term evaluated at its stationary value N_m * Sigma_m, which is what
    # the closed forms assume whichever way the covariances were estimated
    ll = sum(
        loglik_cluster(int(part.counts[m]), part.counts[m] * factors[m].matrix(), factors[m], n)
        for m in range(part.l)
    )
    return 2.0 * ll, factors, ""


def bic_n(part: HardPartition, dims: ModelDims | None = None) -> CandidateScore:
    """Proposed criterion: cluster sizes enter both the fit and the penalty."""
    dims = dims or ModelDims(part.scatters.shape[1])
    fid, factors, reason = gaussian_fidelity(part)
    if factors is None:
        return CandidateScore.invalid(part.l, BIC_N, reason, part.counts)
    counts = part.counts.astype(float)
    logdets = [f.logdet for f in factors]
    sum_log_n = float(np.sum(np.log(counts)))
    total = float(np.sum(counts * np.log(counts)) - 0.5 * np.dot(counts, logdets) - 0.5 * dims.q * sum_log_n)
    n, r = part.n, dims.r
    dropped = n * np.log(n) + 0.5 * r * n * (LOG_2PI + 1.0)
    return CandidateScore(
        part.l, BIC_N, total, fid, dims.q * sum_log_n,
        counts=[int(c) for c in part.counts], logdets=logdets, dropped=dropped,
    )


def bic_o(part: HardPartition, dims: ModelDims | None = None) -> CandidateScore:
    """Original BIC with penalty ``q l log N``."""
    dims = dims or ModelDims(part.scatters.shape[1])
    fid, factors, reason = gaussian_fidelity(part)
    if factors is None:
        return CandidateScore.invalid(part.l, BIC_O, reason, part.counts)
    pen = dims.q * part.l * np.log(part.n)
    return CandidateScore(
        part.l, BIC_O, fid - pen, fid, pen,
        counts=[int(c) for c in part.counts], logdets=[f.logdet for f in factors],
    )


def pooled_variance(part: HardPartition) -> float:
    """MLE of the common variance of identical spherical clusters."""
    r = part.scatters.shape[1]
    return part.sse() / (r * part.n)


def _spherical_terms(part: HardPartition, criterion: str):
    if part.has_empty:
        return None, "empty cluster"
    s2 = pooled_variance(part)
    if s2 < 1e-300:
        return None, ZeroVariance.__name__
    counts = part.counts.astype(float)
    r = part.scatters.shape[1]
    fid = 2.0 * float(np.sum(counts * np.log(counts))) - r * part.n * np.log(s2)
    return (fid, s2), ""


def bic_os(part: HardPartition, dims: ModelDims | None = None) -> CandidateScore:
    """Original BIC for identical spherical clusters (K-means wrapper)."""
    dims = dims or ModelDims(part.scatters.shape[1])
    terms, reason = _spherical_terms(part, BIC_OS)
    if terms is None:
        return CandidateScore.invalid(part.l, BIC_OS, reason, part.counts)
    fid, s2 = terms
    pen = dims.alpha_os(part.l) * np.log(part.n)
    return CandidateScore(
        part.l, BIC_OS, fid - pen, fid, pen,
        counts=[int(c) for c in part.counts], extra={"sigma2": s2},
    )


def bic_ns(part: HardPartition, dims: ModelDims | None = None) -> CandidateScore:
    """Proposed criterion under the identical-spherical-cluster assumption."""
    dims = dims or ModelDims(part.scatters.shape[1])
    terms, reason = _spherical_terms(part, BIC_NS)
    if terms is None:
        return CandidateScore.invalid(part.l, BIC_NS, reason, part.counts)
    fid, s2 = terms
    counts = part.counts.astype(float)
    pen = dims.alpha_ns * float(np.sum(np.log(counts)))
    total = float(np.sum(counts * np.log(counts))) - 0.5 * part.n * dims.r * np.log(s2) - 0.5 * pen
    return CandidateScore(
        part.l, BIC_NS, total, fid, pen,
        counts=[int(c) for c in part.counts], extra={"sigma2": s2},
    )


def cluster_hessian(
    n_m: int, xbar: ArrayLike, mu: ArrayLike, sigma: ArrayLike, scatter: ArrayLike
) -> NDArray[np.float64]:
    """Hessian of the cluster log-likelihood in ``(mu, vech(Sigma))``.

    ``scatter`` is taken about ``mu``; ``xbar`` is the cluster sample mean.
    Valid at any parameter point, not only at the MLE.
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    r = sigma.shape[0]
    f = cholesky(sigma)
    s_inv = f.inverse()
    dup = duplication_matrix(r)
    a = s_inv @ (np.asarray(xbar, dtype=float) - np.asarray(mu, dtype=float))
    z = kron(a[:, None], s_inv)
    inner = s_inv - (2.0 / n_m) * s_inv @ np.asarray(scatter, dtype=float) @ s_inv
    fm = kron(s_inv, inner)
    top = -n_m * s_inv
    cross = -n_m * z.T @ dup
    bottom = 0.5 * n_m * dup.T @ fm @ dup
    return np.block([[top, cross], [cross.T, bottom]])


def fim_gaussian(n_m: int, sigma_hat: ArrayLike, dims: ModelDims | None = None):
    """Fisher information of one Gaussian cluster at its MLE.

    Returns ``(J, log|J|)``. At the MLE the mean/covariance cross block is
    zero, so ``log|J|`` is the sum of the two diagonal-block log-determinants.

    Raises
    ------
    NotSpd
        If either block is not positive definite.
    """
    sigma_hat = np.atleast_2d(np.asarray(sigma_hat, dtype=float))
    r = sigma_hat.shape[0]
    if dims is not None and dims.r != r:
        raise ValueError("dims do not match sigma")
    if n_m < 1:
        raise InvalidCluster("cluster has no points")
    s_inv = cholesky(sigma_hat).inverse()
    dup = duplication_matrix(r)
    scatter = n_m * sigma_hat
    fm = kron(s_inv, s_inv - (2.0 / n_m) * s_inv @ scatter @ s_inv)
    top = n_m * s_inv
    bottom = -0.5 * n_m * dup.T @ fm @ dup
    bottom = 0.5 * (bottom + bottom.T)
    u = dup.shape[1]
    j = np.block([[top, np.zeros((r, u))], [np.zeros((u, r)), bottom]])
    logdet = cholesky(top, 0.0).logdet + _exact_logdet(bottom)
    return j, logdet


def _exact_logdet(m):
    # no ridge: a non-PD information block is an error, not something to patch
    try:
        return cholesky(m, reg_eps=0.0).logdet
    except NotSpd:
        raise NotSpd("information block is not positive definite") from None


def bic_g(part: HardPartition, dims: ModelDims | None = None, log_prior: float = 0.0) -> CandidateScore:
    """Laplace-approximated log posterior with the exact per-cluster FIM.

    ``log_prior`` collects ``log p(M_l) + log f(Theta_l | M_l)`` (0 by default).
    """
    dims = dims or ModelDims(part.scatters.shape[1])
    fid, factors, reason = gaussian_fidelity(part)
    if factors is None:
        return CandidateScore.invalid(part.l, BIC_G, reason, part.counts)
    log_j = []
    try:
        for m in range(part.l):
            log_j.append(fim_gaussian(int(part.counts[m]), factors[m].matrix())[1])
    except NotSpd as exc:
        return CandidateScore.invalid(part.l, BIC_G, str(exc), part.counts)
    pen = float(np.sum(log_j)) - part.l * dims.q * LOG_2PI
    total = 0.5 * (fid - pen) + log_prior
    return CandidateScore(
        part.l, BIC_G, total, fid, pen,
        counts=[int(c) for c in part.counts], logdets=[f.logdet for f in factors],
        dropped=log_prior, extra={"log_fim": log_j},
    )


def penalty_of(criterion: str, counts: ArrayLike, dims: ModelDims) -> float:
    """Penalty ``eta`` of the common ``2 log L - eta`` form for given cluster sizes."""
    key = criterion_id(criterion)
    counts = np.asarray(counts, dtype=float)
    l, n = counts.shape[0], float(counts.sum())
    if key == BIC_N:
        return dims.q * float(np.sum(np.log(counts)))
    if key == BIC_O:
        return dims.q * l * np.log(n)
    if key == BIC_OS:
        return dims.alpha_os(l) * np.log(n)
    if key == BIC_NS:
        return dims.alpha_ns * float(np.sum(np.log(counts)))
    raise UnknownCriterion(f"{criterion!r} has no closed-form penalty")


SCORERS = {BIC_N: bic_n, BIC_O: bic_o, BIC_OS: bic_os, BIC_NS: bic_ns, BIC_G: bic_g}


def score(criterion: str, part: HardPartition, dims: ModelDims | None = None) -> CandidateScore:
    return SCORERS[criterion_id(criterion)](part, dims)
