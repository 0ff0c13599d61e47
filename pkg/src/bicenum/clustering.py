"""Partitioning of a data set into ``l`` clusters.

K-means++ seeding, Lloyd iterations, EM for full-covariance Gaussian
mixtures, hard assignment of responsibilities and random-swap refinement.
Cluster labels are 0-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from .errors import InputError, NotSpd, TooManyClusters
from .numkernel import SpdFactor, cholesky, mvn_logpdf, scatter_matrix


@dataclass(frozen=True)
class DataSet:
    """An ``N x r`` feature matrix with optional ground-truth labels."""

    x: NDArray[np.float64]
    labels: NDArray[np.int64] | None = None
    name: str = ""

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise InputError(f"data must be a non-empty N x r matrix, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InputError("data contains non-finite entries")
        object.__setattr__(self, "x", x)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (x.shape[0],):
                raise InputError("labels must have one entry per row")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def r(self) -> int:
        return self.x.shape[1]

    @property
    def true_k(self) -> int | None:
        return None if self.labels is None else len(np.unique(self.labels))


def as_array(data: DataSet | ArrayLike) -> NDArray[np.float64]:
    if isinstance(data, DataSet):
        return data.x
    return DataSet(data).x


@dataclass(frozen=True)
class GmmParams:
    weights: NDArray[np.float64]
    means: NDArray[np.float64]
    covs: NDArray[np.float64]
    factors: tuple[SpdFactor, ...] = field(repr=False)

    @property
    def l(self) -> int:
        return self.weights.shape[0]

    @property
    def r(self) -> int:
        return self.means.shape[1]

    @classmethod
    def from_arrays(cls, weights, means, covs, reg_eps: float | None = None) -> "GmmParams":
        weights = np.asarray(weights, dtype=float)
        means = np.atleast_2d(np.asarray(means, dtype=float))
        covs = np.asarray(covs, dtype=float).reshape(means.shape[0], means.shape[1], means.shape[1])
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise InputError("mixture weights must be positive and sum to one")
        factors = tuple(cholesky(c, reg_eps) for c in covs)
        return cls(weights, means, covs, factors)

    def component_logpdf(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """``N x l`` matrix of ``log tau_m + log g(x_n; mu_m, Sigma_m)``."""
        out = np.empty((x.shape[0], self.l))
        for m in range(self.l):
            out[:, m] = np.log(self.weights[m]) + mvn_logpdf(x, self.means[m], self.factors[m])
        return out

    def loglik(self, x: NDArray[np.float64]) -> float:
        return float(np.sum(logsumexp(self.component_logpdf(x), axis=1)))


@dataclass(frozen=True)
class HardPartition:
    labels: NDArray[np.int64]
    counts: NDArray[np.int64]
    means: NDArray[np.float64]
    scatters: NDArray[np.float64]
    # covariance estimates from a soft fit; None means "use scatter / count"
    covs: NDArray[np.float64] | None = None

    @property
    def l(self) -> int:
        return self.counts.shape[0]

    def cluster_covs(self) -> NDArray[np.float64]:
        """Per-cluster covariance estimates (fitted if attached, else ML from the scatter)."""
        if self.covs is not None:
            return self.covs
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.scatters / self.counts[:, None, None]

    def with_covs(self, covs: ArrayLike) -> "HardPartition":
        covs = np.asarray(covs, dtype=float)
        if covs.shape != self.scatters.shape:
            raise InputError("need one r x r covariance per cluster")
        return HardPartition(self.labels, self.counts, self.means, self.scatters, covs)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def has_empty(self) -> bool:
        return bool(np.any(self.counts == 0))

    def sse(self) -> float:
        return float(sum(np.trace(s) for s in self.scatters))

    @classmethod
    def from_labels(cls, x: ArrayLike, labels: ArrayLike, l: int) -> "HardPartition":
        x = as_array(x)
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (x.shape[0],) or np.any(labels < 0) or np.any(labels >= l):
            raise InputError("labels must be integers in [0, l) with one entry per row")
        r = x.shape[1]
        counts = np.bincount(labels, minlength=l)
        means = np.zeros((l, r))
        scatters = np.zeros((l, r, r))
        for m in range(l):
            if counts[m]:
                pts = x[labels == m]
                means[m] = pts.mean(axis=0)
                scatters[m] = scatter_matrix(pts, means[m])
        return cls(labels, counts, means, scatters)


@dataclass
class FitDiagnostics:
    iterations: int = 0
    loglik: float | None = None
    objective: float | None = None
    converged_by: str = "max-iter"
    reg_events: int = 0
    empty_events: int = 0
    degenerate: bool = False
    loglik_trace: list[float] = field(default_factory=list, repr=False)
    swaps_accepted: int = 0


@dataclass(frozen=True)
class KMeansFit:
    partition: HardPartition
    centroids: NDArray[np.float64]
    diagnostics: FitDiagnostics


@dataclass(frozen=True)
class EmFit:
    params: GmmParams
    resp: NDArray[np.float64]
    diagnostics: FitDiagnostics


def _sq_dists(x, centroids):
    return np.sum((x[:, None, :] - centroids[None, :, :]) ** 2, axis=2)


def kmeanspp_indices(data: DataSet | ArrayLike, l: int, rng: np.random.Generator) -> NDArray[np.int64]:
    """Row indices chosen by K-means++ D^2 sampling."""
    x = as_array(data)
    n = x.shape[0]
    if l < 1:
        raise InputError("l must be >= 1")
    if l > n:
        raise TooManyClusters(f"cannot pick {l} centroids from {n} rows")
    chosen = [int(rng.integers(n))]
    d2 = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    for _ in range(1, l):
        d2[chosen] = 0.0
        total = d2.sum()
        if total > 0.0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # every remaining row duplicates a chosen centroid
            free = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(free))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(chosen, dtype=np.int64)


def kmeanspp_init(data: DataSet | ArrayLike, l: int, rng: np.random.Generator) -> NDArray[np.float64]:
    x = as_array(data)
    return x[kmeanspp_indices(x, l, rng)].copy()


def kmeans(data: DataSet | ArrayLike, init: ArrayLike, max_iter: int = 300, tol: float = 1e-8) -> KMeansFit:
    """Lloyd iterations from the given centroids.

    Stops once the largest centroid shift is ``<= tol``. A cluster that loses
    all its points is re-seeded with the point farthest from its centroid.
    """
    x = as_array(data)
    centroids = np.array(init, dtype=float, copy=True)
    l = centroids.shape[0]
    if l > x.shape[0]:
        raise TooManyClusters(f"{l} centroids for {x.shape[0]} rows")
    diag = FitDiagnostics()
    labels = np.argmin(_sq_dists(x, centroids), axis=1)
    for it in range(1, max_iter + 1):
        counts = np.bincount(labels, minlength=l)
        for m in np.flatnonzero(counts == 0):
            d2 = np.sum((x - centroids[labels]) ** 2, axis=1)
            far = int(np.argmax(d2))
            labels[far] = m
            diag.empty_events += 1
            counts = np.bincount(labels, minlength=l)
        new = np.array([x[labels == m].mean(axis=0) for m in range(l)])
        shift = float(np.max(np.sqrt(np.sum((new - centroids) ** 2, axis=1))))
        centroids = new
        labels = np.argmin(_sq_dists(x, centroids), axis=1)
        diag.iterations = it
        if shift <= tol:
            diag.converged_by = "parameter-change"
            break
    part = HardPartition.from_labels(x, labels, l)
    diag.objective = part.sse()
    return KMeansFit(part, centroids, diag)


def init_gmm(data: DataSet | ArrayLike, centroids: ArrayLike, reg_eps: float | None = None) -> GmmParams:
    """Mixture parameters from a nearest-centroid partition.

    Means are the given centroids; covariances are the per-cluster scatter
    about the centroid over ``N_m`` and weights ``N_m / N``. Clusters whose
    covariance is singular (e.g. ``N_m <= r``) get the pooled covariance.
    """
    x = as_array(data)
    centroids = np.atleast_2d(np.asarray(centroids, dtype=float))
    l, r = centroids.shape
    labels = np.argmin(_sq_dists(x, centroids), axis=1)
    counts = np.bincount(labels, minlength=l)
    scatters = np.array(
        [scatter_matrix(x[labels == m], centroids[m]) if counts[m] else np.zeros((r, r)) for m in range(l)]
    )
    pooled = scatters.sum(axis=0) / x.shape[0]
    covs = np.empty((l, r, r))
    for m in range(l):
        cov = scatters[m] / counts[m] if counts[m] > r else None
        if cov is not None:
            try:
                if cholesky(cov, reg_eps).regularized:
                    cov = None
            except NotSpd:
                cov = None
        covs[m] = pooled if cov is None else cov
    counts = np.maximum(counts, 1)
    return GmmParams.from_arrays(counts / counts.sum(), centroids, covs, reg_eps)


def _e_step(x, params):
    logp = params.component_logpdf(x)
    norm = logsumexp(logp, axis=1)
    resp = np.exp(logp - norm[:, None])
    resp /= resp.sum(axis=1, keepdims=True)
    return resp, float(norm.sum()), norm


def _m_step(x, resp, reg_eps, diag):
    n, r = x.shape
    nk = resp.sum(axis=0)
    weights = nk / n
    means = (resp.T @ x) / nk[:, None]
    covs = np.empty((resp.shape[1], r, r))
    factors = []
    for m in range(resp.shape[1]):
        dev = x - means[m]
        cov = (resp[:, m, None] * dev).T @ dev / nk[m]
        cov = 0.5 * (cov + cov.T)
        f = cholesky(cov, reg_eps)
        if f.regularized:
            diag.reg_events += 1
            cov = f.matrix()
        covs[m] = cov
        factors.append(f)
    return GmmParams(weights, means, covs, tuple(factors))


def _max_change(a, b):
    return max(
        float(np.max(np.abs(a.weights - b.weights))),
        float(np.max(np.abs(a.means - b.means))),
        float(np.max(np.abs(a.covs - b.covs))),
    )


def em_fit(
    data: DataSet | ArrayLike,
    l: int,
    init: GmmParams,
    max_iter: int = 200,
    tol: float = 1e-6,
    reg_eps: float | None = None,
) -> EmFit:
    """EM for a full-covariance Gaussian mixture.

    Stops when the relative log-likelihood change is ``<= tol``, when the
    largest parameter change is ``<= tol``, or after ``max_iter`` M steps.
    A component whose weight underflows below 1e-12 is re-seeded once at
    the point with the lowest mixture density; a second collapse marks the
    fit ``degenerate`` in its diagnostics instead of raising.
    """
    x = as_array(data)
    n = x.shape[0]
    if init.l != l:
        raise InputError(f"init has {init.l} components, expected {l}")
    diag = FitDiagnostics()
    params = init
    resp, ll, dens = _e_step(x, params)
    diag.loglik_trace.append(ll)
    reseeded = False
    for it in range(1, max_iter + 1):
        nk = resp.sum(axis=0)
        dead = np.flatnonzero(nk / n < 1e-12)
        if dead.size:
            diag.empty_events += int(dead.size)
            if reseeded:
                diag.degenerate = True
                break
            reseeded = True
            params = _reseed(x, params, dead, dens, reg_eps)
            resp, ll, dens = _e_step(x, params)
            diag.loglik_trace.append(ll)
            continue
        new = _m_step(x, resp, reg_eps, diag)
        change = _max_change(new, params)
        params = new
        diag.iterations = it
        prev = ll
        resp, ll, dens = _e_step(x, params)
        diag.loglik_trace.append(ll)
        if abs(ll - prev) <= tol * abs(ll):
            diag.converged_by = "loglik-change"
            break
        if change <= tol:
            diag.converged_by = "parameter-change"
            break
    diag.loglik = ll
    diag.objective = ll
    return EmFit(params, resp, diag)


def _reseed(x, params, dead, dens, reg_eps):
    weights = params.weights.copy()
    means = params.means.copy()
    covs = params.covs.copy()
    pooled = np.cov(x, rowvar=False, bias=True).reshape(x.shape[1], x.shape[1])
    order = np.argsort(dens)
    for j, m in enumerate(dead):
        means[m] = x[order[j]]
        covs[m] = pooled
        weights[m] = 1.0 / x.shape[0]
    weights /= weights.sum()
    return GmmParams(weights, means, covs, tuple(cholesky(c, reg_eps) for c in covs))


def hard_assign(resp: ArrayLike, x: DataSet | ArrayLike | None = None) -> HardPartition:
    """Assign every row to its largest responsibility (ties go to the lower index).

    With ``x`` the partition carries per-cluster means and scatter matrices;
    without it those are zero-filled with shape ``(l, 0)``.
    """
    resp = np.asarray(resp, dtype=float)
    if resp.ndim != 2:
        raise InputError("responsibilities must be an N x l matrix")
    if np.any(resp < -1e-12) or np.any(resp > 1 + 1e-12) or np.any(np.abs(resp.sum(axis=1) - 1.0) > 1e-9):
        raise InputError("responsibility rows must lie in [0, 1] and sum to one")
    labels = np.argmax(resp, axis=1)
    l = resp.shape[1]
    if x is None:
        counts = np.bincount(labels, minlength=l)
        return HardPartition(labels, counts, np.zeros((l, 0)), np.zeros((l, 0, 0)))
    return HardPartition.from_labels(x, labels, l)


def random_swap(
    data: DataSet | ArrayLike,
    base: KMeansFit | EmFit,
    n_swaps: int,
    rng: np.random.Generator,
    max_iter: int = 200,
    tol: float | None = None,
    reg_eps: float | None = None,
) -> KMeansFit | EmFit:
    """Random-swap refinement of a K-means or EM solution.

    Each trial replaces one centroid (or component mean) by a random data
    row, re-runs the fitter and keeps the result only if SSE decreases
    (K-means) or the log-likelihood increases (EM).
    """
    x = as_array(data)
    if n_swaps < 0:
        raise InputError("n_swaps must be >= 0")
    best = base
    accepted = 0
    is_km = isinstance(base, KMeansFit)
    for _ in range(n_swaps):
        j = int(rng.integers(_n_clusters(best)))
        row = int(rng.integers(x.shape[0]))
        if is_km:
            cent = best.centroids.copy()
            cent[j] = x[row]
            cand = kmeans(x, cent, max_iter=max_iter, tol=1e-8 if tol is None else tol)
            better = cand.diagnostics.objective < best.diagnostics.objective
        else:
            p = best.params
            means = p.means.copy()
            means[j] = x[row]
            start = GmmParams(p.weights, means, p.covs, p.factors)
            cand = em_fit(x, p.l, start, max_iter=max_iter, tol=1e-6 if tol is None else tol, reg_eps=reg_eps)
            better = not cand.diagnostics.degenerate and cand.diagnostics.loglik > best.diagnostics.loglik
        if better:
            best = cand
            accepted += 1
    if best is base:
        return base
    diag = replace(best.diagnostics, swaps_accepted=accepted)
    return replace(best, diagnostics=diag)


def _n_clusters(fit: KMeansFit | EmFit) -> int:
    return fit.centroids.shape[0] if isinstance(fit, KMeansFit) else fit.params.l
