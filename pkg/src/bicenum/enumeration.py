"""Two-step cluster enumeration: fit every candidate model, score, select."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike

from . import criteria as crit
from .clustering import (
    DataSet,
    EmFit,
    KMeansFit,
    em_fit,
    hard_assign,
    init_gmm,
    kmeans,
    kmeanspp_init,
    random_swap,
)
from .errors import AllCandidatesInvalid, CurveTooShort, InputError, NoValidCandidate, NumericalError
from .seeding import stream

log = logging.getLogger(__name__)

CLUSTERERS = ("em", "kmeans", "rs-em", "rs-kmeans")
COV_SOURCES = ("em", "hard")


@dataclass(frozen=True)
class CandidateFamily:
    l_min: int
    l_max: int

    def __post_init__(self):
        if not 1 <= self.l_min <= self.l_max:
            raise InputError(f"need 1 <= l_min <= l_max, got {self.l_min}..{self.l_max}")

    def __iter__(self):
        return iter(range(self.l_min, self.l_max + 1))

    def __len__(self):
        return self.l_max - self.l_min + 1

    @classmethod
    def around(cls, k: int, n: int | None = None) -> "CandidateFamily":
        """``1 .. 2k`` (capped at ``n - 1``), the family used for benchmarks."""
        hi = 2 * k if n is None else max(1, min(2 * k, n - 1))
        return cls(1, hi)


@dataclass(frozen=True)
class EnumConfig:
    max_iter: int = 200
    tol: float = 1e-6
    reg_eps: float | None = None
    kmeans_max_iter: int = 300
    kmeans_tol: float = 1e-8
    n_swaps: int = 20
    n_init: int = 1
    # covariances fed to the Gaussian criteria: "em" (fitted) or "hard" (scatter / count)
    cov_source: str = "em"

    def __post_init__(self):
        if self.cov_source not in COV_SOURCES:
            raise InputError(f"cov_source must be one of {', '.join(COV_SOURCES)}")
        if self.max_iter < 1 or self.kmeans_max_iter < 1 or self.n_init < 1 or self.n_swaps < 0:
            raise InputError("iteration counts must be positive")
        if not self.tol > 0 or not self.kmeans_tol >= 0:
            raise InputError("tolerances must be positive")


@dataclass
class BicCurve:
    criterion: str
    scores: list[crit.CandidateScore]
    k_argmax: int | None
    k_knee: int | None = None
    rule: str = "argmax"

    @property
    def k_hat(self) -> int | None:
        return self.k_knee if self.rule == "knee" else self.k_argmax

    @property
    def ls(self) -> list[int]:
        return [s.l for s in self.scores]

    @property
    def totals(self) -> np.ndarray:
        return np.array([s.total for s in self.scores])


@dataclass
class EnumerationReport:
    dataset: dict
    seed: int
    clusterer: str
    family: CandidateFamily
    curves: dict[str, BicCurve]
    em_fits: dict[int, EmFit] = field(default_factory=dict, repr=False)
    kmeans_fits: dict[int, KMeansFit] = field(default_factory=dict, repr=False)
    diagnostics: dict[int, dict] = field(default_factory=dict)

    def k_hat(self, criterion: str) -> int | None:
        return self.curves[crit.criterion_id(criterion)].k_hat

    def selected_fit(self, criterion: str) -> EmFit | KMeansFit | None:
        key = crit.criterion_id(criterion)
        k = self.curves[key].k_hat
        if k is None:
            return None
        if key in crit.GAUSSIAN_CRITERIA and k in self.em_fits:
            return self.em_fits[k]
        return self.kmeans_fits.get(k)


def select_k(curve: BicCurve | list[crit.CandidateScore] | ArrayLike, ls: ArrayLike | None = None) -> int:
    """Candidate with the largest valid score; ties go to the smaller ``l``.

    Accepts a curve, a list of scores, or raw totals (``-inf``/NaN mark invalid
    candidates) with optional matching ``ls`` (default ``1..len``).
    """
    ls, totals = _curve_values(curve, ls)
    ok = np.isfinite(totals)
    if not ok.any():
        raise NoValidCandidate("no valid candidate to select from")
    best = np.max(totals[ok])
    return int(min(l for l, t, v in zip(ls, totals, ok) if v and t == best))


def knee_point(curve: BicCurve | list[crit.CandidateScore] | ArrayLike, ls: ArrayLike | None = None) -> int:
    """Interior candidate where the curve bends most sharply downwards.

    Maximizes ``2 BIC(l) - BIC(l-1) - BIC(l+1)`` over interior candidates
    whose neighbours are valid; ties go to the smaller ``l``.
    """
    ls, totals = _curve_values(curve, ls)
    by_l = {int(l): t for l, t in zip(ls, totals) if np.isfinite(t)}
    bends = {
        l: 2.0 * by_l[l] - by_l[l - 1] - by_l[l + 1]
        for l in sorted(by_l)
        if l - 1 in by_l and l + 1 in by_l
    }
    if not bends:
        raise CurveTooShort("knee detection needs three consecutive valid candidates")
    best = max(bends.values())
    return min(l for l, b in bends.items() if b == best)


def _curve_values(curve, ls):
    if isinstance(curve, BicCurve):
        curve = curve.scores
    if len(curve) and isinstance(curve[0], crit.CandidateScore):
        return [s.l for s in curve], np.array([s.total if s.valid else -np.inf for s in curve], dtype=float)
    totals = np.asarray(curve, dtype=float)
    totals = np.where(np.isnan(totals), -np.inf, totals)
    ls = list(range(1, len(totals) + 1)) if ls is None else [int(l) for l in ls]
    if len(ls) != len(totals):
        raise InputError("ls and totals differ in length")
    return ls, totals


def fit_candidate(x, l, clusterer, need_em, need_km, cfg: EnumConfig, seed: int, key=()):
    """Run the clustering step for one candidate ``l``.

    Returns ``(em_fit or None, kmeans_fit or None)``; both start from the same
    K-means++ centroids. The streams depend only on ``(seed, *key, l)``.
    """
    rng = stream(seed, *key, l)
    swap_rng = stream(seed, *key, l, 1)
    best_em = best_km = None
    for _ in range(cfg.n_init):
        cent = kmeanspp_init(x, l, rng)
        if need_em:
            fit = em_fit(x, l, init_gmm(x, cent, cfg.reg_eps), cfg.max_iter, cfg.tol, cfg.reg_eps)
            if best_em is None or _em_better(fit, best_em):
                best_em = fit
        if need_km:
            fit = kmeans(x, cent, cfg.kmeans_max_iter, cfg.kmeans_tol)
            if best_km is None or fit.diagnostics.objective < best_km.diagnostics.objective:
                best_km = fit
    if clusterer == "rs-em" and best_em is not None:
        best_em = random_swap(x, best_em, cfg.n_swaps, swap_rng, cfg.max_iter, cfg.tol, cfg.reg_eps)
    if clusterer == "rs-kmeans" and best_km is not None:
        best_km = random_swap(x, best_km, cfg.n_swaps, swap_rng, cfg.kmeans_max_iter, cfg.kmeans_tol)
    return best_em, best_km


def _em_better(a: EmFit, b: EmFit) -> bool:
    if a.diagnostics.degenerate != b.diagnostics.degenerate:
        return b.diagnostics.degenerate
    return a.diagnostics.loglik > b.diagnostics.loglik


def enumerate_clusters(
    data: DataSet | ArrayLike,
    family: CandidateFamily,
    clusterer: str = "em",
    criteria=(crit.BIC_N, crit.BIC_O),
    config: EnumConfig | None = None,
    seed: int = 0,
    knee: bool = False,
    strict: bool = True,
    key: tuple[int, ...] = (),
) -> EnumerationReport:
    """Estimate the number of clusters in ``data``.

    For each ``l`` in ``family`` the data is partitioned, hard-assigned and
    scored by every requested criterion, then each criterion's curve is
    maximized (and, with ``knee=True``, its knee located and used as the
    selection rule).

    With an EM clusterer the Gaussian criteria score the EM hard partition
    (cluster sizes from the hard assignment, covariances from the EM fit
    unless ``config.cov_source == "hard"``) and the spherical ones the K-means
    partition started from the same centroids; with a K-means clusterer every
    criterion scores the K-means partition.

    Raises
    ------
    AllCandidatesInvalid
        If ``strict`` and some criterion has no valid candidate.
    """
    if not isinstance(data, DataSet):
        data = DataSet(data)
    if clusterer not in CLUSTERERS:
        raise InputError(f"unknown clusterer {clusterer!r}; expected one of {', '.join(CLUSTERERS)}")
    config = config or EnumConfig()
    keys = [crit.criterion_id(c) for c in criteria]
    if not keys:
        raise InputError("no criteria requested")
    x = data.x
    dims = crit.ModelDims(data.r)
    em_based = clusterer in ("em", "rs-em")
    need_em = em_based and any(k in crit.GAUSSIAN_CRITERIA for k in keys)
    need_km = not em_based or any(k in crit.SPHERICAL_CRITERIA for k in keys)

    scores: dict[str, list] = {k: [] for k in keys}
    em_fits, km_fits, diags = {}, {}, {}
    for l in family:
        if l > data.n:
            for k in keys:
                scores[k].append(crit.CandidateScore.invalid(l, k, f"l={l} exceeds N={data.n}"))
            continue
        try:
            emf, kmf = fit_candidate(x, l, clusterer, need_em, need_km, config, seed, key)
        except NumericalError as exc:
            log.debug("fit failed for l=%d: %s", l, exc)
            for k in keys:
                scores[k].append(crit.CandidateScore.invalid(l, k, f"fit failed: {exc}"))
            continue
        diags[l] = {}
        em_part = None
        if emf is not None:
            em_fits[l] = emf
            diags[l]["em"] = emf.diagnostics
            if not emf.diagnostics.degenerate:
                em_part = hard_assign(emf.resp, x)
                if config.cov_source == "em":
                    em_part = em_part.with_covs(emf.params.covs)
        if kmf is not None:
            km_fits[l] = kmf
            diags[l]["kmeans"] = kmf.diagnostics
        for k in keys:
            if k in crit.GAUSSIAN_CRITERIA and em_based:
                if em_part is None:
                    scores[k].append(crit.CandidateScore.invalid(l, k, "degenerate EM fit"))
                    continue
                part = em_part
            else:
                part = kmf.partition
            scores[k].append(crit.score(k, part, dims))

    curves = {}
    for k in keys:
        curve = BicCurve(k, scores[k], None, rule="knee" if knee else "argmax")
        try:
            curve.k_argmax = select_k(curve)
        except NoValidCandidate:
            if strict:
                raise AllCandidatesInvalid(f"every candidate is invalid for {k}") from None
        if knee:
            try:
                curve.k_knee = knee_point(curve)
            except CurveTooShort:
                if strict:
                    raise
        curves[k] = curve

    descriptor = {"name": data.name, "n": data.n, "r": data.r}
    return EnumerationReport(descriptor, seed, clusterer, family, curves, em_fits, km_fits, diags)
