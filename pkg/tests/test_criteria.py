import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bicenum import criteria as C
from bicenum.clustering import HardPartition
from bicenum.errors import InvalidCluster, UnknownCriterion
from bicenum.numkernel import LOG_2PI, duplication_matrix, unvech, vech
from bicenum.seeding import stream
from bicenum.synthdata import DATA1_COVS, DATA1_MEANS, sample_mvn
from oracles import cluster_loglik_mp, fd_hessian

TWO = np.array([[0.0], [2.0]])


def one_cluster(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return HardPartition.from_labels(x, np.zeros(len(x), dtype=int), 1)


def random_partition(seed, n=120, r=2, l=3):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, r)) * rng.uniform(0.5, 2.0, size=r)
    labels = np.concatenate([np.arange(l), rng.integers(0, l, size=n - l)])
    rng.shuffle(labels)
    # make every cluster comfortably larger than r
    labels[: l * (r + 2)] = np.repeat(np.arange(l), r + 2)
    return HardPartition.from_labels(x, labels, l)


# ------------------------------------------------------------ loglik_cluster


def test_loglik_cluster_two_points():
    val = C.loglik_cluster(2, [[2.0]], np.eye(1), 2)
    assert val == pytest.approx(-LOG_2PI - 1.0, abs=1e-14)
    assert val == pytest.approx(-2.8379, abs=1e-4)


def test_loglik_trace_term_at_mle():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(30, 3))
    p = one_cluster(pts)
    sigma = p.scatters[0] / 30
    full = C.loglik_cluster(30, p.scatters[0], sigma, 30)
    no_trace = -1.5 * 30 * LOG_2PI - 15 * np.linalg.slogdet(sigma)[1]
    assert no_trace - full == pytest.approx(0.5 * 3 * 30, rel=1e-12)


def test_loglik_doubling_spread():
    pts = np.array([[0.0], [1.0], [4.0]])
    a = one_cluster(pts)
    b = one_cluster(2 * (pts - pts.mean()) + pts.mean())
    assert b.scatters[0, 0, 0] == pytest.approx(4 * a.scatters[0, 0, 0])
    la = C.loglik_cluster(3, a.scatters[0], a.scatters[0] / 3, 3)
    lb = C.loglik_cluster(3, b.scatters[0], b.scatters[0] / 3, 3)
    assert lb - la == pytest.approx(-1.5 * math.log(4.0), abs=1e-12)


def test_loglik_empty_cluster():
    with pytest.raises(InvalidCluster):
        C.loglik_cluster(0, [[1.0]], np.eye(1), 5)


# ------------------------------------------------------------------ scores


def test_hand_values_two_points():
    p = one_cluster(TWO)
    dims = C.ModelDims(1)
    assert dims.q == 2
    ll = -LOG_2PI - 1.0
    assert C.bic_n(p, dims).total == pytest.approx(math.log(2.0), abs=1e-14)
    assert C.bic_o(p, dims).total == pytest.approx(2 * ll - 2 * math.log(2.0), abs=1e-12)
    assert C.bic_os(p, dims).total == pytest.approx(2 * math.log(2.0), abs=1e-14)
    assert C.bic_ns(p, dims).total == pytest.approx(math.log(2.0), abs=1e-14)
    assert C.bic_g(p, dims).total == pytest.approx(ll + LOG_2PI - 0.5 * math.log(2.0), abs=1e-12)


def test_scoring_is_pure():
    p = random_partition(1)
    for crit in C.CRITERIA:
        a, b = C.score(crit, p), C.score(crit, p)
        assert a.total == b.total and a.data_fidelity == b.data_fidelity


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 3))
def test_shared_fidelity_and_bookkeeping(seed, l, r):
    p = random_partition(seed, n=150, r=r, l=l)
    dims = C.ModelDims(r)
    n, o = C.bic_n(p, dims), C.bic_o(p, dims)
    assert n.valid and o.valid
    assert n.data_fidelity == o.data_fidelity
    assert n.penalty == pytest.approx(C.penalty_of(C.BIC_N, p.counts, dims), rel=1e-12)
    assert o.penalty == pytest.approx(C.penalty_of(C.BIC_O, p.counts, dims), rel=1e-12)
    for s in (n, o, C.bic_os(p, dims), C.bic_ns(p, dims), C.bic_g(p, dims)):
        assert s.recomputed_total() == pytest.approx(s.total, rel=1e-9, abs=1e-9)
    # closed form from stored per-cluster terms
    counts = np.asarray(n.counts, float)
    closed = np.sum(counts * np.log(counts)) - 0.5 * np.dot(counts, n.logdets) - 0.5 * dims.q * np.log(counts).sum()
    assert n.total == pytest.approx(closed, rel=1e-12)


def test_bic_o_penalty_grows_with_doubling():
    dims = C.ModelDims(2)
    counts = np.array([20, 30, 50])
    diff = C.penalty_of(C.BIC_O, 2 * counts, dims) - C.penalty_of(C.BIC_O, counts, dims)
    assert diff == pytest.approx(dims.q * 3 * math.log(2.0))


def test_bic_os_relabel_invariant():
    p = random_partition(4)
    perm = np.array([2, 0, 1])
    x = np.random.default_rng(4).normal(size=(120, 2))
    a = HardPartition.from_labels(x, p.labels, 3)
    b = HardPartition.from_labels(x, perm[p.labels], 3)
    assert C.pooled_variance(a) == pytest.approx(C.pooled_variance(b), rel=1e-14)
    assert C.bic_os(a).total == pytest.approx(C.bic_os(b).total, rel=1e-14)


def test_alpha_values():
    d = C.ModelDims(3)
    assert d.q == 9
    assert d.alpha_os(4) - d.alpha_os(3) == 3
    assert d.alpha_ns == 4


def test_bic_ns_balanced_penalty():
    d = C.ModelDims(2)
    n, l = 300, 3
    assert C.penalty_of(C.BIC_NS, [n // l] * l, d) == pytest.approx(d.alpha_ns * l * math.log(n / l))


def test_penalty_examples():
    d = C.ModelDims(2)
    assert C.penalty_of(C.BIC_N, [50, 100, 200], d) == pytest.approx(5 * (math.log(50) + math.log(100) + math.log(200)))
    assert C.penalty_of(C.BIC_O, [50, 100, 200], d) == pytest.approx(15 * math.log(350))
    assert C.penalty_of("bic-os", [50, 100, 200], d) == pytest.approx(7 * math.log(350))
    with pytest.raises(UnknownCriterion):
        C.penalty_of("aic", [1], d)
    with pytest.raises(UnknownCriterion):
        C.penalty_of(C.BIC_G, [1], d)


@pytest.mark.parametrize("l", range(2, 11))
@pytest.mark.parametrize("n", [100, 10_000])
def test_penalty_gap_balanced(l, n):
    for r in (1, 2, 5):
        d = C.ModelDims(r)
        counts = np.full(l, n / l)
        gap = C.penalty_of(C.BIC_O, counts, d) - C.penalty_of(C.BIC_N, counts, d)
        assert gap == pytest.approx(d.q * l * math.log(l), abs=1e-9)
        assert C.penalty_of(C.BIC_O, counts, d) > C.penalty_of(C.BIC_N, counts, d)


def test_relative_penalty_gap_shrinks_with_n():
    d, l = C.ModelDims(2), 4
    rel = []
    for n in (1e2, 1e3, 1e4, 1e5):
        counts = np.full(l, n / l)
        eta_o = C.penalty_of(C.BIC_O, counts, d)
        rel.append((eta_o - C.penalty_of(C.BIC_N, counts, d)) / eta_o)
    assert all(a > b for a, b in zip(rel, rel[1:]))


def test_spherical_penalty_weaker_on_data1_counts():
    d = C.ModelDims(2)
    for gamma in (1, 3, 12, 48):
        counts = np.array([50, 100, 200]) * gamma
        assert C.penalty_of(C.BIC_OS, counts, d) < C.penalty_of(C.BIC_N, counts, d)


def test_invalid_partitions():
    x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0], [6.0, 5.0]])
    p = HardPartition.from_labels(x, [0, 0, 0, 1, 1], 2)  # second cluster has N_m = r
    for crit in C.GAUSSIAN_CRITERIA:
        s = C.score(crit, p)
        assert not s.valid and s.total == -np.inf and s.reason
    empty = HardPartition.from_labels(x, [0] * 5, 2)
    assert not C.bic_os(empty).valid
    same = HardPartition.from_labels(np.ones((4, 1)), [0, 0, 1, 1], 2)
    assert not C.bic_os(same).valid and "ZeroVariance" in C.bic_os(same).reason


def test_fitted_covariances_are_scored():
    x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0], [6.0, 5.0], [5.0, 7.0]])
    p = HardPartition.from_labels(x, [0, 0, 0, 1, 1, 1], 2).with_covs([np.eye(2), 0.5 * np.eye(2)])
    s = C.bic_n(p)
    assert s.valid
    assert s.logdets == pytest.approx([0.0, 2 * math.log(0.5)])
    counts = np.array([3.0, 3.0])
    assert s.total == pytest.approx(np.sum(counts * np.log(counts)) - 1.5 * 2 * math.log(0.5) - 2.5 * 2 * math.log(3))


def test_small_cluster_invalid_even_with_fitted_covariance():
    x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0], [6.0, 5.0]])
    p = HardPartition.from_labels(x, [0, 0, 0, 1, 1], 2).with_covs([np.eye(2), np.eye(2)])
    assert not C.bic_n(p).valid and not C.bic_o(p).valid


# --------------------------------------------------------------------- FIM


def test_fim_scalar():
    j, logdet = C.fim_gaussian(2, [[1.0]])
    assert np.allclose(j, np.diag([2.0, 1.0]))
    assert logdet == pytest.approx(math.log(2.0))


def test_fim_matches_kronecker_form():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 3))
    s = a @ a.T + np.eye(3)
    j, logdet = C.fim_gaussian(40, s)
    si = np.linalg.inv(s)
    dup = duplication_matrix(3)
    bottom = 20 * dup.T @ np.kron(si, si) @ dup
    assert np.allclose(j[3:, 3:], bottom, rtol=1e-10)
    assert np.allclose(j[:3, :3], 40 * si, rtol=1e-10)
    assert logdet == pytest.approx(np.linalg.slogdet(j)[1], rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.sampled_from([10, 100, 1000]))
def test_fim_scale_structure(seed, r, n_m):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(r, r))
    s = a @ a.T + 0.5 * np.eye(r)
    _, l1 = C.fim_gaussian(n_m, s)
    _, l2 = C.fim_gaussian(7 * n_m, s)
    dim = r + r * (r + 1) // 2
    assert l1 - dim * math.log(n_m) == pytest.approx(l2 - dim * math.log(7 * n_m), abs=1e-9)
    j, _ = C.fim_gaussian(n_m, s)
    assert np.linalg.eigvalsh(j / n_m).min() > 0


@pytest.mark.parametrize("r", [1, 2])
@pytest.mark.parametrize("n_m", [50, 500])
def test_fim_matches_finite_difference_hessian(r, n_m):
    rng = np.random.default_rng(10 * r + n_m)
    mean = DATA1_MEANS[0][:r]
    cov = DATA1_COVS[1][:r, :r]
    pts = sample_mvn(n_m, mean, cov, rng)
    xbar = pts.mean(axis=0)
    delta = (pts - xbar).T @ (pts - xbar)
    sigma_hat = delta / n_m
    theta = list(xbar) + list(vech(sigma_hat))
    neg_h = -fd_hessian(lambda t: cluster_loglik_mp(t, r, n_m, 2 * n_m, xbar, delta), theta)
    j, _ = C.fim_gaussian(n_m, sigma_hat)
    err = np.linalg.norm(neg_h - j) / np.linalg.norm(j)
    assert err < 1e-4
    assert np.abs(neg_h[:r, r:]).max() < 1e-6
    # the general analytic Hessian agrees away from the MLE as well
    mu = xbar + 0.3
    sig = sigma_hat * 1.2
    theta2 = list(mu) + list(vech(sig))
    fd2 = fd_hessian(lambda t: cluster_loglik_mp(t, r, n_m, 2 * n_m, xbar, delta), theta2)
    scat_mu = delta + n_m * np.outer(xbar - mu, xbar - mu)
    an = C.cluster_hessian(n_m, xbar, mu, sig, scat_mu)
    assert np.linalg.norm(fd2 - an) / np.linalg.norm(an) < 1e-4
    assert unvech(vech(sig), r) == pytest.approx(sig)


def log_fim_per_point_on_prefixes(rng, sizes=(100, 1000, 10_000)):
    # one fixed draw, growing prefixes: log|J_m / N_m| along N_m
    pts = sample_mvn(sizes[-1], DATA1_MEANS[2], DATA1_COVS[2], rng)
    out = []
    for n_m in sizes:
        j, logdet = C.fim_gaussian(n_m, np.cov(pts[:n_m].T, bias=True))
        out.append(logdet - j.shape[0] * math.log(n_m))
    return out


def test_log_fim_per_point_converges():
    rng = stream(3)
    steps = np.array([np.abs(np.diff(log_fim_per_point_on_prefixes(rng))) for _ in range(30)])
    early, late = steps.mean(axis=0)
    assert late < early


def test_bic_g_prior_shift_leaves_argmax():
    parts = [random_partition(s, l=l) for s, l in ((0, 1), (1, 2), (2, 3))]
    base = [C.bic_g(p).total for p in parts]
    shifted = [C.bic_g(p, log_prior=-3.7).total for p in parts]
    assert int(np.argmax(base)) == int(np.argmax(shifted))
    assert np.allclose(np.array(shifted) - np.array(base), -3.7)


def test_criterion_id_normalizes():
    assert C.criterion_id("BIC-N") == C.BIC_N
    with pytest.raises(UnknownCriterion):
        C.criterion_id("aic")


def test_high_dimensional_scores_are_finite():
    # 79 features, the dimensionality of the camera-network features
    rng = stream(79)
    r, n_m = 79, 400
    x = np.vstack([rng.normal(size=(n_m, r)) * rng.uniform(0.5, 2.0, size=r) + 5.0 * m for m in range(3)])
    p = HardPartition.from_labels(x, np.repeat(np.arange(3), n_m), 3)
    for crit in (C.BIC_N, C.BIC_O, C.BIC_OS, C.BIC_NS):
        s = C.score(crit, p)
        assert s.valid and np.isfinite(s.total)
        assert s.recomputed_total() == pytest.approx(s.total, rel=1e-9)
    one = HardPartition.from_labels(x[:n_m], np.zeros(n_m, dtype=int), 1)
    g = C.bic_g(one)
    assert g.valid and np.isfinite(g.total)
    assert g.recomputed_total() == pytest.approx(g.total, rel=1e-9)
