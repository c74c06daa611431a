import math

import numpy as np
import pytest
from scipy import optimize, stats

from dlcfm import metrics


def _rng(seed=0):
    return np.random.default_rng(seed)


# --- energy distance ------------------------------------------------------------------

def test_energy_identical_clouds_zero():
    X = _rng().standard_normal((30, 4))
    assert metrics.energy_distance(X, X) == pytest.approx(0.0, abs=1e-12)


def test_energy_hand_example():
    assert metrics.energy_distance([[0.0], [0.0]], [[2.0], [2.0]]) == pytest.approx(4.0)


def test_energy_matches_scipy_in_one_dimension():
    # scipy reports the square root of the same V-statistic
    rng = _rng(1)
    x, y = rng.standard_normal(40), rng.standard_normal(55) + 0.5
    ref = stats.energy_distance(x, y) ** 2
    assert metrics.energy_distance(x[:, None], y[:, None]) == pytest.approx(ref, rel=1e-10)


def test_energy_same_distribution_below_permutation_quantile():
    rng = _rng(2)
    X, Y = rng.standard_normal((500, 2)), rng.standard_normal((500, 2))
    obs, null = metrics.permutation_test(X, Y, n_perm=100, seed=0)
    assert obs < np.quantile(null, 0.95)


def test_permutation_test_detects_shift():
    rng = _rng(3)
    obs, null = metrics.permutation_test(rng.standard_normal((60, 2)), rng.standard_normal((60, 2)) + 1.0,
                                         n_perm=50, seed=0)
    assert obs > null.max()


def test_energy_needs_two_points():
    with pytest.raises(ValueError):
        metrics.energy_distance(np.zeros((1, 2)), np.zeros((3, 2)))


# --- MMD ------------------------------------------------------------------------------

def _mmd_loops(X, Y, k):
    kxx = np.mean([k(a, b) for a in X for b in X])
    kyy = np.mean([k(a, b) for a in Y for b in Y])
    kxy = np.mean([k(a, b) for a in X for b in Y])
    return kxx + kyy - 2 * kxy


@pytest.mark.parametrize("kernel", ["gaussian", "laplacian"])
def test_mmd_identical_zero(kernel):
    X = _rng(4).standard_normal((20, 3))
    assert metrics.mmd(X, X, kernel) == pytest.approx(0.0, abs=1e-12)


def test_mmd_singletons_formula():
    x, y = np.array([[0.3, -1.0]]), np.array([[1.5, 0.2]])
    d2 = float(((x - y) ** 2).sum())
    assert metrics.mmd(x, y, "gaussian", bandwidth=1.0) == pytest.approx(2 - 2 * math.exp(-d2 / 2), rel=1e-12)


@pytest.mark.parametrize("kernel", ["gaussian", "laplacian"])
def test_mmd_matches_double_loop(kernel):
    rng = _rng(5)
    X, Y = rng.standard_normal((7, 3)), rng.standard_normal((9, 3))
    s = 1.7
    if kernel == "gaussian":
        k = lambda a, b: math.exp(-((a - b) ** 2).sum() / (2 * s * s))  # noqa: E731
    else:
        k = lambda a, b: math.exp(-np.abs(a - b).sum() / s)  # noqa: E731
    assert metrics.mmd(X, Y, kernel, bandwidth=s) == pytest.approx(_mmd_loops(X, Y, k), rel=1e-12)


def test_median_bandwidth_matches_pdist():
    from scipy.spatial.distance import pdist
    rng = _rng(6)
    X, Y = rng.standard_normal((10, 2)), rng.standard_normal((12, 2))
    Z = np.concatenate([X, Y])
    assert metrics.median_bandwidth(X, Y, "gaussian") == pytest.approx(np.median(pdist(Z)))
    assert metrics.median_bandwidth(X, Y, "laplacian") == pytest.approx(np.median(pdist(Z, "cityblock")))


def test_mmd_all_identical_points_rejected():
    with pytest.raises(ValueError):
        metrics.mmd(np.ones((4, 2)), np.ones((3, 2)))


@pytest.mark.parametrize("kernel", ["gaussian", "laplacian"])
def test_mmd_shifted_larger_all_seeds(kernel):
    wins = 0
    for seed in range(20):
        rng = _rng(100 + seed)
        X, Y, Z = (rng.standard_normal((100, 2)) for _ in range(3))
        wins += metrics.mmd(X, Z + 3.0, kernel) > metrics.mmd(X, Y, kernel)
    assert wins == 20


# --- Sinkhorn -------------------------------------------------------------------------

def test_sinkhorn_two_point_example():
    X = np.array([[0.0], [1.0]])
    assert metrics.sinkhorn_distance(X, X.copy(), 1e-3) <= 1e-3


def test_sinkhorn_identical_separated_points_small_cost():
    X = 3.0 * np.arange(5, dtype=float)[:, None]
    assert metrics.sinkhorn_distance(X, X[::-1].copy(), 1e-3) <= 1e-3


@pytest.mark.parametrize("seed", range(5))
def test_sinkhorn_within_two_percent_of_brute_force(seed):
    rng = _rng(200 + seed)
    X, Y = rng.standard_normal((6, 2)), rng.standard_normal((6, 2))
    exact = metrics.exact_assignment_cost(X, Y)
    est = metrics.sinkhorn_distance(X, Y, 1e-3 * metrics.median_cost(X, Y))
    assert abs(est - exact) <= 0.02 * exact


def test_brute_force_matches_hungarian():
    rng = _rng(7)
    X, Y = rng.standard_normal((7, 3)), rng.standard_normal((7, 3))
    C = ((X[:, None] - Y[None]) ** 2).sum(-1)
    r, c = optimize.linear_sum_assignment(C)
    assert metrics.exact_assignment_cost(X, Y) == pytest.approx(C[r, c].sum() / 7, rel=1e-12)


def test_sinkhorn_plan_marginals():
    rng = _rng(8)
    res = metrics.sinkhorn(rng.standard_normal((30, 2)), rng.standard_normal((20, 2)), 0.1)
    assert np.abs(res.plan.sum(axis=1) - 1 / 30).sum() <= 1e-6
    assert np.abs(res.plan.sum(axis=0) - 1 / 20).sum() <= 1e-6
    assert res.cost >= 0


def test_sinkhorn_symmetric():
    rng = _rng(9)
    X, Y = rng.standard_normal((15, 2)), rng.standard_normal((15, 2))
    # agreement is limited by the stopping tolerance, so converge tightly
    a = metrics.sinkhorn_distance(X, Y, 0.1, tolerance=1e-12)
    assert a == pytest.approx(metrics.sinkhorn_distance(Y, X, 0.1, tolerance=1e-12), rel=1e-9)


def test_sinkhorn_non_convergence_error():
    rng = _rng(10)
    with pytest.raises(metrics.SinkhornConvergenceError) as exc:
        metrics.sinkhorn(rng.standard_normal((20, 2)), rng.standard_normal((20, 2)) * 5, 1e-4,
                         max_iters=3, anneal=False)
    assert exc.value.violation > 0


def test_sinkhorn_rejects_nonpositive_reg():
    with pytest.raises(ValueError):
        metrics.sinkhorn_distance(np.zeros((2, 1)), np.ones((2, 1)), 0.0)


# --- suite and invariants -------------------------------------------------------------

def test_metrics_symmetric_and_permutation_invariant():
    rng = _rng(11)
    X, Y = rng.standard_normal((25, 3)), rng.standard_normal((30, 3)) + 0.3
    px, py = rng.permutation(25), rng.permutation(30)
    for f in (metrics.energy_distance, metrics.mmd, lambda a, b: metrics.mmd(a, b, "laplacian")):
        assert f(X, Y) == pytest.approx(f(Y, X), rel=1e-12)
        assert f(X, Y) == pytest.approx(f(X[px], Y[py]), rel=1e-12)


def test_suite_single_repeat_zero_sd():
    rng = _rng(12)
    rep = metrics.metric_suite(rng.standard_normal((40, 2)), rng.standard_normal((40, 2)), repeats=1, subsample=20)
    assert rep.repeats == 1 and all(rep.sd(k) == 0.0 for k in metrics.METRICS)


def test_suite_self_comparison_near_zero():
    X = _rng(13).standard_normal((64, 3))
    rep = metrics.metric_suite(X, X, repeats=3, subsample=64)
    for k in ("energy", "mmd_gaussian", "mmd_laplacian"):
        assert abs(rep.mean(k)) <= 1e-10
    # relative regularization leaves a small entropic offset
    assert rep.mean("sinkhorn") <= 0.1 * metrics.median_cost(X, X)


def test_suite_deterministic_and_csv(tmp_path):
    rng = _rng(14)
    X, Y = rng.standard_normal((50, 2)), rng.standard_normal((50, 2))
    a = metrics.metric_suite(X, Y, repeats=3, subsample=20, seed=4)
    b = metrics.metric_suite(X, Y, repeats=3, subsample=20, seed=4)
    assert a.values == b.values
    a.write_csv(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "metric,mean,sd,repeats" and [ln.split(",")[0] for ln in lines[1:]] == list(metrics.METRICS)


def test_suite_dimension_mismatch():
    with pytest.raises(ValueError):
        metrics.metric_suite(np.zeros((5, 2)), np.zeros((5, 3)))


# --- latent diagnostics ---------------------------------------------------------------

def test_safe_corr_matches_numpy_and_constant_column():
    rng = _rng(15)
    A = rng.standard_normal((50, 2))
    B = np.column_stack([rng.standard_normal(50), np.full(50, 3.3)])
    C = metrics.safe_corr(A, B)
    assert C[0, 0] == pytest.approx(np.corrcoef(A[:, 0], B[:, 0])[0, 1], rel=1e-12)
    assert np.all(C[:, 1] == 0)


def test_latent_report_shapes_and_range():
    rng = _rng(16)
    rows, C = metrics.latent_aux_report(rng.standard_normal((30, 8)), rng.uniform(size=(30, 2)), 5)
    assert rows.shape == (30, 7) and C.shape == (2, 8) and np.all(np.abs(C) <= 1)
    assert metrics.latent_report_header(2, 5) == ["u1", "u2", "mu_1", "mu_2", "mu_3", "mu_4", "mu_5"]


def test_mass_conc_relation_sign_and_independence():
    rng = _rng(17)
    a = rng.standard_normal(400)
    assert metrics.mass_conc_relation(np.column_stack([a, -a + 0.5 * rng.standard_normal(400)])) < 0
    n = 2000
    assert abs(metrics.mass_conc_relation(rng.standard_normal((n, 2)))) <= 3 / math.sqrt(n)
    with pytest.raises(ValueError):
        metrics.mass_conc_relation(np.zeros((5, 2)))
