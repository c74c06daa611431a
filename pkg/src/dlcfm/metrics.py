"""Two-sample distances and latent diagnostics.

Definitions used throughout:

* energy distance ``2 E|x - y| - E|x - x'| - E|y - y'|`` (V-statistic, Euclidean);
* biased MMD^2 with a Gaussian ``exp(-|x - y|_2^2 / 2 s^2)`` or Laplacian
  ``exp(-|x - y|_1 / s)`` kernel, bandwidth ``s`` from the median pooled distance;
* entropic OT with squared-Euclidean cost and uniform marginals, reported as the
  transport cost <P, C> of the converged Sinkhorn plan.
"""

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .rng import stream

METRICS = ("sinkhorn", "energy", "mmd_gaussian", "mmd_laplacian")
# near-duplicate points (e.g. a cloud against itself) converge slowly at small reg
MAX_ITERS = 200_000


class SinkhornConvergenceError(RuntimeError):
    def __init__(self, violation, iterations):
        super().__init__(f"Sinkhorn did not converge in {iterations} iterations "
                         f"(marginal violation {violation:.3e})")
        self.violation = violation


def _cloud(X, name, min_n=2):
    X = np.asarray(X, dtype=np.float64)
    X = X.reshape(X.shape[0], -1)
    if X.shape[0] < min_n:
        raise ValueError(f"{name} needs at least {min_n} points, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def energy_distance(X, Y):
    X, Y = _cloud(X, "X"), _cloud(Y, "Y")
    d = kernels.pairwise_distances
    return float(2.0 * d(X, Y, kernels.EUCLIDEAN).mean()
                 - d(X, X, kernels.EUCLIDEAN).mean() - d(Y, Y, kernels.EUCLIDEAN).mean())


def permutation_test(X, Y, statistic=None, n_perm=200, seed=0):
    """Observed statistic and its permutation null quantiles.

    Returns ``(observed, null)`` where ``null`` holds the statistic for
    ``n_perm`` random relabellings of the pooled points.
    """
    X, Y = _cloud(X, "X"), _cloud(Y, "Y")
    statistic = statistic or energy_distance
    pooled = np.concatenate([X, Y])
    n = X.shape[0]
    rng = stream(seed, "permutation")
    null = np.empty(n_perm)
    for i in range(n_perm):
        perm = rng.permutation(pooled.shape[0])
        null[i] = statistic(pooled[perm[:n]], pooled[perm[n:]])
    return statistic(X, Y), null


def median_bandwidth(X, Y, kernel):
    Z = np.concatenate([X, Y])
    metric = kernels.EUCLIDEAN if kernel == "gaussian" else kernels.CITYBLOCK
    D = kernels.pairwise_distances(Z, Z, metric)
    med = float(np.median(D[np.triu_indices(Z.shape[0], k=1)]))
    if not med > 0:
        raise ValueError("median pooled distance is zero; bandwidth undefined")
    return med


def mmd(X, Y, kernel="gaussian", bandwidth=None):
    """Biased MMD^2 estimate."""
    X, Y = _cloud(X, "X", 1), _cloud(Y, "Y", 1)
    if kernel not in ("gaussian", "laplacian"):
        raise ValueError(f"unknown kernel {kernel!r}")
    s = median_bandwidth(X, Y, kernel) if bandwidth is None else float(bandwidth)

    def k(A, B):
        if kernel == "gaussian":
            return np.exp(-kernels.pairwise_distances(A, B, kernels.SQEUCLIDEAN) / (2.0 * s * s))
        return np.exp(-kernels.pairwise_distances(A, B, kernels.CITYBLOCK) / s)

    return float(k(X, X).mean() + k(Y, Y).mean() - 2.0 * k(X, Y).mean())


@dataclass
class SinkhornResult:
    cost: float
    plan: np.ndarray
    violation: float
    iterations: int


def sinkhorn(X, Y, reg, max_iters=MAX_ITERS, tolerance=1e-6, anneal=True):
    """Log-domain Sinkhorn with optional epsilon-annealed warm starts."""
    X, Y = _cloud(X, "X", 1), _cloud(Y, "Y", 1)
    if not reg > 0:
        raise ValueError(f"reg must be positive, got {reg}")
    C = kernels.pairwise_distances(X, Y, kernels.SQEUCLIDEAN)
    n, m = C.shape
    log_a, log_b = np.full(n, -np.log(n)), np.full(m, -np.log(m))
    f, g = np.zeros(n), np.zeros(m)
    total = 0
    if anneal:
        r = max(reg, float(C.max()))
        while r > reg:
            f, g, it, _ = kernels.sinkhorn_log(C, log_a, log_b, r, f, g, 200, tolerance, 10)
            total += it
            r = max(0.5 * r, reg)
    f, g, it, err = kernels.sinkhorn_log(C, log_a, log_b, reg, f, g, max_iters, tolerance, 10)
    total += it
    if not err <= tolerance:
        raise SinkhornConvergenceError(err, total)
    P = np.exp((f[:, None] + g[None, :] - C) / reg)
    return SinkhornResult(float((P * C).sum()), P, float(err), total)


def sinkhorn_distance(X, Y, reg, max_iters=MAX_ITERS, tolerance=1e-6):
    return sinkhorn(X, Y, reg, max_iters, tolerance).cost


def exact_assignment_cost(X, Y):
    """Optimal transport cost between equal-size uniform clouds by enumerating all n! couplings."""
    X, Y = _cloud(X, "X", 1), _cloud(Y, "Y", 1)
    n = X.shape[0]
    if Y.shape[0] != n:
        raise ValueError("brute-force OT needs equal-size clouds")
    if n > 8:
        raise ValueError("brute-force OT is limited to n <= 8")
    C = kernels.pairwise_distances(X, Y, kernels.SQEUCLIDEAN)
    rows = np.arange(n)
    return min(float(C[rows, list(perm)].sum()) for perm in itertools.permutations(range(n))) / n


def median_cost(X, Y):
    C = kernels.pairwise_distances(_cloud(X, "X", 1), _cloud(Y, "Y", 1), kernels.SQEUCLIDEAN)
    return float(np.median(C))


@dataclass
class MetricReport:
    values: dict = field(default_factory=dict)   # metric -> list of per-repeat values

    @property
    def repeats(self):
        return len(next(iter(self.values.values()), []))

    def mean(self, name):
        return float(np.mean(self.values[name]))

    def sd(self, name):
        v = self.values[name]
        return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0

    def rows(self):
        return [(k, self.mean(k), self.sd(k), self.repeats) for k in METRICS if k in self.values]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "mean", "sd", "repeats"])
            for name, m, s, r in self.rows():
                w.writerow([name, repr(m), repr(s), r])


def metric_suite(X, Y, repeats=10, subsample=256, seed=0, reg=0.05):
    """All four distances over ``repeats`` random subsamples of each cloud.

    ``reg`` is relative: the Sinkhorn regularization is ``reg * median cost``
    of each subsample pair.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    X, Y = _cloud(X, "X"), _cloud(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    report = MetricReport({k: [] for k in METRICS})
    for r in range(repeats):
        rng = stream(seed, "metrics", r)
        xs = X[rng.choice(X.shape[0], min(subsample, X.shape[0]), replace=False)]
        ys = Y[rng.choice(Y.shape[0], min(subsample, Y.shape[0]), replace=False)]
        report.values["sinkhorn"].append(sinkhorn_distance(xs, ys, reg * median_cost(xs, ys)))
        report.values["energy"].append(energy_distance(xs, ys))
        report.values["mmd_gaussian"].append(mmd(xs, ys, "gaussian"))
        report.values["mmd_laplacian"].append(mmd(xs, ys, "laplacian"))
    return report


# --- latent diagnostics ------------------------------------------------------------

def safe_corr(A, B):
    """Pearson correlations between columns of A and B; constant columns give 0."""
    A = np.asarray(A, dtype=np.float64).reshape(len(A), -1)
    B = np.asarray(B, dtype=np.float64).reshape(len(B), -1)

    def z(M):
        c = M - M.mean(axis=0)
        sd = np.sqrt((c * c).mean(axis=0))
        out = np.zeros_like(c)
        ok = sd > 1e-12 * (np.abs(M).max(axis=0) + 1e-300)
        out[:, ok] = c[:, ok] / sd[ok]
        return out

    return np.clip(z(A).T @ z(B) / A.shape[0], -1.0, 1.0)


def latent_aux_report(mu, u, n_report=5):
    """Per-item rows ``(u_1..u_d, mu_1..mu_n)`` and the (d x d_Z) signed correlation matrix."""
    mu, u = np.asarray(mu), np.asarray(u)
    n_report = min(n_report, mu.shape[1])
    return np.concatenate([u, mu[:, :n_report]], axis=1), safe_corr(u, mu)


def latent_report_header(d, n_report):
    return [f"u{j + 1}" for j in range(d)] + [f"mu_{k + 1}" for k in range(n_report)]


def mass_conc_relation(z_aux):
    """Pearson correlation between the first two guided coordinates."""
    z_aux = np.asarray(z_aux, dtype=np.float64)
    if z_aux.shape[0] < 10 or z_aux.shape[1] < 2:
        raise ValueError("need at least 10 rows and 2 guided columns")
    return float(safe_corr(z_aux[:, :1], z_aux[:, 1:2])[0, 0])
