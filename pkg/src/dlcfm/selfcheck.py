"""Fast oracle checks: gradients, KL vs Monte Carlo, Sinkhorn vs brute force, solver orders.

Each check returns a ``CheckResult`` carrying the measured value and the
threshold it was compared against. ``run_all`` finishes well inside a minute
on one core.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from . import losses, metrics, sampler
from .rng import stream

ELEMENTWISE_TOL = 1e-5
COMPOSITE_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: measured {self.measured:.3e} vs threshold {self.threshold:.3e} {self.detail}".rstrip()


# --- gradients ---------------------------------------------------------------------

def _unary_cases():
    x = ad.Input("x")
    pos = ad.Input("p")
    yield "tanh", ad.sum(ad.tanh(x) * x), ("x",)
    yield "relu", ad.sum(ad.square(ad.relu(x))), ("x",)
    yield "leaky_relu", ad.sum(ad.square(ad.leaky_relu(x, 0.2))), ("x",)
    yield "softplus", ad.sum(ad.softplus(x)), ("x",)
    yield "exp", ad.sum(ad.exp(x)), ("x",)
    yield "log", ad.sum(ad.log(pos)), ("p",)
    yield "sqrt", ad.sum(ad.sqrt(pos)), ("p",)
    yield "abs", ad.sum(ad.absolute(x) * x), ("x",)
    yield "square", ad.sum(ad.square(x)), ("x",)
    yield "power3", ad.sum(ad.power(x, 3)), ("x",)
    yield "maximum", ad.sum(ad.square(ad.maximum(x, 0.1))), ("x",)
    yield "clip", ad.sum(ad.square(ad.clip(x, -0.5, 0.5))), ("x",)
    yield "neg", ad.sum(-x * x), ("x",)
    yield "sum_axis", ad.sum(ad.square(ad.sum(x, axis=0))), ("x",)
    yield "mean_axis", ad.sum(ad.square(ad.mean(x, axis=1, keepdims=True))), ("x",)
    yield "transpose", ad.sum(x.T @ x), ("x",)
    yield "slice", ad.sum(ad.square(ad.slice_cols(x, 1, 3))), ("x",)
    yield "concat", ad.sum(ad.square(ad.concat([x, pos], axis=1))), ("x", "p")
    yield "broadcast_to", ad.sum(ad.square(ad.broadcast_to(ad.sum(x, axis=0, keepdims=True), (4, 3)))), ("x",)


def _binary_cases():
    a, b, r = ad.Input("a"), ad.Input("b"), ad.Input("r")
    yield "add", ad.sum(ad.square(a + r)), ("a", "r")
    yield "sub", ad.sum(ad.square(a - r)), ("a", "r")
    yield "mul", ad.sum(a * r * a), ("a", "r")
    yield "div", ad.sum(a / ad.exp(r)), ("a", "r")
    yield "matmul", ad.sum(ad.tanh(a @ b)), ("a", "b")
    yield "gram", ad.sum(ad.square(ad.gram(a, a))), ("a",)


def _away_from_kinks(x, margin=0.05):
    # keep finite differences on one side of the relu/abs/clip/maximum kinks
    for k in (0.0, 0.1, -0.5, 0.5):
        near = np.abs(x - k) < margin
        x[near] += np.sign(x[near] - k + 1e-300) * margin + margin
    return x


def gradient_error_elementwise(seed):
    rng = stream(seed, "selfcheck-grad")
    worst = 0.0
    for name, root, wrt in _unary_cases():
        x = _away_from_kinks(rng.standard_normal((4, 3)))
        b = {"x": x, "p": rng.uniform(0.5, 2.0, (4, 2))}
        worst = max(worst, ad.grad_check(root, b, wrt=wrt))
    for name, root, wrt in _binary_cases():
        b = {"a": rng.standard_normal((4, 3)), "b": rng.standard_normal((3, 2)),
             "r": rng.standard_normal((1, 3))}
        worst = max(worst, ad.grad_check(root, b, wrt=wrt))
    return worst


def composite_graph(p=6, d_Z=4, d=2, widths=(5,), n=12, K=2):
    """Encoder -> full disentanglement objective, with a fixed stand-in for the flow term."""
    prior = losses.PriorSpec(0.25, d, d_Z)
    weights = losses.LossWeights(beta=0.5, lambda1=1.0, lambda2=1.0, K=K)
    shapes = {}
    dims = [p, *widths, 2 * d_Z]
    for i, (fi, fo) in enumerate(zip(dims[:-1], dims[1:])):
        shapes[f"enc.w{i}"], shapes[f"enc.b{i}"] = (fi, fo), (1, fo)
    P = {k: ad.Input(k) for k in shapes}
    x, u, mu0, eps = ad.Input("x"), ad.Input("u"), ad.Input("mu0"), ad.Input("eps")
    mu, logvar = enc.encoder_graph(x, P, d_Z, len(widths) + 1)
    z = enc.reparameterize_graph(mu, logvar, eps)
    cfm = ad.mean(ad.square(z))
    total, _ = losses.dlcfm_loss_graph(cfm, mu, logvar, u, mu0, weights, prior)
    return total, shapes, (n, p, d, d_Z), prior


def gradient_error_composite(seed):
    total, shapes, (n, p, d, d_Z), prior = composite_graph()
    rng = stream(seed, "selfcheck-composite")
    b = {k: 0.5 * rng.standard_normal(s) for k, s in shapes.items()}
    u = rng.uniform(size=(n, d))
    mu0, _ = losses.prior_params(u, prior)
    b.update(x=rng.standard_normal((n, p)), u=u, mu0=mu0, eps=rng.standard_normal((n, d_Z)))
    return ad.grad_check(total, b, wrt=set(shapes))


# --- KL -----------------------------------------------------------------------------

def kl_mc_zscores(kl_fn=None, pairs=100, samples=100_000, seed=0, dim=4):
    """|closed form - MC mean| / MC standard error for random diagonal-Gaussian pairs."""
    kl_fn = kl_fn or losses.kl_gaussian_diag
    out = np.empty(pairs)
    for i in range(pairs):
        rng = stream(seed, "selfcheck-kl", i)
        mu_q, mu0 = rng.normal(0, 1, dim), rng.normal(0, 1, dim)
        logvar_q = rng.uniform(-1.5, 1.0, dim)
        sigma0 = np.exp(rng.uniform(-1.0, 1.0, dim))
        closed = float(np.ravel(kl_fn(mu_q[None], logvar_q[None], mu0[None], sigma0))[0])
        var_q = np.exp(logvar_q)
        z = mu_q + np.sqrt(var_q) * rng.standard_normal((samples, dim))
        log_q = -0.5 * (((z - mu_q) ** 2 / var_q) + logvar_q + math.log(2 * math.pi)).sum(1)
        log_p = -0.5 * (((z - mu0) ** 2 / sigma0) + np.log(sigma0) + math.log(2 * math.pi)).sum(1)
        ratio = log_q - log_p
        se = ratio.std(ddof=1) / math.sqrt(samples)
        out[i] = abs(closed - ratio.mean()) / se
    return out


# --- Sinkhorn -----------------------------------------------------------------------

def sinkhorn_relative_gaps(trials=20, seed=0, rel_reg=1e-3):
    gaps = np.empty(trials)
    for i in range(trials):
        rng = stream(seed, "selfcheck-ot", i)
        n = int(rng.integers(2, 7))
        X, Y = rng.standard_normal((n, 2)), rng.standard_normal((n, 2)) + 0.5
        exact = metrics.exact_assignment_cost(X, Y)
        cost = metrics.sinkhorn_distance(X, Y, rel_reg * metrics.median_cost(X, Y))
        gaps[i] = abs(cost - exact) / exact
    return gaps


# --- ODE solver orders ----------------------------------------------------------------

def rotation_field(x, z, t):
    """dx/dt = J x with J the 2x2 rotation generator, applied to each row."""
    return np.stack([-x[:, 1], x[:, 0]], axis=1)


def self_convergence_order(method, n=8, T=1.0):
    """log2 of the ratio of successive differences for n, 2n, 4n steps."""
    x0 = np.array([[1.0, 0.0], [0.3, -0.7]])
    z = np.zeros((2, 1))

    def solve(steps):
        return sampler.integrate(lambda x, zz, t: T * rotation_field(x, zz, t), x0, z,
                                 sampler.SolverSpec(method, steps))

    a, b, c = solve(n), solve(2 * n), solve(4 * n)
    return math.log2(np.abs(a - b).max() / np.abs(b - c).max())


# --- driver -----------------------------------------------------------------------------

def run_all(kl_fn=None, seeds=5, kl_pairs=20, kl_samples=100_000):
    results = []
    g = max(gradient_error_elementwise(s) for s in range(seeds))
    results.append(CheckResult("grad_elementwise", g <= ELEMENTWISE_TOL, g, ELEMENTWISE_TOL))
    g = max(gradient_error_composite(s) for s in range(seeds))
    results.append(CheckResult("grad_composite", g <= COMPOSITE_TOL, g, COMPOSITE_TOL))
    zs = kl_mc_zscores(kl_fn, pairs=kl_pairs, samples=kl_samples)
    results.append(CheckResult("kl_vs_mc", zs.max() <= 3.0, float(zs.max()), 3.0))
    gaps = sinkhorn_relative_gaps()
    results.append(CheckResult("sinkhorn_vs_bruteforce", gaps.max() <= 0.02, float(gaps.max()), 0.02))
    for method, target in (("midpoint", 2.0), ("rk4", 4.0)):
        order = self_convergence_order(method)
        results.append(CheckResult(f"order_{method}", abs(order - target) <= 0.7, abs(order - target), 0.7,
                                   f"(order {order:.3f})"))
    return results


def main():
    results = run_all()
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 2
