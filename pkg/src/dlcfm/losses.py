"""Auxiliary-informed prior, Gaussian KL and correlation-based disentanglement penalties.

Every penalty is written once as a graph builder (``*_graph``) and exposed as
a plain numpy function that evaluates that graph on constant inputs.

Degree pairs: all K^2 ordered pairs ``(k, k')`` are used, including
``k == k'``, and sums are normalized by the number of terms actually taken.
Polynomial lifts are centred before powering, columns are standardized with a
variance floor, and a constant column therefore contributes zero correlation.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

VAR_FLOOR = 1e-8


@dataclass(frozen=True)
class PriorSpec:
    tau2: float
    d: int
    d_Z: int

    def __post_init__(self):
        if not 0 < self.tau2 <= 1:
            raise ValueError(f"tau2 must lie in (0, 1], got {self.tau2}")
        if not 1 <= self.d < self.d_Z:
            raise ValueError(f"need 1 <= d < d_Z, got d={self.d}, d_Z={self.d_Z}")

    @classmethod
    def inverse_batch(cls, batch, d, d_Z):
        return cls(1.0 / batch, d, d_Z)

    @property
    def sigma0(self):
        return np.concatenate([np.full(self.d, self.tau2), np.ones(self.d_Z - self.d)])


@dataclass(frozen=True)
class LossWeights:
    beta: float = 8e-5
    lambda1: float = 8e-2
    lambda2: float = 1e-2
    K: int = 1

    def __post_init__(self):
        if min(self.beta, self.lambda1, self.lambda2) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.K < 1:
            raise ValueError(f"polynomial degree K must be >= 1, got {self.K}")


def prior_params(u, spec):
    """Prior mean ``(u, 0, ..., 0)`` and diagonal covariance for one or more ``u`` rows."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != spec.d:
        raise ValueError(f"u has {u.shape[-1]} components, prior expects d={spec.d}")
    if np.any(u < 0) or np.any(u > 1):
        raise ValueError("auxiliary variables must be normalized to [0, 1]")
    pad = np.zeros(u.shape[:-1] + (spec.d_Z - spec.d,))
    return np.concatenate([u, pad], axis=-1), spec.sigma0


# --- KL --------------------------------------------------------------------------

def kl_graph(mu, logvar, mu0, sigma0):
    """Per-item KL(N(mu, e^logvar) || N(mu0, diag sigma0)); ``sigma0`` is a constant."""
    sigma0 = np.asarray(sigma0, dtype=np.float64)
    inv = 1.0 / sigma0
    diff = mu - mu0
    terms = (np.log(sigma0) - logvar) + ad.square(diff) * inv + ad.exp(logvar) * inv - 1.0
    return 0.5 * ad.sum(terms, axis=1)


def kl_gaussian_diag(mu_q, logvar_q, mu0, sigma0):
    sigma0 = np.asarray(sigma0, dtype=np.float64)
    if np.any(sigma0 <= 0):
        raise ValueError("prior variances must be positive")
    mu_q = np.atleast_2d(np.asarray(mu_q, dtype=np.float64))
    logvar_q = np.atleast_2d(np.asarray(logvar_q, dtype=np.float64))
    mu0 = np.broadcast_to(np.asarray(mu0, dtype=np.float64), mu_q.shape)
    return ad.forward(kl_graph(ad.const(mu_q), ad.const(logvar_q), ad.const(mu0), sigma0), {})


# --- correlations ---------------------------------------------------------------

def _standardize(x):
    a = x - ad.mean(x, axis=0, keepdims=True)
    var = ad.mean(ad.square(a), axis=0, keepdims=True)
    return a / ad.sqrt(ad.maximum(var, VAR_FLOOR))


def _lifts(x, K):
    c = x - ad.mean(x, axis=0, keepdims=True)
    return [_standardize(ad.power(c, k)) for k in range(1, K + 1)]


def corr_lifted_graph(V, W, K):
    """(K m_v) x (K m_w) matrix of correlations between lifted columns, rows ``(k, i)``."""
    zv = ad.concat(_lifts(V, K), axis=1) if K > 1 else _lifts(V, 1)[0]
    zw = ad.concat(_lifts(W, K), axis=1) if K > 1 else _lifts(W, 1)[0]
    return ad.clip(ad.gram(zv, zw), -1.0, 1.0)


def r0_graph(V, W, K):
    return ad.mean(ad.absolute(corr_lifted_graph(V, W, K)))


def r1_graph(v, w, K):
    """Mean over degree pairs and columns of ``1 - |Corr(v^k, w^k')_ii|``."""
    lv, lw = _lifts(v, K), _lifts(w, K)
    terms = []
    for zv in lv:
        for zw in lw:
            diag = ad.clip(ad.mean(zv * zw, axis=0), -1.0, 1.0)
            terms.append(ad.mean(1.0 - ad.absolute(diag)))
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


def align_graph(u_j, mu_j, K):
    # smaller is better: zero iff |corr| == 1 on every degree pair
    return r1_graph(u_j, mu_j, K)


def decorr_graph(a, b, K):
    return r0_graph(a, b, K)


def _as_cols(x):
    x = np.asarray(x, dtype=np.float64)
    x = x.reshape(-1, 1) if x.ndim == 1 else x
    if x.shape[0] < 3:
        raise ValueError(f"correlation penalties need a batch of at least 3, got {x.shape[0]}")
    return x


def _eval(builder, V, W, K):
    V, W = _as_cols(V), _as_cols(W)
    if V.shape[0] != W.shape[0]:
        raise ad.ShapeError(f"batch sizes differ: {V.shape} vs {W.shape}")
    return ad.forward(builder(ad.const(V), ad.const(W), K), {})


def batch_corr_lifted(V, W, K=1):
    return _eval(corr_lifted_graph, V, W, K)


def r0(V, W, K=1):
    return float(_eval(r0_graph, V, W, K))


def r1(v, w, K=1):
    v, w = _as_cols(v), _as_cols(w)
    if v.shape[1] != w.shape[1]:
        raise ad.ShapeError(f"r1 needs equal column counts, got {v.shape} and {w.shape}")
    return float(_eval(r1_graph, v, w, K))


def align_penalty(u_j, mu_j, K=1):
    return float(_eval(align_graph, u_j, mu_j, K))


def decorr_penalty(A, B, K=1):
    return float(_eval(decorr_graph, A, B, K))


# --- full objective ----------------------------------------------------------------

TERM_NAMES = ("cfm", "kl", "align", "intra", "inter")


def dlcfm_loss_graph(cfm_term, mu, logvar, u, mu0, weights, prior):
    """Total objective node plus the unweighted term nodes, keyed by ``TERM_NAMES``.

    ``u`` holds the batch auxiliaries (n, d); ``mu0`` the matching prior means.
    """
    d, d_Z, K = prior.d, prior.d_Z, weights.K
    kl = ad.mean(kl_graph(mu, logvar, mu0, prior.sigma0))
    align = intra = None
    for j in range(d):
        u_j = ad.slice_cols(u, j, j + 1)
        a = align_graph(u_j, ad.slice_cols(mu, j, j + 1), K)
        align = a if align is None else align + a
        others = [ad.slice_cols(mu, k, k + 1) for k in range(d) if k != j]
        if others:
            rest = others[0] if len(others) == 1 else ad.concat(others, axis=1)
            c = decorr_graph(u_j, rest, K)
            intra = c if intra is None else intra + c
    if intra is None:
        intra = ad.const(0.0)
    inter = decorr_graph(u, ad.slice_cols(mu, d, d_Z), K)
    total = (cfm_term + weights.beta * kl + weights.lambda1 * (align + intra)
             + weights.lambda2 * inter)
    return total, dict(zip(TERM_NAMES, (cfm_term, kl, align, intra, inter)))


def dlcfm_loss(cfm_term, mu, logvar, u, weights, prior):
    """Evaluate the objective on numpy batches; returns ``(total, terms)``."""
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape[0] < 3:
        raise ValueError("the objective needs a batch of at least 3")
    mu0, _ = prior_params(u, prior)
    total, terms = dlcfm_loss_graph(ad.const(cfm_term), ad.const(mu), ad.const(logvar),
                                    ad.const(u), ad.const(mu0), weights, prior)
    val = float(ad.forward(total, {}))
    return val, {k: float(ad.forward(v, {})) for k, v in terms.items()}
