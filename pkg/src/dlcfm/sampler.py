"""Fixed-step ODE integration of a learned field, controlled generation and traversals."""

from dataclasses import asdict, dataclass

import numpy as np

from . import encoder as enc
from . import losses
from .flow import _from_dict
from .rng import stream

METHODS = ("euler", "midpoint", "rk4")


class SolverError(FloatingPointError):
    pass


@dataclass(frozen=True)
class SolverSpec:
    method: str = "midpoint"
    n_ode: int = 100

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown ODE method {self.method!r}; choose from {METHODS}")
        if self.n_ode < 1:
            raise ValueError(f"n_ode must be >= 1, got {self.n_ode}")

    @property
    def h(self):
        return 1.0 / self.n_ode


@dataclass
class SampleConfig:
    n_ode: int = 100
    method: str = "midpoint"
    K: int = 256
    seed: int = 0
    tail_quantile: float = 0.95

    def __post_init__(self):
        SolverSpec(self.method, self.n_ode)
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not 0.5 < self.tail_quantile < 1:
            raise ValueError("tail_quantile must lie in (0.5, 1)")

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d, "sample")

    @property
    def solver(self):
        return SolverSpec(self.method, self.n_ode)

    def to_dict(self):
        return asdict(self)


def ode_step(v, x, z, t, h, method):
    if not (0.0 <= t and t + h <= 1.0 + 1e-12):
        raise ValueError(f"step [{t}, {t + h}] leaves [0, 1]")
    if method == "euler":
        x_next = x + h * v(x, z, t)
    elif method == "midpoint":
        k1 = v(x, z, t)
        x_next = x + h * v(x + 0.5 * h * k1, z, t + 0.5 * h)
    elif method == "rk4":
        k1 = v(x, z, t)
        k2 = v(x + 0.5 * h * k1, z, t + 0.5 * h)
        k3 = v(x + 0.5 * h * k2, z, t + 0.5 * h)
        k4 = v(x + h * k3, z, t + h)
        x_next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    else:
        raise ValueError(f"unknown ODE method {method!r}")
    if not np.all(np.isfinite(x_next)):
        raise SolverError(f"non-finite state after step at t={t}")
    return x_next


def integrate(v, x0, z, solver):
    """Integrate dx/dt = v(x, z, t) from t=0 to 1 with ``solver.n_ode`` fixed steps; z is held fixed."""
    x = np.array(x0, dtype=np.float64)
    h = solver.h
    for i in range(solver.n_ode):
        x = ode_step(v, x, z, i * h, h, solver.method)
    return x


# --- model-level sampling ------------------------------------------------------------

def _generate(model, z, rng, solver, side, x0=None):
    if x0 is None:
        x0 = rng.standard_normal((z.shape[0], model.p))
    x1 = integrate(model.field(), x0, z, solver)
    return x1.reshape(-1, side, side), x0


def sample(model, catalog, K, solver, seed):
    """Reuse training images: encode K of them, draw z ~ q(z|x), integrate from noise.

    Items are drawn without replacement when ``K <= len(catalog)``, with
    replacement otherwise.
    """
    if len(catalog) == 0:
        raise ValueError("catalog is empty")
    rng = stream(seed, "sample")
    idx = rng.choice(len(catalog), size=K, replace=K > len(catalog))
    mu, logvar = model.encode(catalog.flat[idx])
    z = enc.reparameterize(mu, logvar, rng)
    images, _ = _generate(model, z, rng, solver, catalog.side)
    return images, z, idx


def sample_prior(model, catalog, K, solver, seed, prior):
    """Alternative latent source: z ~ p(z|u) for the auxiliaries of K catalog items."""
    if len(catalog) == 0:
        raise ValueError("catalog is empty")
    rng = stream(seed, "sample-prior")
    idx = rng.choice(len(catalog), size=K, replace=K > len(catalog))
    mu0, sigma0 = losses.prior_params(catalog.u[idx], prior)
    z = mu0 + np.sqrt(sigma0) * rng.standard_normal(mu0.shape)
    images, _ = _generate(model, z, rng, solver, catalog.side)
    return images, z, idx


def posterior_means(model, catalog):
    mu, _ = model.encode(catalog.flat)
    return mu


def rec_norms(mu_rec):
    """Norm of per-dimension standardized reconstruction-block means."""
    sd = mu_rec.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return np.linalg.norm((mu_rec - mu_rec.mean(axis=0)) / sd, axis=1)


def select_rec_mode(mu_rec, mode, tail_quantile=0.95):
    """Indices of items in the centre (norm below the median) or tail (above the quantile)."""
    norms = rec_norms(mu_rec)
    if mode == "center":
        sel = np.flatnonzero(norms < np.median(norms))
    elif mode == "tail":
        sel = np.flatnonzero(norms > np.quantile(norms, tail_quantile))
    else:
        raise ValueError(f"rec mode must be 'center' or 'tail', got {mode!r}")
    if sel.size == 0:
        raise ValueError(f"no catalog items fall in the {mode} region")
    return sel


def sample_controlled(model, catalog, z_aux, rec_mode, K, solver, seed, tail_quantile=0.95,
                      mu=None, x0=None):
    """Fix the guided block to ``z_aux`` and draw z_rec from the centre or tail of
    the aggregate-posterior means (with replacement)."""
    d = model.config.d
    z_aux = np.asarray(z_aux, dtype=np.float64)
    if z_aux.shape != (d,):
        raise ValueError(f"z_aux must have length d={d}")
    mu = posterior_means(model, catalog) if mu is None else mu
    sel = select_rec_mode(mu[:, d:], rec_mode, tail_quantile)
    rng = stream(seed, f"controlled-{rec_mode}")
    pick = sel[rng.integers(0, sel.size, size=K)]
    z = np.concatenate([np.tile(z_aux, (K, 1)), mu[pick, d:]], axis=1)
    images, _ = _generate(model, z, rng, solver, catalog.side, x0)
    return images, z, pick


def traverse(model, j, grid, z_rec, z_aux_base, solver, seed, side, x0=None):
    """One image per grid value of guided dim ``j``; x0, z_rec and the other
    guided coordinates are shared across the row. ``x0`` (one row) defaults to
    a draw from the ``(seed, "traverse")`` stream."""
    d = model.config.d
    if not 0 <= j < d:
        raise ValueError(f"traversal dimension {j} must be < d={d}")
    grid = np.asarray(grid, dtype=np.float64)
    z_aux = np.tile(np.asarray(z_aux_base, dtype=np.float64), (grid.size, 1))
    z_aux[:, j] = grid
    z = np.concatenate([z_aux, np.tile(np.asarray(z_rec, dtype=np.float64), (grid.size, 1))], axis=1)
    if x0 is None:
        x0 = stream(seed, "traverse").standard_normal((1, model.p))
    x0 = np.tile(np.asarray(x0, dtype=np.float64).reshape(1, model.p), (grid.size, 1))
    x1 = integrate(model.field(), x0, z, solver)
    return x1.reshape(-1, side, side), z


def typical_rec(model, catalog, mu=None):
    """z_rec of the item closest to the centre of the reconstruction block."""
    d = model.config.d
    mu = posterior_means(model, catalog) if mu is None else mu
    return mu[int(np.argmin(rec_norms(mu[:, d:]))), d:]


__all__ = ["SolverSpec", "SampleConfig", "ode_step", "integrate", "sample", "sample_prior",
           "sample_controlled", "traverse", "select_rec_mode", "typical_rec"]
