"""Latent-conditioned flow matching: path, target field, vector-field net, training loop."""

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import autodiff as ad
from . import encoder as enc
from . import losses
from .rng import stream

# Smooth activation and a slow time embedding keep v(x, z, t) C-infinity with
# modest derivatives in t, so fixed-step solvers reach their nominal order.
TIME_SCALE = 10.0


class TrainingDivergedError(FloatingPointError):
    def __init__(self, step, value):
        super().__init__(f"non-finite loss {value} at step {step}")
        self.step = step


def _from_dict(cls, d, section):
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown {section} keys: {sorted(unknown)}")
    return cls(**d)


@dataclass
class ModelConfig:
    d: int = 2
    d_Z: int = 8
    enc_widths: tuple = (128, 128)
    vf_width: int = 256
    vf_blocks: int = 3
    temb_dim: int = 32
    emb_dim: int = 64

    def __post_init__(self):
        self.enc_widths = tuple(self.enc_widths)
        if not 1 <= self.d < self.d_Z:
            raise ValueError(f"need 1 <= d < d_Z, got d={self.d}, d_Z={self.d_Z}")
        if self.temb_dim % 2:
            raise ValueError("temb_dim must be even")

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d, "model")

    def to_dict(self):
        out = asdict(self)
        out["enc_widths"] = list(self.enc_widths)
        return out


@dataclass
class TrainConfig:
    steps: int = 10000
    batch: int = 128
    lr: float = 2e-4
    beta: float = 8e-5
    lambda1: float = 8e-2
    lambda2: float = 1e-2
    K: int = 1
    sigma: float = 0.0
    tau2: object = "inv-batch"
    seed: int = 0
    checkpoint_interval: int = 0
    holdout: float = 0.2

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.batch < 3:
            raise ValueError("batch must be >= 3 for the correlation penalties")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0 < self.holdout < 1:
            raise ValueError("holdout must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d, "train")

    @property
    def weights(self):
        return losses.LossWeights(self.beta, self.lambda1, self.lambda2, self.K)

    def tau2_value(self):
        if self.tau2 == "inv-batch":
            return 1.0 / self.batch
        return float(self.tau2)

    def prior(self, d, d_Z):
        return losses.PriorSpec(self.tau2_value(), d, d_Z)


# --- probability path -----------------------------------------------------------

def target_field(x0, x1):
    """Conditional target ``x1 - x0`` (constant in t)."""
    x0, x1 = np.asarray(x0, dtype=np.float64), np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ad.ShapeError(f"target_field: x0 {x0.shape} vs x1 {x1.shape}")
    return x1 - x0


def sample_path(x0, x1, t, sigma=0.0, rng=None):
    """Draw ``x_t ~ N(t x1 + (1 - t) x0, sigma^2 I)``; ``t`` is a scalar or one value per row."""
    x0, x1 = np.asarray(x0, dtype=np.float64), np.asarray(x1, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0) or np.any(t > 1):
        raise ValueError("t must lie in [0, 1]")
    if t.ndim == 1:
        t = t.reshape((-1,) + (1,) * (x1.ndim - 1))
    xt = t * x1 + (1.0 - t) * x0
    if sigma > 0:
        xt = xt + sigma * rng.standard_normal(xt.shape)
    return xt


def time_embedding(t, dim):
    """Sinusoidal features of ``t`` in [0, 1]; shape (n, dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    args = TIME_SCALE * t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


# --- vector field network -----------------------------------------------------------

def _dense(rng, fan_in, fan_out, gain=2.0, zero=False):
    w = np.zeros((fan_in, fan_out)) if zero else np.sqrt(gain / fan_in) * rng.standard_normal((fan_in, fan_out))
    return w, np.zeros((1, fan_out))


def init_vector_field(rng, p, cfg):
    """Parameters ``vf.*``; output and skip layers start at zero so v == 0 initially."""
    W, E = cfg.vf_width, cfg.emb_dim
    params = {}
    shapes = [("t1", cfg.temb_dim, E, 2.0, False), ("t2", E, E, 1.0, False),
              ("z", cfg.d_Z, E, 1.0, False), ("in", p + E, W, 2.0, False)]
    for i in range(cfg.vf_blocks):
        shapes += [(f"blk{i}.a", W, W, 2.0, False), (f"blk{i}.b", W, W, 0.5, False)]
    shapes += [("out", W, p, 1.0, True), ("skip", E, p, 1.0, True)]
    for name, fi, fo, gain, zero in shapes:
        params[f"vf.{name}.w"], params[f"vf.{name}.b"] = _dense(rng, fi, fo, gain, zero)
    return params


def _lin(x, P, name):
    return x @ P[f"vf.{name}.w"] + P[f"vf.{name}.b"]


def vf_graph(xt, z, temb, P, blocks):
    """v(x_t, z, t) with softplus units: time MLP plus a one-layer projection of z, added, then
    concatenated with x_t and passed through dense residual blocks. A per-pixel gain on x_t,
    driven by the time features, is added to the output."""
    act = ad.softplus
    th = act(_lin(temb, P, "t1"))
    emb = _lin(th, P, "t2") + _lin(z, P, "z")
    h = _lin(ad.concat([xt, emb], axis=1), P, "in")
    for i in range(blocks):
        h = h + _lin(act(_lin(act(h), P, f"blk{i}.a")), P, f"blk{i}.b")
    return _lin(act(h), P, "out") + _lin(th, P, "skip") * xt


def n_blocks(params):
    return sum(1 for k in params if k.startswith("vf.blk") and k.endswith(".a.w"))


class VectorField:
    """Callable ``v(x, z, t)`` over numpy batches; builds its graph once.

    The graph caches activations, so an instance must not be shared between
    threads; parameters are read, never written.
    """

    def __init__(self, params):
        self.params = params
        self.temb_dim = params["vf.t1.w"].shape[0]
        P = {k: ad.Input(k) for k in params if k.startswith("vf.")}
        self._out = vf_graph(ad.Input("xt"), ad.Input("z"), ad.Input("temb"), P, n_blocks(params))

    def __call__(self, x, z, t):
        x = np.asarray(x, dtype=np.float64)
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
        v = ad.forward(self._out, {**self.params, "xt": x, "z": z,
                                   "temb": time_embedding(t, self.temb_dim)})
        if not np.all(np.isfinite(v)):
            raise enc.NonFiniteError("vector field produced non-finite output")
        return v.copy()


def vf_forward(params, xt, z, t):
    return VectorField(params)(xt, z, t)


def cfm_loss_graph(v, target):
    return ad.mean(ad.square(v - target))


def cfm_loss(params, x0, x1, z, t, sigma=0.0, rng=None):
    """Mean squared error between v(x_t, z, t) and ``x1 - x0`` over batch and pixels."""
    xt = sample_path(x0, x1, t, sigma, rng)
    v = vf_forward(params, xt, z, t)
    return float(np.mean((v - target_field(x0, x1)) ** 2))


# --- model + training ------------------------------------------------------------------

@dataclass
class Model:
    config: ModelConfig
    p: int
    params: dict

    @classmethod
    def init(cls, config, p, seed):
        rng = stream(seed, "init")
        params = enc.init_encoder(rng, p, config.d_Z, config.enc_widths)
        params.update(init_vector_field(rng, p, config))
        return cls(config, p, params)

    def encode(self, x):
        return enc.encode({k: v for k, v in self.params.items() if k.startswith("enc.")}, x)

    def field(self):
        return VectorField({k: v for k, v in self.params.items() if k.startswith("vf.")})

    def copy(self):
        return Model(self.config, self.p, {k: v.copy() for k, v in self.params.items()})


TRACE_COLUMNS = ("step", "cfm_term", "kl_term", "align_term", "intra_term", "inter_term", "total")


@dataclass
class TrainState:
    model: Model
    adam: ad.Adam
    step: int = 0
    trace: list = field(default_factory=list)

    def trace_array(self):
        return np.array(self.trace, dtype=np.float64).reshape(-1, len(TRACE_COLUMNS))


class TrainingGraph:
    """The full objective as one graph over named data inputs and parameters."""

    def __init__(self, model, weights, prior):
        cfg = model.config
        self.param_names = set(model.params)
        P = {k: ad.Input(k) for k in model.params}
        x, u, mu0 = ad.Input("x"), ad.Input("u"), ad.Input("mu0")
        eps, xt, temb, target = ad.Input("eps"), ad.Input("xt"), ad.Input("temb"), ad.Input("target")
        mu, logvar = enc.encoder_graph(x, P, cfg.d_Z, enc.n_layers(model.params))
        z = enc.reparameterize_graph(mu, logvar, eps)
        v = vf_graph(xt, z, temb, P, cfg.vf_blocks)
        cfm = cfm_loss_graph(v, target)
        self.total, self.terms = losses.dlcfm_loss_graph(cfm, mu, logvar, u, mu0, weights, prior)
        self.temb_dim = cfg.temb_dim
        self.prior = prior

    def bindings(self, params, x1, u, eps, x0, t, sigma, rng):
        xt = sample_path(x0, x1, t, sigma, rng)
        mu0, _ = losses.prior_params(u, self.prior)
        return {**params, "x": x1, "u": u, "mu0": mu0, "eps": eps, "xt": xt,
                "temb": time_embedding(t, self.temb_dim), "target": target_field(x0, x1)}

    def evaluate(self, bindings):
        total = float(ad.forward(self.total, bindings))
        terms = [float(self.terms[k].value) for k in losses.TERM_NAMES]
        return total, terms

    def gradients(self):
        return ad.backward(self.total, wrt=self.param_names)


def draw_step(seed, step, n, batch, p, d_Z):
    """All randomness of one training step, from its own counter-based stream."""
    rng = stream(seed, "train", step)
    idx = rng.choice(n, size=batch, replace=n < batch)
    eps = rng.standard_normal((batch, d_Z))
    x0 = rng.standard_normal((batch, p))
    t = rng.uniform(size=batch)
    return idx, eps, x0, t, rng


def init_state(model_cfg, p, train_cfg):
    model = Model.init(model_cfg, p, train_cfg.seed)
    return TrainState(model, ad.Adam(lr=train_cfg.lr))


def train(catalog, model_cfg, train_cfg, state=None, on_step=None):
    """Jointly fit encoder and vector field on ``catalog`` up to ``train_cfg.steps``.

    Passing ``state`` resumes from it; each step draws from stream
    ``(seed, "train", step)``, so a resumed run reproduces the uninterrupted one.
    """
    X = catalog.flat if hasattr(catalog, "flat") else np.asarray(catalog[0])
    U = catalog.u if hasattr(catalog, "u") else np.asarray(catalog[1])
    n, p = X.shape
    if n == 0:
        raise ValueError("cannot train on an empty catalog")
    if state is None:
        state = init_state(model_cfg, p, train_cfg)
    graph = TrainingGraph(state.model, train_cfg.weights, train_cfg.prior(model_cfg.d, model_cfg.d_Z))
    params = state.model.params
    while state.step < train_cfg.steps:
        idx, eps, x0, t, rng = draw_step(train_cfg.seed, state.step, n, train_cfg.batch,
                                         p, model_cfg.d_Z)
        b = graph.bindings(params, X[idx], U[idx], eps, x0, t, train_cfg.sigma, rng)
        total, terms = graph.evaluate(b)
        if not math.isfinite(total):
            raise TrainingDivergedError(state.step, total)
        state.adam.step(params, graph.gradients())
        state.step += 1
        state.trace.append([state.step, *terms, total])
        if on_step is not None:
            on_step(state)
    return state


def split_indices(n, holdout, seed):
    """Deterministic (train, held-out) index split."""
    perm = stream(seed, "split").permutation(n)
    n_hold = max(1, int(round(holdout * n)))
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])
