"""Gaussian encoder q(z|x): dense leaky-ReLU network emitting (mean, log-variance)."""

import numpy as np

from . import autodiff as ad

LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0
LEAKY_SLOPE = 0.2


class NonFiniteError(FloatingPointError):
    pass


def init_encoder(rng, p, d_Z, widths=(128, 128)):
    """He-initialized weights; names ``enc.w{i}`` / ``enc.b{i}``."""
    params = {}
    dims = [p, *widths, 2 * d_Z]
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        last = i == len(dims) - 2
        std = np.sqrt((1.0 if last else 2.0) / fan_in)
        params[f"enc.w{i}"] = std * rng.standard_normal((fan_in, fan_out))
        params[f"enc.b{i}"] = np.zeros((1, fan_out))
    return params


def n_layers(params):
    return sum(1 for k in params if k.startswith("enc.w"))


def encoder_graph(x, P, d_Z, layers):
    """Build ``(mu, logvar)`` nodes from input node ``x`` and parameter nodes ``P``."""
    h = x
    for i in range(layers):
        h = h @ P[f"enc.w{i}"] + P[f"enc.b{i}"]
        if i < layers - 1:
            h = ad.leaky_relu(h, LEAKY_SLOPE)
    mu = ad.slice_cols(h, 0, d_Z)
    logvar = ad.clip(ad.slice_cols(h, d_Z, 2 * d_Z), LOGVAR_MIN, LOGVAR_MAX)
    return mu, logvar


def param_nodes(params, prefix):
    return {k: ad.Input(k) for k in params if k.startswith(prefix)}


def encode(params, x):
    """Encoder means and clamped log-variances for a batch of flattened images."""
    x = np.asarray(x, dtype=np.float64)
    x = x.reshape(x.shape[0], -1)
    d_Z = params[f"enc.b{n_layers(params) - 1}"].shape[1] // 2
    P = param_nodes(params, "enc.")
    xin = ad.Input("x")
    mu, logvar = encoder_graph(xin, P, d_Z, n_layers(params))
    out = ad.concat([mu, logvar], axis=1)
    val = ad.forward(out, {**params, "x": x})
    if not np.all(np.isfinite(val)):
        raise NonFiniteError("encoder produced non-finite activations")
    return val[:, :d_Z].copy(), val[:, d_Z:].copy()


def reparameterize_graph(mu, logvar, eps):
    return mu + ad.exp(0.5 * logvar) * eps


def reparameterize(mu, logvar, rng):
    """Draw ``z = mu + exp(logvar / 2) * eps`` with ``eps ~ N(0, I)``."""
    mu, logvar = np.asarray(mu, dtype=np.float64), np.asarray(logvar, dtype=np.float64)
    if mu.shape != logvar.shape:
        raise ad.ShapeError(f"reparameterize: mu {mu.shape} vs logvar {logvar.shape}")
    return mu + np.exp(0.5 * logvar) * rng.standard_normal(mu.shape)


def partition(z, d):
    """Split latents into the auxiliary-guided block and the reconstruction block."""
    z = np.asarray(z)
    d_Z = z.shape[-1]
    if not 1 <= d < d_Z:
        raise ValueError(f"partition index d={d} must satisfy 1 <= d < d_Z={d_Z}")
    return z[..., :d], z[..., d:]
