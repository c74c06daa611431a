"""Disentangled latent conditional flow matching on synthetic halo images."""

from . import autodiff, container, encoder, flow, halos, kernels, losses, metrics, sampler
from .rng import stream

__version__ = "0.1.0"

__all__ = ["autodiff", "container", "encoder", "flow", "halos", "kernels", "losses", "metrics",
           "sampler", "stream"]
