"""Synthetic tSZ-like halo images with known generative factors.

Each halo is a projected beta-model profile ``A(M) (1 + r_e^2 / r_s^2)^-1.5``
on a grid spanning four halo radii per side. Mass sets the amplitude
(``A ∝ M^(5/3)``), concentration sets the core radius ``r_s = R / c`` and the
residual factors (ellipticity, orientation, centre offset, an optional merging
companion) shape the morphology without entering the auxiliary vector.
"""

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import container, kernels
from .rng import stream


@dataclass
class HaloConfig:
    mass_min: float = 10 ** 13.5
    mass_max: float = 10 ** 14.5
    mass_pivot: float = 10 ** 14.0
    c0: float = 4.0
    alpha: float = 0.2
    sigma_c: float = 0.25
    c_min: float = 1.5
    c_max: float = 16.0
    max_ellipticity: float = 0.4
    offset_sigma: float = 0.5        # pixels at side 16, scaled with side
    merger_prob: float = 0.15
    secondary_amp_min: float = 0.5
    secondary_amp_max: float = 0.9
    secondary_rs: float = 1.5        # pixels at side 16
    secondary_dist_min: float = 4.0  # pixels at side 16
    secondary_dist_max: float = 6.0

    def validate(self):
        if not 0 < self.mass_min < self.mass_max:
            raise ValueError(f"need 0 < mass_min < mass_max, got {self.mass_min}, {self.mass_max}")
        if self.alpha < 0 or self.sigma_c < 0:
            raise ValueError("alpha and sigma_c must be non-negative")
        if not 0 < self.c_min < self.c_max or self.c0 <= 0:
            raise ValueError("concentration bounds must satisfy 0 < c_min < c_max, c0 > 0")
        if not 0 <= self.max_ellipticity < 0.5:
            raise ValueError("max_ellipticity must lie in [0, 0.5)")
        if not 0 <= self.merger_prob <= 1:
            raise ValueError("merger_prob must lie in [0, 1]")
        if not 0 < self.secondary_amp_min <= self.secondary_amp_max <= 1:
            raise ValueError("secondary amplitudes must lie in (0, 1]")
        return self

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown halo config keys: {sorted(unknown)}")
        return cls(**d).validate()


@dataclass
class HaloParams:
    mass: float
    concentration: float
    ellipticity: float = 0.0
    orientation: float = 0.0
    offset: tuple = (0.0, 0.0)
    merger: bool = False
    secondary_offset: tuple | None = None
    secondary_amp: float | None = None

    def __post_init__(self):
        if not self.mass > 0 or not self.concentration > 0:
            raise ValueError("mass and concentration must be positive")
        if self.merger != (self.secondary_amp is not None):
            raise ValueError("secondary parameters must be present iff merger is set")
        if self.merger and not (0 < self.secondary_amp <= 1):
            raise ValueError(f"secondary amplitude must lie in (0, 1], got {self.secondary_amp}")


@dataclass
class HaloImage:
    pixels: np.ndarray
    params: HaloParams


def amplitude(mass, config=None):
    config = config or HaloConfig()
    return (mass / config.mass_min) ** (5.0 / 3.0)


def concentration_mean(mass, config):
    """Noise-free mass-concentration relation ``c0 (M / M_pivot)^-alpha``."""
    return config.c0 * (mass / config.mass_pivot) ** (-config.alpha)


def sample_params(rng, n, config=None):
    config = (config or HaloConfig()).validate()
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    logm = rng.uniform(np.log(config.mass_min), np.log(config.mass_max), n)
    mass = np.exp(logm)
    conc = concentration_mean(mass, config) * np.exp(config.sigma_c * rng.standard_normal(n))
    conc = np.clip(conc, config.c_min, config.c_max)
    ell = rng.uniform(0.0, config.max_ellipticity, n)
    orient = rng.uniform(0.0, np.pi, n)
    off = config.offset_sigma * rng.standard_normal((n, 2))
    merger = rng.uniform(size=n) < config.merger_prob
    dist = rng.uniform(config.secondary_dist_min, config.secondary_dist_max, n)
    ang = rng.uniform(0.0, 2.0 * np.pi, n)
    amp = rng.uniform(config.secondary_amp_min, config.secondary_amp_max, n)
    out = []
    for i in range(n):
        sec = (float(dist[i] * np.cos(ang[i])), float(dist[i] * np.sin(ang[i])))
        out.append(HaloParams(
            mass=float(mass[i]), concentration=float(conc[i]),
            ellipticity=float(ell[i]), orientation=float(orient[i]),
            offset=(float(off[i, 0]), float(off[i, 1])),
            merger=bool(merger[i]),
            secondary_offset=sec if merger[i] else None,
            secondary_amp=float(amp[i]) if merger[i] else None,
        ))
    return out


def render(params, side=16, config=None):
    """Noise-free raw (unscaled) image of one halo.

    Offsets, the companion's distance and its core radius are specified in
    pixels of a 16-pixel image and scaled with ``side``.
    """
    if side < 8:
        raise ValueError(f"side must be >= 8, got {side}")
    config = config or HaloConfig()
    s = side / 16.0
    r_s = side / (4.0 * params.concentration)
    cx, cy = params.offset[0] * s, params.offset[1] * s
    amp = amplitude(params.mass, config)
    img = kernels.beta_profile_image(side, amp, r_s, params.ellipticity,
                                     params.orientation, cx, cy)
    if params.merger:
        sx, sy = params.secondary_offset
        img = img + kernels.beta_profile_image(side, amp * params.secondary_amp,
                                               config.secondary_rs * s, 0.0, 0.0,
                                               cx + sx * s, cy + sy * s)
    return HaloImage(img, params)


@dataclass
class Catalog:
    """Scaled images, normalized auxiliaries and ground-truth factors."""

    pixels: np.ndarray          # (n, side, side), in [0, 1]
    u: np.ndarray               # (n, 2): normalized log-mass, normalized concentration
    factors: dict               # name -> array of ground-truth factors per halo
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.pixels.shape[0]

    @property
    def side(self):
        return self.pixels.shape[1]

    @property
    def flat(self):
        return self.pixels.reshape(len(self), -1)

    def params(self, i):
        f = self.factors
        merger = bool(f["merger"][i])
        return HaloParams(
            mass=float(f["mass"][i]), concentration=float(f["concentration"][i]),
            ellipticity=float(f["ellipticity"][i]), orientation=float(f["orientation"][i]),
            offset=tuple(float(v) for v in f["offset"][i]), merger=merger,
            secondary_offset=tuple(float(v) for v in f["secondary_offset"][i]) if merger else None,
            secondary_amp=float(f["secondary_amp"][i]) if merger else None,
        )

    def subset(self, idx):
        idx = np.asarray(idx)
        return Catalog(self.pixels[idx], self.u[idx],
                       {k: v[idx] for k, v in self.factors.items()}, dict(self.meta))

    def equals(self, other):
        return (self.meta == other.meta
                and np.array_equal(self.pixels, other.pixels)
                and np.array_equal(self.u, other.u)
                and self.factors.keys() == other.factors.keys()
                and all(np.array_equal(self.factors[k], other.factors[k]) for k in self.factors))


FACTOR_NAMES = ("mass", "concentration", "ellipticity", "orientation", "offset",
                "merger", "secondary_offset", "secondary_amp")


def _minmax(x, what):
    lo, hi = float(x.min()), float(x.max())
    if not hi > lo:
        raise ValueError(f"degenerate {what} range: min == max == {lo}")
    return lo, hi


def build_catalog(seed, n, side=16, config=None):
    """Generate ``n`` halos; halo ``i`` draws from its own ``(seed, "halo", i)`` stream."""
    config = (config or HaloConfig()).validate()
    if n < 2:
        raise ValueError(f"a catalog needs n >= 2 for normalization, got {n}")
    params = [sample_params(stream(seed, "halo", i), 1, config)[0] for i in range(n)]
    raw = np.stack([render(p, side, config).pixels for p in params])
    logged = np.log1p(raw)
    pix_lo, pix_hi = _minmax(logged, "pixel")
    pixels = (logged - pix_lo) / (pix_hi - pix_lo)

    factors = {
        "mass": np.array([p.mass for p in params]),
        "concentration": np.array([p.concentration for p in params]),
        "ellipticity": np.array([p.ellipticity for p in params]),
        "orientation": np.array([p.orientation for p in params]),
        "offset": np.array([p.offset for p in params]),
        "merger": np.array([float(p.merger) for p in params]),
        "secondary_offset": np.array([p.secondary_offset or (0.0, 0.0) for p in params]),
        "secondary_amp": np.array([p.secondary_amp or 0.0 for p in params]),
    }
    logm = np.log(factors["mass"])
    conc = factors["concentration"]
    lm_lo, lm_hi = _minmax(logm, "log-mass")
    c_lo, c_hi = _minmax(conc, "concentration")
    u = np.stack([(logm - lm_lo) / (lm_hi - lm_lo), (conc - c_lo) / (c_hi - c_lo)], axis=1)
    meta = {
        "kind": "catalog", "seed": int(seed), "n": int(n), "side": int(side), "d": 2,
        "u_min": [lm_lo, c_lo], "u_max": [lm_hi, c_hi],
        "pixel_lo": pix_lo, "pixel_hi": pix_hi,
        "halo_config": asdict(config),
    }
    return Catalog(pixels, u, factors, meta)


def unscale_pixels(pixels, meta):
    """Invert the per-dataset scaling back to raw profile values."""
    return np.expm1(pixels * (meta["pixel_hi"] - meta["pixel_lo"]) + meta["pixel_lo"])


def write_catalog(catalog, path):
    arrays = {"pixels": catalog.pixels, "u": catalog.u}
    arrays.update({f"factor.{k}": catalog.factors[k] for k in FACTOR_NAMES})
    container.write(path, arrays, catalog.meta)


def read_catalog(path):
    arrays, meta = container.read(path)
    if meta.get("kind") != "catalog":
        raise container.HeaderError(f"{path}: not a catalog container (kind={meta.get('kind')!r})")
    missing = [k for k in ("pixels", "u") if k not in arrays]
    if missing:
        raise container.HeaderError(f"{path}: missing arrays {missing}")
    pixels, u = arrays["pixels"], arrays["u"]
    if pixels.ndim != 3 or pixels.shape[1] != pixels.shape[2] or pixels.shape[0] != u.shape[0]:
        raise container.HeaderError(f"{path}: inconsistent shapes {pixels.shape} / {u.shape}")
    factors = {k[len("factor."):]: v for k, v in arrays.items() if k.startswith("factor.")}
    return Catalog(pixels, u, factors, meta)
