"""Per-image summary statistics used by traversals and sample reports."""

import numpy as np

from . import kernels


def total_flux(img):
    return float(np.clip(img, 0.0, None).sum())


def half_light_radius(img):
    """Radius around the flux-weighted centroid enclosing half the positive flux."""
    w = np.clip(np.asarray(img, dtype=np.float64), 0.0, None)
    tot = w.sum()
    if not tot > 0:
        return 0.0
    h, wd = w.shape
    yy, xx = np.mgrid[0:h, 0:wd].astype(np.float64)
    cy, cx = (w * yy).sum() / tot, (w * xx).sum() / tot
    r = np.hypot(yy - cy, xx - cx).ravel()
    order = np.argsort(r, kind="stable")
    r, cum = r[order], np.cumsum(w.ravel()[order])
    k = int(np.searchsorted(cum, 0.5 * tot))
    if k == 0:
        return float(r[0])
    frac = (0.5 * tot - cum[k - 1]) / (cum[k] - cum[k - 1])
    return float(r[k - 1] + frac * (r[k] - r[k - 1]))


def count_peaks(img, frac=0.1):
    """Strict 8-neighbour local maxima above ``frac`` of the image maximum."""
    return kernels.count_local_maxima(img, frac)


def summarize(images):
    """Rows of (total_flux, half_light_radius, n_peaks) for a stack of images."""
    return np.array([[total_flux(im), half_light_radius(im), count_peaks(im)] for im in images])
