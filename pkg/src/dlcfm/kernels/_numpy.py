"""Pure-numpy reference kernels. Semantics must match ``_numba`` exactly."""

import numpy as np

SQEUCLIDEAN, EUCLIDEAN, CITYBLOCK = 0, 1, 2

_ROW_BLOCK = 64


def beta_profile_image(side, amp, r_s, ell, theta, cx, cy):
    c = (side - 1) / 2.0
    coords = np.arange(side, dtype=np.float64) - c
    dy, dx = np.meshgrid(coords - cy, coords - cx, indexing="ij")
    ct, st = np.cos(theta), np.sin(theta)
    xp = ct * dx + st * dy
    yp = -st * dx + ct * dy
    q = 1.0 - ell
    re2 = q * xp * xp + yp * yp / q
    return amp * (1.0 + re2 / (r_s * r_s)) ** -1.5


def pairwise_distances(X, Y, metric):
    out = np.empty((X.shape[0], Y.shape[0]))
    for start in range(0, X.shape[0], _ROW_BLOCK):
        diff = X[start:start + _ROW_BLOCK, None, :] - Y[None, :, :]
        if metric == CITYBLOCK:
            blk = np.abs(diff).sum(axis=2)
        else:
            blk = (diff * diff).sum(axis=2)
            if metric == EUCLIDEAN:
                blk = np.sqrt(blk)
        out[start:start + _ROW_BLOCK] = blk
    return out


def _lse_rows(M):
    m = M.max(axis=1)
    return m + np.log(np.exp(M - m[:, None]).sum(axis=1))


def sinkhorn_log(C, log_a, log_b, reg, f, g, max_iter, tol, check_every):
    """Log-domain Sinkhorn-Knopp. Returns (f, g, iterations, marginal violation)."""
    a = np.exp(log_a)
    err = np.inf
    it = 0
    while it < max_iter:
        f = reg * log_a - reg * _lse_rows((g[None, :] - C) / reg)
        g = reg * log_b - reg * _lse_rows((f[:, None] - C).T / reg)
        it += 1
        if it % check_every == 0 or it == max_iter:
            P = np.exp((f[:, None] + g[None, :] - C) / reg)
            err = np.abs(P.sum(axis=1) - a).sum()
            if err <= tol:
                break
    return f, g, it, err


def count_local_maxima(img, frac):
    thresh = frac * img.max()
    h, w = img.shape
    padded = np.full((h + 2, w + 2), -np.inf)
    padded[1:-1, 1:-1] = img
    is_max = img > thresh
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            is_max &= img > padded[1 + di:1 + di + h, 1 + dj:1 + dj + w]
    return int(is_max.sum())
