"""numba-compiled kernels; loop-for-loop twins of ``_numpy``."""

import math

import numba as nb
import numpy as np

SQEUCLIDEAN, EUCLIDEAN, CITYBLOCK = 0, 1, 2

_jit = dict(cache=True, nogil=True)


@nb.njit(**_jit)
def beta_profile_image(side, amp, r_s, ell, theta, cx, cy):
    out = np.empty((side, side))
    c = (side - 1) / 2.0
    ct, st = math.cos(theta), math.sin(theta)
    q = 1.0 - ell
    for i in range(side):
        dy = (i - c) - cy
        for j in range(side):
            dx = (j - c) - cx
            xp = ct * dx + st * dy
            yp = -st * dx + ct * dy
            re2 = q * xp * xp + yp * yp / q
            out[i, j] = amp * (1.0 + re2 / (r_s * r_s)) ** -1.5
    return out


@nb.njit(parallel=True, **_jit)
def pairwise_distances(X, Y, metric):
    n, m, p = X.shape[0], Y.shape[0], X.shape[1]
    out = np.empty((n, m))
    # rows are independent, so the result does not depend on the thread count
    for i in nb.prange(n):
        for j in range(m):
            acc = 0.0
            for k in range(p):
                d = X[i, k] - Y[j, k]
                if metric == CITYBLOCK:
                    acc += abs(d)
                else:
                    acc += d * d
            if metric == EUCLIDEAN:
                acc = math.sqrt(acc)
            out[i, j] = acc
    return out


@nb.njit(**_jit)
def sinkhorn_log(C, log_a, log_b, reg, f, g, max_iter, tol, check_every):
    n, m = C.shape
    f = f.copy()
    g = g.copy()
    err = np.inf
    it = 0
    while it < max_iter:
        for i in range(n):
            mx = -np.inf
            for j in range(m):
                v = (g[j] - C[i, j]) / reg
                if v > mx:
                    mx = v
            s = 0.0
            for j in range(m):
                s += math.exp((g[j] - C[i, j]) / reg - mx)
            f[i] = reg * log_a[i] - reg * (mx + math.log(s))
        for j in range(m):
            mx = -np.inf
            for i in range(n):
                v = (f[i] - C[i, j]) / reg
                if v > mx:
                    mx = v
            s = 0.0
            for i in range(n):
                s += math.exp((f[i] - C[i, j]) / reg - mx)
            g[j] = reg * log_b[j] - reg * (mx + math.log(s))
        it += 1
        if it % check_every == 0 or it == max_iter:
            err = 0.0
            for i in range(n):
                row = 0.0
                for j in range(m):
                    row += math.exp((f[i] + g[j] - C[i, j]) / reg)
                err += abs(row - math.exp(log_a[i]))
            if err <= tol:
                break
    return f, g, it, err


@nb.njit(**_jit)
def count_local_maxima(img, frac):
    h, w = img.shape
    thresh = frac * img.max()
    count = 0
    for i in range(h):
        for j in range(w):
            v = img[i, j]
            if not v > thresh:
                continue
            ok = True
            for di in range(-1, 2):
                for dj in range(-1, 2):
                    if di == 0 and dj == 0:
                        continue
                    ii, jj = i + di, j + dj
                    if 0 <= ii < h and 0 <= jj < w and not v > img[ii, jj]:
                        ok = False
            if ok:
                count += 1
    return count
