"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and ``DLCFM_DISABLE_NUMBA``
is unset (or ``0``). ``DLCFM_THREADS`` caps numba's thread pool. Both paths
are importable explicitly as ``kernels.numpy_backend`` / ``kernels.numba_backend``
for cross-checking and benchmarking.
"""

import os

import numpy as np

from . import _numpy as numpy_backend

SQEUCLIDEAN, EUCLIDEAN, CITYBLOCK = 0, 1, 2

numba_backend = None
if os.environ.get("DLCFM_DISABLE_NUMBA", "0") in ("", "0"):
    # the bundled TBB is often too old and numba warns on every first launch
    os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")
    try:
        from . import _numba as numba_backend
    except ImportError:  # pragma: no cover - depends on environment
        numba_backend = None

if numba_backend is not None:
    _threads = os.environ.get("DLCFM_THREADS")
    if _threads:
        import numba

        numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))

BACKEND = "numba" if numba_backend is not None else "numpy"
_impl = numba_backend if numba_backend is not None else numpy_backend


def beta_profile_image(side, amp, r_s, ell, theta, cx, cy):
    return _impl.beta_profile_image(int(side), float(amp), float(r_s), float(ell),
                                    float(theta), float(cx), float(cy))


def pairwise_distances(X, Y, metric=SQEUCLIDEAN):
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[1] != Y.shape[1]:
        raise ValueError(f"pairwise_distances: incompatible shapes {X.shape} and {Y.shape}")
    return _impl.pairwise_distances(X, Y, int(metric))


def sinkhorn_log(C, log_a, log_b, reg, f, g, max_iter, tol, check_every=10):
    return _impl.sinkhorn_log(np.ascontiguousarray(C, dtype=np.float64),
                              np.asarray(log_a, dtype=np.float64),
                              np.asarray(log_b, dtype=np.float64),
                              float(reg), np.asarray(f, dtype=np.float64),
                              np.asarray(g, dtype=np.float64),
                              int(max_iter), float(tol), int(check_every))


def count_local_maxima(img, frac=0.1):
    return int(_impl.count_local_maxima(np.ascontiguousarray(img, dtype=np.float64), float(frac)))
