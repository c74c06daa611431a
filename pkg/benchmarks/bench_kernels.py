"""Time each hot kernel under the numba and pure-numpy backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Numba functions are called once before timing so compilation is excluded.
Results are checked against each other before any timing is reported.
"""

import argparse
import time

import numpy as np

from dlcfm import kernels


def _cases(rng):
    X = rng.standard_normal((512, 256))
    Y = rng.standard_normal((512, 256))
    A = rng.standard_normal((200, 2))
    B = rng.standard_normal((200, 2)) + 1.0
    C = kernels.numpy_backend.pairwise_distances(A, B, kernels.SQEUCLIDEAN)
    la, lb = np.full(200, -np.log(200)), np.full(200, -np.log(200))
    imgs = rng.random((256, 16, 16))
    return {
        "beta_profile_image(64)": lambda k: k.beta_profile_image(64, 1.0, 3.0, 0.2, 0.4, 0.3, -0.2),
        "pairwise_distances(512x512x256)": lambda k: k.pairwise_distances(X, Y, kernels.EUCLIDEAN),
        "sinkhorn_log(200x200, 500 it)": lambda k: k.sinkhorn_log(
            C, la, lb, 0.05 * float(np.median(C)), np.zeros(200), np.zeros(200), 500, 0.0, 10)[0],
        "count_local_maxima(256 x 16x16)": lambda k: np.array([k.count_local_maxima(im, 0.1) for im in imgs]),
    }


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if kernels.numba_backend is None:
        raise SystemExit("numba backend unavailable (is DLCFM_DISABLE_NUMBA set?)")
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':36s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, call in cases.items():
        ref = call(kernels.numpy_backend)
        got = call(kernels.numba_backend)   # also triggers compilation
        if not np.allclose(ref, got, rtol=1e-9, atol=1e-12):
            raise SystemExit(f"{name}: backends disagree")
        t_np = _best(lambda: call(kernels.numpy_backend), args.repeat)
        t_nb = _best(lambda: call(kernels.numba_backend), args.repeat)
        print(f"{name:36s} {1e3 * t_np:10.3f} {1e3 * t_nb:10.3f} {t_np / t_nb:8.2f}x")


if __name__ == "__main__":
    main()
