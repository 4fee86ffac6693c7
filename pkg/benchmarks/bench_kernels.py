"""Compiled (numba) vs numpy timings of the hot kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is called once to trigger compilation, then timed; the two
backends are also cross-checked on the same inputs.
"""
import argparse
import time

import numpy as np

from kgscatter import kernels


def circle(center, e1, e2, r, n):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return np.asarray(center) + r * (np.cos(t)[:, None] * np.asarray(e1) + np.sin(t)[:, None] * np.asarray(e2))


def best_of(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def cases():
    a = circle([0, 0, 0], [1, 0, 0], [0, 1, 0], 1.0, 2048)
    b = circle([1, 0, 0], [1, 0, 0], [0, 0, 1], 0.5, 2048)
    yield "linking_number 2048x2048", (kernels.linking_number_numba, kernels.linking_number_numpy), (a, b)
    pts = np.random.default_rng(0).normal(size=(20_000, 3)) * 3
    yield "biot_savart 20000 pts x 2048 seg", (kernels.biot_savart_polyline_numba,
                                              kernels.biot_savart_polyline_numpy), (pts, a)
    filt = np.random.default_rng(1).normal(size=(64, 128))
    ang = np.pi * np.arange(64) / 64
    xs = np.linspace(-2, 2, 256)
    yield "backproject 64 angles -> 256^2", (kernels.backproject_numba, kernels.backproject_numpy), \
        (filt, ang, -4.0, 8.0 / 127, xs, xs)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'kernel':36s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, (f_jit, f_np), inp in cases():
        f_jit(*inp)  # compile
        t_jit, r_jit = best_of(lambda: f_jit(*inp), args.repeat)
        t_np, r_np = best_of(lambda: f_np(*inp), args.repeat)
        diff = float(np.max(np.abs(np.asarray(r_jit) - np.asarray(r_np))))
        print(f"{name:36s} {t_jit:10.4f} {t_np:10.4f} {t_np / t_jit:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
