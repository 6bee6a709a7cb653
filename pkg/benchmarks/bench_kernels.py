"""Time each hot kernel on its numba and numpy paths and check they agree.

    python3 benchmarks/bench_kernels.py [--particles N] [--steps n] [--repeat r]
"""

import argparse
import time

import numpy as np

from viscolab import kernels
from viscolab.channel import random_spd_field, grid


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def em_case(n_part, n_steps):
    X0 = np.random.default_rng(0).standard_normal((n_part, 2))
    s0 = kernels.seed_streams(1, n_part)
    kap = np.broadcast_to(np.array([[0.0, 1.0], [0.0, 0.0]]), (n_steps, 2, 2)).copy()

    def make(fn):
        def call():
            X, s = X0.copy(), s0.copy()
            fn(X, s, kap, 1e-3, 1.0, True)
            return X
        return call
    return make(kernels._em_advance_nb), make(kernels._em_advance_np)


def rk4_case(n_steps):
    kst = np.broadcast_to(np.array([[0.0, 1.0], [0.0, 0.0]]), (n_steps, 3, 2, 2)).copy()
    out = np.empty((n_steps + 1, 2, 2))

    def make(fn):
        def call():
            A = np.diag([2.0, 0.5])
            fn(A, kst, 0, 1e-3, 1.0, 0, 0.0, 1e-10, 1, out)
            return A
        return call
    return make(kernels._rk4_segment_nb), make(kernels._rk4_segment_np)


def channel_case(ny, n_steps):
    A0 = random_spd_field(grid(ny), np.random.default_rng(2))
    dudy = 0.3 * np.cos(np.pi * grid(ny))

    def make(fn):
        def call():
            A = A0.copy()
            status = np.zeros(ny, dtype=np.int64)
            for _ in range(n_steps):
                fn(A, dudy, 1e-3, 1.0, 0, 0.0, 1e-10, status)
            return A
        return call
    return make(kernels._channel_rk2_nb), make(kernels._channel_rk2_np)


def thomas_case(n, n_solves):
    rng = np.random.default_rng(3)
    lower, upper = -np.ones(n), -np.ones(n)
    lower[0] = upper[-1] = 0.0
    diag = 2.5 + rng.random(n)
    rhs = rng.standard_normal(n)

    def make(fn):
        def call():
            for _ in range(n_solves):
                x = fn(lower, diag, upper, rhs)
            return x
        return call
    return make(kernels._thomas_nb), make(kernels._thomas_np)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--particles", type=int, default=20_000)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    cases = {
        f"em_advance  N={args.particles} x {args.steps} steps": em_case(args.particles, args.steps),
        f"rk4_segment {100 * args.steps} steps": rk4_case(100 * args.steps),
        f"channel_rk2 ny=129 x {args.steps} steps": channel_case(129, args.steps),
        f"thomas      n=127 x {10 * args.steps} solves": thomas_case(127, 10 * args.steps),
    }
    print(f"{'kernel':42s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, (nb, npy) in cases.items():
        nb()  # compile
        diff = float(np.max(np.abs(nb() - npy())))
        t_nb = best_of(nb, args.repeat)
        t_np = best_of(npy, args.repeat)
        print(f"{name:42s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
