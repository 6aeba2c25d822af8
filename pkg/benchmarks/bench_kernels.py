"""
Time the numba and numpy versions of each hot kernel on representative
inputs and check that both agree.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from cgcnet import _kernels as K


def cases(rng):
    b2 = rng.uniform(size=(8, 8)) ** 2
    np.fill_diagonal(b2, 0.0)
    z = rng.normal(size=(27, 600))
    w = rng.normal(size=27)
    x = rng.normal(size=(600, 25))
    t = (rng.uniform(size=600) < 0.4).astype(float)
    g = rng.uniform(0.05, 0.95, size=600)
    return {
        "best_order (k=8)": (K.best_order_numba, K.best_order_numpy, (b2,)),
        "ica_update (k=27, n=600)": (K.ica_update_numba, K.ica_update_numpy, (w, z)),
        "balance (n=600, d=25)": (K.balance_numba, K.balance_numpy, (x, t, g)),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(u, v) for u, v in zip(a, b))
    return bool(np.allclose(a, b, rtol=1e-10, atol=1e-12))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}  agree")
    for name, (fast, slow, inputs) in cases(rng).items():
        fast(*inputs)  # compile outside the timed region
        agree = _same(fast(*inputs), slow(*inputs))
        number = 20
        t_fast = min(timeit.repeat(lambda: fast(*inputs), number=number, repeat=args.repeat)) / number
        t_slow = min(timeit.repeat(lambda: slow(*inputs), number=number, repeat=args.repeat)) / number
        print(f"{name:28s} {1e3 * t_fast:10.3f} {1e3 * t_slow:10.3f} {t_slow / t_fast:8.2f}  {agree}")


if __name__ == "__main__":
    main()
