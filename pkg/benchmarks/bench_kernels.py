"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``. Both backends are called on
identical inputs and their outputs are compared before timing.
"""
import argparse
import timeit

import numpy as np

from pddssca.kernels import _reference

try:
    from pddssca.kernels import _ckernels as compiled
except ImportError:
    compiled = None


def wmmse_inputs(rng, M, S, K):
    F = np.exp(1j * rng.uniform(0, 2 * np.pi, (M, S)))
    H = (rng.normal(size=(K, M)) + 1j * rng.normal(size=(K, M))) / np.sqrt(2)
    return (np.ascontiguousarray(H @ F), np.ascontiguousarray(F.conj().T @ F),
            np.ascontiguousarray(rng.normal(size=(S, K)) + 1j * rng.normal(size=(S, K))),
            rng.uniform(0.5, 2.0, K))


def cmac_inputs(rng, n, N):
    return (np.ascontiguousarray(rng.uniform(0.1, 2.0, N)), 0.7,
            rng.exponential(size=(n, N)), rng.exponential(size=(n, N)), 1e6)


def bench(name, fn_ref, fn_fast, args, number):
    ref = fn_ref(*args)
    fast = fn_fast(*args)
    for a, b in zip(ref, fast):
        np.testing.assert_allclose(np.asarray(b, dtype=np.asarray(a).dtype), a, rtol=1e-10, atol=1e-12)
    t_ref = min(timeit.repeat(lambda: fn_ref(*args), number=number, repeat=5)) / number
    t_fast = min(timeit.repeat(lambda: fn_fast(*args), number=number, repeat=5)) / number
    print(f"{name:<28} python {t_ref * 1e6:10.1f} us   compiled {t_fast * 1e6:10.1f} us   "
          f"speed-up {t_ref / t_fast:6.1f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    if compiled is None:
        print("compiled kernels are not built; nothing to compare")
        return
    rng = np.random.default_rng(args.seed)
    for M, S, K in [(8, 2, 2), (16, 2, 2), (64, 4, 4)]:
        bench(f"wmmse_sweep M={M} S={S} K={K}", _reference.wmmse_sweep, compiled.wmmse_sweep,
              wmmse_inputs(rng, M, S, K), number=2000)
    for n in (20, 1000):
        bench(f"cmac_power states={n} N=2", _reference.cmac_power, compiled.cmac_power,
              cmac_inputs(rng, n, 2), number=200)


if __name__ == "__main__":
    main()
