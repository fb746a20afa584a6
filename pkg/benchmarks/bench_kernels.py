"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Both backends are called directly, so EVALBIAS_DISABLE_NUMBA has no effect
here.  Each numba kernel is called once before timing to exclude compilation.
"""

import argparse
import time

import numpy as np

from evalbias import kernels


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _agree(a, b):
    a, b = (a, b) if isinstance(a, tuple) else ((a,), (b,))
    return all(np.allclose(x, y, rtol=1e-9, atol=1e-12, equal_nan=True) for x, y in zip(a, b))


def _gibbs_case(n=20001):
    x = np.linspace(-10, 10, n)
    e = x * x
    logw = np.zeros(n)
    return e, logw


def _scan_case(rows=40, n=401, taus=25):
    x = np.linspace(-10, 10, n)
    shifts = np.linspace(-2, 2, rows)
    energies = (x[None, :] - shifts[:, None]) ** 2
    energies -= energies.min(axis=1, keepdims=True)
    logw = np.zeros(n)
    target = np.exp(-x * x / 2)
    target /= target.sum()
    h_min = np.array([kernels.entropy_limits(e, logw)[0] for e in energies])
    h_max = float(np.log(n))
    return energies, logw, np.linspace(0.5, 5.0, taus), target, h_min, h_max


def _energy_case(n=1500):
    x = np.linspace(-5, 5, n)
    p = np.exp(-x * x / 2)
    p /= p.sum()
    zeros = np.zeros(n)
    return 0, x, x.copy(), p, 2.0, 0.0, zeros, zeros


def _ba_case(n=200000, m0=50, seed=0):
    rng = np.random.default_rng(seed)
    factor = np.where(rng.random(n) < 0.5, 1.0, 0.5)
    deg0 = np.zeros(n, dtype=np.int64)
    deg0[:m0] = 2
    return deg0, factor, m0, rng.random(n - m0)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    e, logw = _gibbs_case()
    scan = _scan_case()
    energy = _energy_case()
    deg0, factor, m0, u = _ba_case()

    def ba(fn):
        targets = np.zeros(u.size, dtype=np.int64)
        return fn(deg0.copy(), factor, m0, u, targets)

    cases = {
        "solve_gamma": (
            lambda: kernels.solve_gamma_numba(e, logw, 2.0, -1.0, 1e-12, 200),
            lambda: kernels.solve_gamma_numpy(e, logw, 2.0, -1.0, 1e-12, 200),
        ),
        "scan_tv": (
            lambda: kernels.scan_tv_numba(*scan, 1e-12, 200),
            lambda: kernels.scan_tv_numpy(*scan, 1e-12, 200),
        ),
        "energy_direct": (
            lambda: kernels.energy_direct_numba(*energy),
            lambda: kernels.energy_direct_numpy(*energy),
        ),
        "grow_ba": (lambda: ba(kernels.grow_ba_numba), lambda: ba(kernels.grow_ba_numpy)),
    }

    print(f"{'kernel':<14} {'numba [s]':>11} {'numpy [s]':>11} {'speedup':>8}  agree")
    for name, (nb, py) in cases.items():
        a, b = nb(), py()  # warm-up compile; results must match
        agree = _agree(a, b)
        t_nb = _best(nb, args.repeat)
        t_py = _best(py, max(1, args.repeat // 2))
        print(f"{name:<14} {t_nb:11.5f} {t_py:11.5f} {t_py / t_nb:7.1f}x  {agree}")


if __name__ == "__main__":
    main()
