"""Benchmark the numba hot kernels against the pure-numpy fallback.

Run with ``python -m hodgegp.bench``. Times the Legendre table/sum
recurrences and the associated-Legendre tables on sizes representative of
Gram assembly and eigenfield evaluation, plus one end-to-end Gram build.
Results compare the compiled path against the fallback selected by
``HODGEGP_NUMBA=0``.
"""

import time

import numpy as np

from . import _accel
from .gp import gram
from .kernels import HODGE_FULL, KernelSpec, MaternParams
from .manifold import sample_sphere


def _timeit(fn, repeat=5):
    fn()  # warm-up (first numba call compiles)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases():
    rng = np.random.default_rng(0)
    t = rng.uniform(-1.0, 1.0, size=4096)
    w = rng.uniform(0.0, 1.0, size=31)
    ct = rng.uniform(-1.0, 1.0, size=512)
    st = np.sqrt(1.0 - ct ** 2)
    pts = sample_sphere(120, rng)
    spec = KernelSpec(HODGE_FULL, MaternParams(0.5, 0.3, 1.0, 1e-4), lmax=30)
    return [
        ("legendre_tables lmax=30 n=4096", lambda: _accel.legendre_tables(t, 30)),
        ("legendre_sums   lmax=30 n=4096", lambda: _accel.legendre_sums(t, w, w, w)),
        ("alp_tables      lmax=30 n=512", lambda: _accel.alp_tables(ct, st, 30)),
        ("gram 120 pts hodge-full lmax=30", lambda: gram(spec, pts)),
    ]


def main():
    impls = []
    if _accel.HAS_NUMBA:
        impls.append(("numba", True))
    impls.append(("numpy", False))

    results = {}
    for label, enabled in impls:
        _accel.NUMBA_ENABLED = enabled
        for name, fn in _cases():
            results.setdefault(name, {})[label] = _timeit(fn)
    _accel.NUMBA_ENABLED = _accel.HAS_NUMBA and _accel._env_wants_numba()

    width = max(len(n) for n in results)
    header = f"{'case'.ljust(width)}  " + "".join(f"{l:>12}" for l, _ in impls)
    if len(impls) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name, times in results.items():
        line = name.ljust(width) + "  "
        line += "".join(f"{times[l] * 1e3:>10.3f}ms" for l, _ in impls)
        if len(impls) == 2:
            line += f"{times['numpy'] / times['numba']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
