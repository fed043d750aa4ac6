"""Wall-clock comparison of the compiled and pure-numpy kernel variants.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from entroq import kernels
from entroq.circuits import _gate_mats, ansatz_complex_entangled


def _best(fn, repeat):
    fn()  # compile / warm caches
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _hermitian(d, rng):
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return g + g.conj().T


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    rows = []

    for d in (4, 16, 64):
        m = _hermitian(d, rng)
        rows.append((f"jacobi_eigh d={d}",
                     _best(lambda: kernels.jacobi_eigh_numba(m.copy()), args.repeat),
                     _best(lambda: kernels.jacobi_eigh_numpy(m.copy()), args.repeat)))

    for n in (16, 64):
        diag, off = rng.standard_normal(n), rng.standard_normal(n - 1)
        rows.append((f"tridiag_eigh n={n}",
                     _best(lambda: kernels.tridiag_eigh_numba(diag.copy(), off.copy()), args.repeat),
                     _best(lambda: kernels.tridiag_eigh_numpy(diag.copy(), off.copy()), args.repeat)))

    for nq, batch in ((2, 64), (4, 64), (6, 8)):
        c = ansatz_complex_entangled(nq, 2)
        low = c.lowered
        p = rng.uniform(0, 2 * np.pi, (batch, c.n_params))
        mats = _gate_mats(low, p)
        eye = np.broadcast_to(np.eye(c.dim, dtype=np.complex128), (batch, c.dim, c.dim))
        args_ = (mats, low.targets, low.partners, low.ctrls)
        rows.append((f"apply_gates {nq}q batch={batch}",
                     _best(lambda: kernels.apply_gates_numba(eye.copy(), *args_), args.repeat),
                     _best(lambda: kernels.apply_gates_numpy(eye.copy(), *args_), args.repeat)))

    print(f"{'kernel':<28}{'numba [ms]':>12}{'numpy [ms]':>12}{'ratio':>8}")
    for name, a, b in rows:
        print(f"{name:<28}{1e3 * a:>12.3f}{1e3 * b:>12.3f}{b / a:>8.1f}")


if __name__ == "__main__":
    main()
