"""Compare the compiled and numpy Bohr-pair assembly kernels.

    python3 benchmarks/bench_bohr.py --n 2 3 4 --repeat 3

Both backends are timed on the same eigenbasis jump operators. Peak
traced allocation is reported too: the compiled path evaluates each pair
weight in place and skips the D^4 temporaries of the numpy path, which is
where it wins once the weight evaluations dominate the runtime.
"""
import argparse
import time
import tracemalloc

import numpy as np

from gibbslab import _kernels
from gibbslab.chain import make_model, single_site_paulis


def _inputs(n: int, seed: int):
    H = make_model("random", n, seed=seed)
    E, U = np.linalg.eigh(H.matrix)
    jumps = [U.conj().T @ P @ U for _, _, P in single_site_paulis(n, 1)]
    return E, np.stack(jumps)


def _best(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _peak_mib(fn) -> float:
    tracemalloc.start()
    fn()
    peak = tracemalloc.get_traced_memory()[1]
    tracemalloc.stop()
    return peak / 2**20


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, nargs="+", default=[2, 3, 4])
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--weight", choices=sorted(_kernels.KINDS), default="metropolis")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    sigma = 1.0 / args.beta
    print(f"compiled backend available: {_kernels.BACKEND == 'cython'}")
    print(f"{'n':>3} {'jumps':>6} {'numpy [s]':>11} {'cython [s]':>11} {'speedup':>8} "
          f"{'numpy MiB':>10} {'cython MiB':>11} {'max diff':>10}")
    for n in args.n:
        E, A = _inputs(n, args.seed)
        run_py = lambda: _kernels.assemble(E, A, args.beta, sigma, args.weight, backend="python")  # noqa: E731
        t_py = _best(run_py, args.repeat)
        if _kernels.BACKEND == "cython":
            run_cy = lambda: _kernels.assemble(E, A, args.beta, sigma, args.weight, backend="cython")  # noqa: E731
            t_cy = _best(run_cy, args.repeat)
            diff = max(np.abs(a - b).max() for a, b in zip(run_py(), run_cy()))
            m_py, m_cy = _peak_mib(run_py), _peak_mib(run_cy)
            print(f"{n:>3} {len(A):>6} {t_py:>11.4f} {t_cy:>11.4f} {t_py / t_cy:>8.2f} "
                  f"{m_py:>10.1f} {m_cy:>11.1f} {diff:>10.2e}")
        else:
            print(f"{n:>3} {len(A):>6} {t_py:>11.4f} {'n/a':>11} {'n/a':>8} {_peak_mib(run_py):>10.1f} "
                  f"{'n/a':>11} {'n/a':>10}")


if __name__ == "__main__":
    main()
