"""Compare the compiled and pure-Python Jacobi kernels (LAPACK shown for scale).

    python benchmarks/bench_jacobi.py --sizes 50 100 200 --repeat 3
"""

import argparse
import time

import numpy as np

from metarep.linalg import available_backends, sym_eig, thin_svd


def _time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 100, 200])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    header = f"{'op':5s} {'d':>5s} " + " ".join(f"{b + ' s':>12s}" for b in backends) + f" {'lapack s':>10s} {'max err':>9s}"
    print(header)
    rng = np.random.default_rng(args.seed)
    for d in args.sizes:
        g = rng.standard_normal((d, d))
        a = (g + g.T) / 2
        ref = np.linalg.eigvalsh(a)[::-1]
        times, err = [], 0.0
        for b in backends:
            t, res = _time(lambda: sym_eig(a, backend=b), args.repeat)
            times.append(t)
            err = max(err, float(np.max(np.abs(res.eigenvalues - ref))))
        t_ref, _ = _time(lambda: np.linalg.eigh(a), args.repeat)
        print(f"{'eig':5s} {d:5d} " + " ".join(f"{t:12.4f}" for t in times) + f" {t_ref:10.4f} {err:9.1e}")

        m = rng.standard_normal((d, d // 2))
        sref = np.linalg.svd(m, compute_uv=False)
        times, err = [], 0.0
        for b in backends:
            t, (_, s, _) = _time(lambda: thin_svd(m, backend=b), args.repeat)
            times.append(t)
            err = max(err, float(np.max(np.abs(s - sref))))
        t_ref, _ = _time(lambda: np.linalg.svd(m, full_matrices=False), args.repeat)
        print(f"{'svd':5s} {d:5d} " + " ".join(f"{t:12.4f}" for t in times) + f" {t_ref:10.4f} {err:9.1e}")


if __name__ == "__main__":
    main()
