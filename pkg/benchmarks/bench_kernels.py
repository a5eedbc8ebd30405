"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--quick]

Prints one line per kernel with the best-of-``repeat`` wall time of each
backend, the speedup, and the largest relative difference of their outputs.
"""
from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from nlch import _backend
from nlch.geometry import Grid
from nlch.kernels import FAMILIES, make_mollifier


def cases(quick: bool):
    n1, n2, m = (512, 32, 20_000) if quick else (2048, 64, 200_000)
    rng = np.random.default_rng(0)
    for dim, n, fam in ((1, n1, "bump"), (2, n2, "bump"), (2, n2, "indicator")):
        g = Grid(dim, n)
        mol = make_mollifier(fam, 4.0 * g.h * (4 if dim == 1 else 1), dim)
        args = (g.centers, FAMILIES[fam], mol.epsilon, mol.amplitude, g.cell_volume)
        yield f"assemble_dense d={dim} cells={g.size} {fam}", "assemble_dense", args
    g = Grid(2, n2)
    mol = make_mollifier("bump", 4.0 * g.h, 2)
    K, _ = _backend.python_kernels.assemble_dense(g.centers, 1, mol.epsilon, mol.amplitude, g.cell_volume)
    yield f"pair_energy_sum cells={g.size}", "pair_energy_sum", (K, rng.standard_normal(g.size))
    r = rng.standard_normal(m) * 3.0
    yield f"resolvent_poly m={m}", "resolvent_poly", (r, 1e-4)
    yield f"resolvent_log m={m}", "resolvent_log", (r, 1e-4, 0.5)


def max_diff(a, b) -> float:
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return max(float(np.max(np.abs(np.asarray(x) - np.asarray(y)) / np.maximum(np.abs(np.asarray(y)), 1.0)))
               for x, y in zip(a, b))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args(argv)
    if _backend.compiled_kernels is None:
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1
    print(f"{'kernel':44s} {'cython [s]':>11s} {'python [s]':>11s} {'speedup':>8s} {'rel diff':>10s}")
    for label, name, fargs in cases(args.quick):
        fc = getattr(_backend.compiled_kernels, name)
        fp = getattr(_backend.python_kernels, name)
        tc = min(timeit.repeat(lambda: fc(*fargs), number=1, repeat=args.repeat))
        tp = min(timeit.repeat(lambda: fp(*fargs), number=1, repeat=args.repeat))
        print(f"{label:44s} {tc:11.4f} {tp:11.4f} {tp / tc:8.1f} {max_diff(fc(*fargs), fp(*fargs)):10.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
