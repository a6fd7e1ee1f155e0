#!/usr/bin/env python3
"""Compare the compiled quadratic kernels against the numpy fallback.

The package picks a kernel backend at import time (TNN_BACKEND=auto|ext|py,
default auto: compiled extension when importable, numpy otherwise). This
script loads both explicitly, checks they agree on shared inputs, then
reports median times and the ext-over-py speedup for each quadratic kernel:

  naive_matvec          full Toeplitz mixing, the equivalence oracle
  causal_naive_matvec   bit-stable causal inference path
  coeff_grad            coefficient-gradient accumulation in backprop

The fft mixing route is timed alongside as context; it is the production
path for long sequences, while the quadratic kernels dominate small-n
inference and every gradient step.

Usage:
  python3 benchmarks/compare_backends.py
  python3 benchmarks/compare_backends.py --sizes 128,512,2048 --d 32 --csv out.csv
"""

import argparse
import csv
import statistics
import sys
import time

import numpy as np

from tnn._backend import get_backend
from tnn.toeplitz import RelPosCoefficients, fft_matvec

OPS = ("naive_matvec", "causal_naive_matvec", "coeff_grad")
VERIFY_TOL = 1e-12


def median_seconds(fn, trials: int, target: float = 0.02) -> float:
    fn()
    start = time.perf_counter()
    fn()
    once = time.perf_counter() - start
    inner = max(1, min(200, int(target / max(once, 1e-9))))
    samples = []
    for _ in range(trials):
        start = time.perf_counter()
        for _ in range(inner):
            fn()
        samples.append((time.perf_counter() - start) / inner)
    return statistics.median(samples)


def agreement(op: str, py, ext, values, x) -> float:
    """Max deviation between backends on one shared input, scaled by the
    reference magnitude. Raises if it exceeds VERIFY_TOL."""
    if op == "coeff_grad":
        grad_y = x[::-1].copy()
        a = np.zeros_like(values)
        b = np.zeros_like(values)
        py.coeff_grad(grad_y, x, a)
        ext.coeff_grad(grad_y, x, b)
    else:
        a = np.empty_like(x)
        b = np.empty_like(x)
        getattr(py, op)(values, x, a)
        getattr(ext, op)(values, x, b)
    scale = max(float(np.abs(a).max(initial=0.0)), 1e-300)
    err = float(np.abs(a - b).max(initial=0.0)) / scale
    if err > VERIFY_TOL:
        raise SystemExit(f"backends disagree on {op}: rel err {err:.3e}")
    return err


def run(sizes, d: int, trials: int, seed: int):
    py = get_backend("py")
    try:
        ext = get_backend("ext")
    except ImportError:
        raise SystemExit(
            "compiled extension not importable; build it first "
            "(pip install -e . --no-build-isolation)"
        )
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        values = rng.standard_normal((2 * n - 1, d))
        x = rng.standard_normal((n, d))
        for op in OPS:
            err = agreement(op, py, ext, values, x)
            if op == "coeff_grad":
                grad_y = x[::-1].copy()
                out = np.zeros_like(values)
                t_py = median_seconds(lambda: py.coeff_grad(grad_y, x, out), trials)
                t_ext = median_seconds(lambda: ext.coeff_grad(grad_y, x, out), trials)
            else:
                out = np.empty_like(x)
                fn_py = getattr(py, op)
                fn_ext = getattr(ext, op)
                t_py = median_seconds(lambda: fn_py(values, x, out), trials)
                t_ext = median_seconds(lambda: fn_ext(values, x, out), trials)
            rows.append(
                {
                    "op": op,
                    "n": n,
                    "d": d,
                    "py_seconds": t_py,
                    "ext_seconds": t_ext,
                    "speedup": t_py / t_ext,
                    "max_rel_dev": err,
                }
            )
        coeffs = RelPosCoefficients(values)
        t_fft = median_seconds(lambda: fft_matvec(coeffs, x), trials)
        rows.append(
            {
                "op": "fft_matvec",
                "n": n,
                "d": d,
                "py_seconds": float("nan"),
                "ext_seconds": t_fft,
                "speedup": float("nan"),
                "max_rel_dev": 0.0,
            }
        )
    return rows


def print_table(rows) -> None:
    header = f"{'op':<22}{'n':>7}{'d':>5}{'py':>12}{'ext':>12}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for r in rows:
        py_s = "-" if np.isnan(r["py_seconds"]) else f"{r['py_seconds'] * 1e3:.3f}ms"
        sp = "-" if np.isnan(r["speedup"]) else f"{r['speedup']:.1f}x"
        print(
            f"{r['op']:<22}{r['n']:>7}{r['d']:>5}{py_s:>12}"
            f"{r['ext_seconds'] * 1e3:>10.3f}ms{sp:>9}"
        )


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="64,128,256,512,1024")
    ap.add_argument("--d", type=int, default=32)
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", default="", help="also write rows to this CSV file")
    args = ap.parse_args(argv)
    sizes = [int(s) for s in args.sizes.split(",") if s]
    if not sizes or min(sizes) < 2:
        ap.error("--sizes must be a comma list of integers >= 2")
    rows = run(sizes, args.d, args.trials, args.seed)
    print_table(rows)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
        print(f"wrote {len(rows)} rows to {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
