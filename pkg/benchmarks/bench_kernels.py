"""Timing comparison of the compiled and pure-Python fixed-point kernels.

The two backends are bit-identical (tests/test_kernels_parity.py); this
script measures what the compiled extension buys on the hot shapes of
the study: the horizon-sized multiply-accumulate and its supporting
elementwise kernels.  Optionally times a short closed-loop run under
each backend in a subprocess, since the backend is chosen at import.

Usage:
    python benchmarks/bench_kernels.py [--trials N] [--dim N] [--loop]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from fxpmpc.fxp import _backend


def best_of(fn, trials):
    best = float("inf")
    for _ in range(trials):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_backends(dim: int, trials: int) -> list[tuple[str, float, float]]:
    rng = np.random.default_rng(7)
    w, f = 28, 14
    scale = 1 << f
    m = (rng.uniform(-200, 200, size=(dim, dim)) * scale).astype(np.int64)
    v = (rng.uniform(-2, 2, size=dim) * scale).astype(np.int64)
    bias = (rng.uniform(-20, 20, size=dim) * scale).astype(np.int64)
    doubles = rng.uniform(-1000, 1000, size=dim * dim)

    try:
        compiled = _backend.get_backend("compiled")
    except ImportError:
        print("compiled backend not built; nothing to compare", file=sys.stderr)
        raise SystemExit(1)
    pure = _backend.get_backend("python")

    cases = [
        ("quantize %d doubles" % doubles.size,
         lambda k: k.quantize_f64(doubles, f, w, True, True)),
        ("matvec %dx%d" % (dim, dim),
         lambda k: k.matvec_i64(m, v, bias, f, w, True, True)),
        ("addsub len %d" % dim,
         lambda k: k.addsub_i64(v, bias, 1, w, True)),
        ("mul len %d" % dim,
         lambda k: k.mul_i64(v, bias, f, w, True, True)),
    ]
    rows = []
    for name, call in cases:
        t_c = best_of(lambda: call(compiled), trials)
        t_p = best_of(lambda: call(pure), max(3, trials // 10))
        rows.append((name, t_c, t_p))
    return rows


def bench_loop(steps: int) -> None:
    code = (
        "import time; from fxpmpc.simloop import default_scenario, run_closed_loop; "
        f"scn = default_scenario(word_width=28, steps={steps}); "
        "t0 = time.perf_counter(); run_closed_loop(scn); "
        "print(time.perf_counter() - t0)"
    )
    print(f"\nclosed loop, {steps} steps, word width 28:")
    for label, extra_env in (("compiled", {}), ("python", {"FXPMPC_PURE_PYTHON": "1"})):
        env = dict(os.environ, **extra_env)
        out = subprocess.run(
            [sys.executable, "-c", code], env=env, capture_output=True, text=True
        )
        if out.returncode != 0:
            print(f"  {label:>8}: failed\n{out.stderr}", file=sys.stderr)
            continue
        print(f"  {label:>8}: {float(out.stdout):8.3f} s")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trials", type=int, default=50, help="timing repetitions")
    parser.add_argument("--dim", type=int, default=40, help="matvec dimension")
    parser.add_argument("--loop", action="store_true",
                        help="also time a short closed-loop run per backend")
    parser.add_argument("--loop-steps", type=int, default=10)
    args = parser.parse_args()

    print(f"active backend: {_backend.BACKEND}")
    print(f"{'kernel':<24} {'compiled':>12} {'python':>12} {'speedup':>9}")
    for name, t_c, t_p in bench_backends(args.dim, args.trials):
        print(f"{name:<24} {t_c * 1e6:>10.1f}us {t_p * 1e6:>10.1f}us {t_p / t_c:>8.1f}x")
    if args.loop:
        bench_loop(args.loop_steps)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
