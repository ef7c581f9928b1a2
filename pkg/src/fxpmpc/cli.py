"""Command-line interface: simulations, precision sweeps and inspection.

Four commands share one configuration format (see :mod:`fxpmpc.config`):

``simulate``
    One closed-loop run; writes the trace CSV and prints a metrics
    summary.  Exits 4 when any step was flagged divergent (the trace is
    still written).
``sweep``
    One closed-loop run per (word width, fraction width, sigma)
    combination from the ``[sweep]`` section, optionally in parallel;
    writes a sorted summary CSV with one metrics row per combination.
``solve``
    A single horizon solve from the configured initial state; prints
    the control sequence, objective, residual and error-meter stats.
``discretize``
    Prints the zero-order-hold discretization of the configured plant.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 divergence
flag (simulate only).  Output files are written atomically: a failed or
interrupted run never leaves a partial file behind.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from fxpmpc import fxp
from fxpmpc.condense import NORMS, condense, build_tracking_form
from fxpmpc.config import ConfigError, RunConfig, load_config, loads_config, serialize
from fxpmpc.simloop import (
    STUDY_INT_BITS,
    SimulationTrace,
    compute_metrics,
    run_closed_loop,
)
from fxpmpc.solver import ALGO_AXPGD, axpgd_solve, mpc_objective, wlm_admm_solve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGED = 4

TRACE_FIXED_COLUMNS = ("clamped", "iters", "residual", "eps_norm", "zeros_in_u")
SWEEP_COLUMNS = (
    "word_width",
    "frac_width",
    "sigma",
    "rms_err",
    "settle_step",
    "sparsity",
    "eps_peak",
    "osc_index",
    "divergent",
)


def _fmt(v) -> str:
    """CSV cell: round-tripping float repr, plain ints unchanged."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_atomic(path: str, text: str) -> None:
    """Write via a sibling temp file and rename so readers never see a
    partial file and failures leave nothing behind."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def trace_csv(trace: SimulationTrace) -> str:
    """Render a trace as CSV text with the pinned column order."""
    n = trace.x.shape[1]
    m = trace.y.shape[1]
    p = trace.u.shape[1]
    header = (
        ["step", "t"]
        + [f"x{i + 1}" for i in range(n)]
        + [f"y{i + 1}" for i in range(m)]
        + [f"u{i + 1}" for i in range(p)]
        + list(TRACE_FIXED_COLUMNS)
    )
    buf = []
    out = csv.writer(_ListWriter(buf), lineterminator="\n")
    out.writerow(header)
    for k in range(trace.steps):
        row = [str(k), _fmt(trace.t[k])]
        row += [_fmt(v) for v in trace.x[k]]
        row += [_fmt(v) for v in trace.y[k]]
        row += [_fmt(v) for v in trace.u[k]]
        row += [
            str(int(trace.clamped[k])),
            str(int(trace.iters[k])),
            _fmt(trace.residual[k]),
            _fmt(trace.eps_norm[k]),
            str(int(trace.zeros_in_u[k])),
        ]
        out.writerow(row)
    return "".join(buf)


class _ListWriter:
    """File-like shim collecting csv output into a list of strings."""

    def __init__(self, sink: list) -> None:
        self.sink = sink

    def write(self, s: str) -> None:
        self.sink.append(s)


def _emit(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        _write_atomic(path, text)


def _summary_lines(cfg: RunConfig, trace: SimulationTrace) -> list[str]:
    met = compute_metrics(trace)
    meta = trace.meta
    if meta["word_width"]:
        arith = f"fxp W={meta['word_width']} F={meta['frac_width']}"
    else:
        arith = "exact"
    return [
        f"run: {trace.steps} steps, {arith}, sigma={meta['sigma']}, "
        f"algorithm={meta['algorithm']}",
        f"rms_err={met.rms_err:.6e} settle_step={met.settle_step} "
        f"sparsity={met.sparsity:.4f}",
        f"eps_peak={met.eps_peak:.6e} osc_index={met.osc_index:.4f} "
        f"divergent={int(met.divergent)}",
    ]


def cmd_simulate(cfg: RunConfig) -> int:
    trace = run_closed_loop(cfg.scenario)
    text = trace_csv(trace)
    stream = sys.stderr if cfg.out is None else sys.stdout
    try:
        _emit(cfg.out, text)
    except OSError as exc:
        print(f"error: cannot write trace: {exc}", file=sys.stderr)
        return EXIT_IO
    if cfg.verbosity >= 2:
        stream.write(serialize(cfg))
    if cfg.verbosity >= 1:
        for line in _summary_lines(cfg, trace):
            print(line, file=stream)
    if bool(trace.divergent.any()):
        print("warning: divergence flagged during the run", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _sweep_combos(cfg: RunConfig) -> list[tuple[int, int, float]]:
    combos = []
    seen = set()
    duplicates = 0
    for w, f in cfg.sweep_formats:
        for s in cfg.sweep_sigmas:
            key = (w, f, float(s))
            if key in seen:
                duplicates += 1
                continue
            seen.add(key)
            combos.append(key)
    if duplicates:
        print(f"warning: {duplicates} duplicate sweep entries ignored", file=sys.stderr)
    combos.sort()
    return combos


def _sweep_one(job: tuple[str, int, int, float]) -> list[str]:
    """Worker: rebuild the scenario from config text and run one combo."""
    text, w, f, sigma = job
    cfg = loads_config(text)
    scn = cfg.scenario
    mpc = replace(scn.mpc, sigma=sigma)
    arithmetic = "exact" if w == 0 else fxp.FxpFormat(w, f)
    solver = replace(scn.solver, arithmetic=arithmetic)
    trace = run_closed_loop(replace(scn, mpc=mpc, solver=solver))
    met = compute_metrics(trace)
    return [
        str(w),
        str(f),
        _fmt(sigma),
        _fmt(met.rms_err),
        str(met.settle_step),
        _fmt(met.sparsity),
        _fmt(met.eps_peak),
        _fmt(met.osc_index),
        str(int(met.divergent)),
    ]


def cmd_sweep(cfg: RunConfig, jobs: int) -> int:
    combos = _sweep_combos(cfg)
    if not combos:
        print("error: sweep requested but the config has no sweep formats", file=sys.stderr)
        return EXIT_CONFIG
    text = serialize(cfg)
    jobs_list = [(text, w, f, s) for (w, f, s) in combos]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_one, jobs_list))
    else:
        rows = [_sweep_one(job) for job in jobs_list]

    buf = []
    out = csv.writer(_ListWriter(buf), lineterminator="\n")
    out.writerow(SWEEP_COLUMNS)
    out.writerows(rows)
    try:
        _emit(cfg.out, "".join(buf))
    except OSError as exc:
        print(f"error: cannot write sweep summary: {exc}", file=sys.stderr)
        return EXIT_IO
    if cfg.verbosity >= 1:
        print(f"sweep: {len(rows)} combinations", file=sys.stderr if cfg.out is None else sys.stdout)
    return EXIT_OK


def cmd_solve(cfg: RunConfig) -> int:
    scn = cfg.scenario
    cond = condense(scn.mpc)
    solve = axpgd_solve if scn.solver.algorithm == ALGO_AXPGD else wlm_admm_solve
    try:
        u, state = solve(scn.mpc, cond, scn.x0, scn.solver)
    except fxp.FxpOverflowError as exc:
        print(f"error: datapath overflow during solve: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    g_lin, c0 = build_tracking_form(cond, scn.x0)
    sigma = scn.mpc.sigma if scn.solver.sigma is None else scn.solver.sigma
    norm_p = scn.mpc.norm_p if scn.solver.norm_p is None else scn.solver.norm_p
    obj = mpc_objective(cond, g_lin, u, sigma, norm_p, c0)

    p = scn.mpc.plant.n_inputs
    print(f"iterations: {state.iters}  converged: {int(state.converged)}")
    print(f"residual: {_fmt(state.residuals[-1] if state.residuals else 0.0)}")
    print(f"objective: {_fmt(obj)}")
    eps_peak = max(state.eps_history) if state.eps_history else 0.0
    eps_inf = max(state.eps_inf_history) if state.eps_inf_history else 0.0
    print(f"eps_norm_peak: {_fmt(eps_peak)}  eps_inf_peak: {_fmt(eps_inf)}")
    print("control sequence (one block per line):")
    for k in range(scn.mpc.n_ctrl):
        block = u[k * p : (k + 1) * p]
        print("  " + " ".join(_fmt(v) for v in block))
    return EXIT_OK


def cmd_discretize(cfg: RunConfig) -> int:
    disc = cfg.scenario.mpc.plant
    print(f"h = {_fmt(disc.h)}")
    print("A_d:")
    for row in disc.a_d:
        print("  " + " ".join(_fmt(v) for v in row))
    print("B_d:")
    for row in disc.b_d:
        print("  " + " ".join(_fmt(v) for v in row))
    return EXIT_OK


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    """CLI flags override file keys one-for-one."""
    scn = cfg.scenario
    mpc = scn.mpc
    solver = scn.solver
    if args.sigma is not None:
        mpc = replace(mpc, sigma=args.sigma)
    if args.norm is not None:
        mpc = replace(mpc, norm_p=args.norm)
    if args.word_width is not None:
        if args.word_width == 0:
            solver = replace(solver, arithmetic="exact")
        else:
            f = args.frac_width
            if f is None:
                f = args.word_width - STUDY_INT_BITS
            solver = replace(solver, arithmetic=fxp.FxpFormat(args.word_width, f))
    elif args.frac_width is not None:
        if solver.is_exact:
            raise ConfigError("--frac-width needs --word-width or a config [fxp] section")
        old = solver.arithmetic
        solver = replace(
            solver, arithmetic=fxp.FxpFormat(old.word_width, args.frac_width)
        )
    if mpc is not scn.mpc or solver is not scn.solver or args.steps is not None:
        scn = replace(
            scn,
            mpc=mpc,
            solver=solver,
            steps=scn.steps if args.steps is None else args.steps,
        )
    return RunConfig(
        scenario=scn,
        out=cfg.out if args.out is None else args.out,
        sweep_formats=cfg.sweep_formats,
        sweep_sigmas=cfg.sweep_sigmas,
        verbosity=cfg.verbosity,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fxpmpc",
        description="Sparse MPC under emulated fixed-point arithmetic.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "run one closed loop and write the trace CSV"),
        ("sweep", "run all sweep combinations and write a summary CSV"),
        ("solve", "solve a single horizon problem from the initial state"),
        ("discretize", "print the discretized plant matrices"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to the config file")
        cmd.add_argument("--out", default=None, help="output path (default: stdout)")
        cmd.add_argument("--word-width", type=int, default=None, metavar="N",
                         help="override the datapath word width; 0 means exact")
        cmd.add_argument("--frac-width", type=int, default=None, metavar="N",
                         help="override the fraction width")
        cmd.add_argument("--sigma", type=float, default=None, metavar="X",
                         help="override the sparsity penalty weight")
        cmd.add_argument("--norm", choices=NORMS, default=None,
                         help="override the sparsity penalty norm")
        cmd.add_argument("--steps", type=int, default=None, metavar="N",
                         help="override the closed-loop length")
        if name == "sweep":
            cmd.add_argument("--jobs", type=int, default=1, metavar="N",
                             help="worker processes for sweep combinations")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "simulate":
        return cmd_simulate(cfg)
    if args.command == "sweep":
        jobs = max(1, int(getattr(args, "jobs", 1)))
        return cmd_sweep(cfg, jobs)
    if args.command == "solve":
        return cmd_solve(cfg)
    return cmd_discretize(cfg)


if __name__ == "__main__":
    sys.exit(main())
