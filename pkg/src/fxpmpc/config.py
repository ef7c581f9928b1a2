"""Run configuration files: sectioned key-value text mapped to scenarios.

A config file is INI-style with up to six sections, all optional; a
missing key takes the documented default, which mirrors the frozen
study scenario, so an empty file is a valid configuration.

``[plant]``
    ``preset``   only ``satellite`` (the default)
    ``h``        sampling period override, seconds
    ``a b c d``  explicit matrices (rows split by ``;``, entries by
                 whitespace); all four must be given together and
                 replace the preset
``[mpc]``
    ``n_pred`` ``n_ctrl``  horizons (default 10, n_ctrl defaults to n_pred)
    ``sigma``              sparsity penalty weight (default 1.5)
    ``norm``               ``l1`` or ``l0`` (default l1)
    ``q_diag``             output weight diagonal, scalar or m-vector
    ``u_min`` ``u_max``    control box, scalar or p-vector (default +-2)
    ``y_min`` ``y_max``    output box, scalar or m-vector (default +-inf)
    ``r``                  output reference, scalar or m-vector (default 0)
``[solver]``
    ``algorithm``          ``axpgd`` or ``wlm-admm`` (default axpgd)
    ``lambda_u`` ``lambda_z``  coupling weights (default 5000, lambda_z
                               defaults to lambda_u)
    ``max_iters``          iteration cap (default 400)
    ``tol``                primal stopping tolerance (default 1e-9)
    ``scope``              ``all-iterates`` or ``gradient-only``
``[fxp]``
    ``word_width``         total bits; absent means exact arithmetic
    ``frac_width``         fractional bits (default word_width - 14)
    ``rounding``           ``nearest`` or ``truncate``
    ``overflow``           ``saturate`` or ``error``
``[run]``
    ``steps``              closed-loop length (default 360)
    ``seed``               recorded in trace metadata (default 20240817)
    ``x0``                 initial state, n-vector
    ``out``                output path for the trace CSV
    ``verbosity``          0 (quiet), 1 (summary, default) or 2 (verbose)
``[sweep]``
    ``word_widths``        widths using the default fraction split; 0
                           means an exact-arithmetic row
    ``formats``            explicit ``W:F`` pairs, appended after
                           ``word_widths``
    ``sigmas``             penalty values (default: the mpc sigma)

Unknown sections or keys are rejected with the offending line number so
stale or misspelled keys never pass silently.  ``serialize`` emits every
key explicitly with round-tripping float literals; loading its output
reproduces an equal configuration.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass

import numpy as np

from fxpmpc import fxp
from fxpmpc.condense import MpcProblem, NORMS
from fxpmpc.plant import ContinuousPlant, default_satellite_plant, zoh_discretize
from fxpmpc.simloop import (
    _STUDY_LAMBDA_U,
    _STUDY_SEED,
    _STUDY_SIGMA,
    _STUDY_STEPS,
    _STUDY_X0,
    STUDY_INT_BITS,
    Scenario,
    default_scenario,
    study_format,
)
from fxpmpc.solver import ALGORITHMS, SCOPES, SCOPE_ALL, SolverConfig


class ConfigError(Exception):
    """A configuration file could not be parsed or validated."""


_SCHEMA = {
    "plant": ("preset", "h", "a", "b", "c", "d"),
    "mpc": (
        "n_pred",
        "n_ctrl",
        "sigma",
        "norm",
        "q_diag",
        "u_min",
        "u_max",
        "y_min",
        "y_max",
        "r",
    ),
    "solver": ("algorithm", "lambda_u", "lambda_z", "max_iters", "tol", "scope"),
    "fxp": ("word_width", "frac_width", "rounding", "overflow"),
    "run": ("steps", "seed", "x0", "out", "verbosity"),
    "sweep": ("word_widths", "formats", "sigmas"),
}


@dataclass(frozen=True, eq=False)
class RunConfig:
    """A fully resolved scenario plus output and sweep plumbing."""

    scenario: Scenario
    out: str | None = None
    sweep_formats: tuple[tuple[int, int], ...] = ()
    sweep_sigmas: tuple[float, ...] = ()
    verbosity: int = 1

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RunConfig):
            return NotImplemented
        return (
            _scenario_equal(self.scenario, other.scenario)
            and self.out == other.out
            and self.sweep_formats == other.sweep_formats
            and self.sweep_sigmas == other.sweep_sigmas
            and self.verbosity == other.verbosity
        )


def _scenario_equal(s1: Scenario, s2: Scenario) -> bool:
    p1, p2 = s1.plant, s2.plant
    m1, m2 = s1.mpc, s2.mpc
    c1, c2 = s1.solver, s2.solver
    arrays = (
        (p1.a, p2.a),
        (p1.b, p2.b),
        (p1.c, p2.c),
        (p1.d, p2.d),
        (m1.q, m2.q),
        (m1.u_min, m2.u_min),
        (m1.u_max, m2.u_max),
        (m1.y_min, m2.y_min),
        (m1.y_max, m2.y_max),
        (m1.r, m2.r),
        (s1.x0, s2.x0),
    )
    if not all(np.array_equal(a, b) for a, b in arrays):
        return False
    return (
        p1.h == p2.h
        and (m1.n_pred, m1.n_ctrl, m1.sigma, m1.norm_p)
        == (m2.n_pred, m2.n_ctrl, m2.sigma, m2.norm_p)
        and (c1.lambda_u, c1.lambda_z, c1.max_iters, c1.tol_primal)
        == (c2.lambda_u, c2.lambda_z, c2.max_iters, c2.tol_primal)
        and c1.arithmetic == c2.arithmetic
        and (c1.quantize_scope, c1.algorithm) == (c2.quantize_scope, c2.algorithm)
        and (s1.steps, s1.seed) == (s2.steps, s2.seed)
    )


def _scan_lines(text: str) -> dict[tuple[str, str], int]:
    """Map (section, key) to the 1-based line where the key appears."""
    where: dict[tuple[str, str], int] = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip().lower()
            where[(section, "")] = lineno
            continue
        if line[:1] in " \t":
            continue  # continuation of the previous value
        for sep in ("=", ":"):
            if sep in stripped:
                key = stripped.split(sep, 1)[0].strip().lower()
                where.setdefault((section, key), lineno)
                break
    return where


class _Section:
    """One parsed section with typed accessors and use tracking."""

    def __init__(self, path: str, name: str, items: dict[str, str], lines: dict) -> None:
        self.path = path
        self.name = name
        self.items = items
        self.lines = lines

    def _fail(self, key: str, message: str) -> ConfigError:
        lineno = self.lines.get((self.name, key))
        at = f"{self.path}:{lineno}" if lineno else self.path
        return ConfigError(f"{at}: [{self.name}] {key}: {message}")

    def raw(self, key: str) -> str | None:
        return self.items.get(key)

    def text(self, key: str, default: str, choices: tuple[str, ...] | None = None) -> str:
        val = self.items.get(key, default)
        if choices is not None and val not in choices:
            raise self._fail(key, f"must be one of {', '.join(choices)}, got {val!r}")
        return val

    def integer(self, key: str, default: int) -> int:
        val = self.items.get(key)
        if val is None:
            return default
        try:
            return int(val)
        except ValueError:
            raise self._fail(key, f"expected an integer, got {val!r}") from None

    def number(self, key: str, default: float) -> float:
        val = self.items.get(key)
        if val is None:
            return default
        try:
            return float(val)
        except ValueError:
            raise self._fail(key, f"expected a number, got {val!r}") from None

    def vector(self, key: str, n: int, default: np.ndarray) -> np.ndarray:
        """Parse a whitespace-separated vector; one entry broadcasts."""
        val = self.items.get(key)
        if val is None:
            return default
        try:
            entries = np.array([float(tok) for tok in val.replace(",", " ").split()])
        except ValueError:
            raise self._fail(key, f"expected numbers, got {val!r}") from None
        if entries.size == 1:
            return np.full(n, entries[0])
        if entries.size != n:
            raise self._fail(key, f"expected {n} entries, got {entries.size}")
        return entries

    def matrix(self, key: str) -> np.ndarray:
        val = self.items.get(key, "")
        try:
            rows = [
                [float(tok) for tok in row.replace(",", " ").split()]
                for row in val.split(";")
            ]
            arr = np.array(rows, dtype=np.float64)
        except ValueError:
            raise self._fail(key, "expected rows of numbers separated by ';'") from None
        if arr.ndim != 2:
            raise self._fail(key, "rows have inconsistent lengths")
        return arr


def _parse_sections(path: str, text: str) -> dict[str, _Section]:
    parser = configparser.ConfigParser(
        interpolation=None, delimiters=("=", ":"), strict=True
    )
    parser.optionxform = str.lower  # type: ignore[assignment]
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    lines = _scan_lines(text)
    sections: dict[str, _Section] = {}
    for name in parser.sections():
        if name not in _SCHEMA:
            lineno = lines.get((name, ""))
            at = f"{path}:{lineno}" if lineno else path
            raise ConfigError(
                f"{at}: unknown section [{name}]; expected one of "
                + ", ".join(sorted(_SCHEMA))
            )
        for key in parser[name]:
            if key not in _SCHEMA[name]:
                lineno = lines.get((name, key))
                at = f"{path}:{lineno}" if lineno else path
                raise ConfigError(
                    f"{at}: unknown key {key!r} in [{name}]; expected one of "
                    + ", ".join(_SCHEMA[name])
                )
        sections[name] = _Section(path, name, dict(parser[name]), lines)
    for name in _SCHEMA:
        sections.setdefault(name, _Section(path, name, {}, lines))
    return sections


def _build_plant(sec: _Section) -> ContinuousPlant:
    given = [k for k in ("a", "b", "c", "d") if sec.raw(k) is not None]
    preset = sec.text("preset", "satellite", choices=("satellite",))
    base = default_satellite_plant()
    h = sec.number("h", base.h)
    if not given:
        if h == base.h:
            return base
        return ContinuousPlant(a=base.a, b=base.b, c=base.c, d=base.d, h=h)
    if len(given) != 4:
        missing = [k for k in ("a", "b", "c", "d") if k not in given]
        raise sec._fail(given[0], f"matrices must be given together; missing {missing}")
    try:
        return ContinuousPlant(
            a=sec.matrix("a"), b=sec.matrix("b"), c=sec.matrix("c"), d=sec.matrix("d"), h=h
        )
    except ValueError as exc:
        raise sec._fail("a", str(exc)) from None


def _build_mpc(sec: _Section, plant: ContinuousPlant) -> MpcProblem:
    disc = zoh_discretize(plant)
    n, m, p = disc.n_states, disc.n_outputs, disc.n_inputs
    defaults = default_scenario().mpc
    n_pred = sec.integer("n_pred", 10)
    n_ctrl = sec.integer("n_ctrl", n_pred)
    if m == defaults.q.shape[0]:
        q_diag_default = np.diag(defaults.q)
    else:
        q_diag_default = np.ones(m)
    q_diag = sec.vector("q_diag", m, q_diag_default)
    try:
        return MpcProblem(
            plant=disc,
            n_pred=n_pred,
            n_ctrl=n_ctrl,
            q=np.diag(q_diag),
            sigma=sec.number("sigma", _STUDY_SIGMA),
            norm_p=sec.text("norm", "l1", choices=NORMS),
            u_min=sec.vector("u_min", p, -2.0 * np.ones(p)),
            u_max=sec.vector("u_max", p, 2.0 * np.ones(p)),
            y_min=sec.vector("y_min", m, np.full(m, -np.inf)),
            y_max=sec.vector("y_max", m, np.full(m, np.inf)),
            r=sec.vector("r", m, np.zeros(m)),
        )
    except (ValueError, TypeError) as exc:
        # cite the horizon key when the breach names it, else the section
        key = "n_ctrl" if "n_ctrl" in str(exc) else "n_pred"
        raise sec._fail(key, str(exc)) from None


def _build_arithmetic(sec: _Section) -> str | fxp.FxpFormat:
    if sec.raw("word_width") is None:
        if sec.raw("frac_width") is not None:
            raise sec._fail("frac_width", "frac_width needs word_width")
        return "exact"
    w = sec.integer("word_width", 0)
    f = sec.integer("frac_width", w - STUDY_INT_BITS)
    try:
        return fxp.FxpFormat(
            w,
            f,
            rounding=sec.text("rounding", fxp.ROUND_NEAREST, choices=fxp.ROUNDING_MODES),
            overflow=sec.text(
                "overflow", fxp.OVERFLOW_SATURATE, choices=fxp.OVERFLOW_MODES
            ),
        )
    except ValueError as exc:
        raise sec._fail("word_width", str(exc)) from None


def _build_solver(sec: _Section, arithmetic: str | fxp.FxpFormat) -> SolverConfig:
    lam_u = sec.number("lambda_u", _STUDY_LAMBDA_U)
    try:
        return SolverConfig(
            lambda_u=lam_u,
            lambda_z=sec.number("lambda_z", lam_u),
            max_iters=sec.integer("max_iters", 400),
            tol_primal=sec.number("tol", 1e-9),
            arithmetic=arithmetic,
            quantize_scope=sec.text("scope", SCOPE_ALL, choices=SCOPES),
            algorithm=sec.text("algorithm", "axpgd", choices=ALGORITHMS),
        )
    except ValueError as exc:
        raise sec._fail("lambda_u", str(exc)) from None


def _build_sweep(
    sec: _Section, mpc_sigma: float
) -> tuple[tuple[tuple[int, int], ...], tuple[float, ...]]:
    formats: list[tuple[int, int]] = []
    widths_raw = sec.raw("word_widths")
    if widths_raw is not None:
        for tok in widths_raw.replace(",", " ").split():
            try:
                w = int(tok)
            except ValueError:
                raise sec._fail("word_widths", f"expected integers, got {tok!r}") from None
            formats.append((0, 0) if w == 0 else (w, w - STUDY_INT_BITS))
    pairs_raw = sec.raw("formats")
    if pairs_raw is not None:
        for tok in pairs_raw.replace(",", " ").split():
            try:
                w_txt, f_txt = tok.split(":")
                formats.append((int(w_txt), int(f_txt)))
            except ValueError:
                raise sec._fail("formats", f"expected W:F pairs, got {tok!r}") from None
    for w, f in formats:
        if (w, f) != (0, 0):
            try:
                fxp.FxpFormat(w, f)
            except ValueError as exc:
                raise sec._fail("formats" if pairs_raw else "word_widths", str(exc)) from None

    sigmas_raw = sec.raw("sigmas")
    if sigmas_raw is None:
        sigmas = (float(mpc_sigma),)
    else:
        try:
            sigmas = tuple(float(tok) for tok in sigmas_raw.replace(",", " ").split())
        except ValueError:
            raise sec._fail("sigmas", f"expected numbers, got {sigmas_raw!r}") from None
        for s in sigmas:
            if not (np.isfinite(s) and s >= 0):
                raise sec._fail("sigmas", f"sigma must be >= 0, got {s}")
        if not sigmas:
            raise sec._fail("sigmas", "expected at least one value")
    return tuple(formats), sigmas


def loads_config(text: str, path: str = "<config>") -> RunConfig:
    """Parse configuration text; see :func:`load_config`."""
    sections = _parse_sections(path, text)
    plant = _build_plant(sections["plant"])
    mpc = _build_mpc(sections["mpc"], plant)
    arithmetic = _build_arithmetic(sections["fxp"])
    solver = _build_solver(sections["solver"], arithmetic)

    run = sections["run"]
    n = plant.n_states
    x0_default = np.array(_STUDY_X0) if n == len(_STUDY_X0) else np.zeros(n)
    try:
        scenario = Scenario(
            plant=plant,
            mpc=mpc,
            solver=solver,
            x0=run.vector("x0", n, x0_default),
            steps=run.integer("steps", _STUDY_STEPS),
            seed=run.integer("seed", _STUDY_SEED),
        )
    except (ValueError, TypeError) as exc:
        raise run._fail("steps", str(exc)) from None

    verbosity = run.integer("verbosity", 1)
    if verbosity not in (0, 1, 2):
        raise run._fail("verbosity", f"must be 0, 1 or 2, got {verbosity}")
    sweep_formats, sweep_sigmas = _build_sweep(sections["sweep"], mpc.sigma)
    return RunConfig(
        scenario=scenario,
        out=run.raw("out"),
        sweep_formats=sweep_formats,
        sweep_sigmas=sweep_sigmas,
        verbosity=verbosity,
    )


def load_config(path: str | os.PathLike) -> RunConfig:
    """Load and validate a configuration file.

    Every key is optional; defaults reproduce the frozen study scenario.
    Unknown sections or keys and invariant violations raise
    :class:`ConfigError` with the offending file line when available.
    """
    path = os.fspath(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return loads_config(text, path)


def _fmt_float(x: float) -> str:
    return repr(float(x))


def _fmt_vector(arr: np.ndarray) -> str:
    return " ".join(_fmt_float(v) for v in np.asarray(arr).ravel())


def _fmt_matrix(arr: np.ndarray) -> str:
    return " ; ".join(" ".join(_fmt_float(v) for v in row) for row in np.asarray(arr))


def serialize(cfg: RunConfig) -> str:
    """Render a configuration as text that reloads to an equal RunConfig.

    All keys are written explicitly (no reliance on defaults) with float
    literals that round-trip exactly.
    """
    scn = cfg.scenario
    plant, mpc, sol = scn.plant, scn.mpc, scn.solver
    out = io.StringIO()
    w = out.write
    w("[plant]\n")
    w(f"a = {_fmt_matrix(plant.a)}\n")
    w(f"b = {_fmt_matrix(plant.b)}\n")
    w(f"c = {_fmt_matrix(plant.c)}\n")
    w(f"d = {_fmt_matrix(plant.d)}\n")
    w(f"h = {_fmt_float(plant.h)}\n")
    w("\n[mpc]\n")
    w(f"n_pred = {mpc.n_pred}\n")
    w(f"n_ctrl = {mpc.n_ctrl}\n")
    w(f"sigma = {_fmt_float(mpc.sigma)}\n")
    w(f"norm = {mpc.norm_p}\n")
    w(f"q_diag = {_fmt_vector(np.diag(mpc.q))}\n")
    w(f"u_min = {_fmt_vector(mpc.u_min)}\n")
    w(f"u_max = {_fmt_vector(mpc.u_max)}\n")
    w(f"y_min = {_fmt_vector(mpc.y_min)}\n")
    w(f"y_max = {_fmt_vector(mpc.y_max)}\n")
    w(f"r = {_fmt_vector(mpc.r)}\n")
    w("\n[solver]\n")
    w(f"algorithm = {sol.algorithm}\n")
    w(f"lambda_u = {_fmt_float(sol.lambda_u)}\n")
    w(f"lambda_z = {_fmt_float(sol.lambda_z)}\n")
    w(f"max_iters = {sol.max_iters}\n")
    w(f"tol = {_fmt_float(sol.tol_primal)}\n")
    w(f"scope = {sol.quantize_scope}\n")
    if not sol.is_exact:
        fmt = sol.arithmetic
        w("\n[fxp]\n")
        w(f"word_width = {fmt.word_width}\n")
        w(f"frac_width = {fmt.frac_width}\n")
        w(f"rounding = {fmt.rounding}\n")
        w(f"overflow = {fmt.overflow}\n")
    w("\n[run]\n")
    w(f"steps = {scn.steps}\n")
    w(f"seed = {scn.seed}\n")
    w(f"x0 = {_fmt_vector(scn.x0)}\n")
    if cfg.out is not None:
        w(f"out = {cfg.out}\n")
    w(f"verbosity = {cfg.verbosity}\n")
    if cfg.sweep_formats or cfg.sweep_sigmas:
        w("\n[sweep]\n")
        if cfg.sweep_formats:
            pairs = " ".join(
                "0:0" if (wd, fr) == (0, 0) else f"{wd}:{fr}"
                for wd, fr in cfg.sweep_formats
            )
            w(f"formats = {pairs}\n")
        if cfg.sweep_sigmas:
            w(f"sigmas = {' '.join(_fmt_float(s) for s in cfg.sweep_sigmas)}\n")
    return out.getvalue()
