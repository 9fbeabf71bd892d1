"""Command-line front end.

Every subcommand reads flags (optionally seeded from a JSON config file, with
explicit flags taking precedence), runs one computation and writes its data
files plus ``manifest.json`` into the output directory.

Exit codes: 0 success, 1 computation error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .phase_model import (AsymptoticSeries, ModelParams, PARTITION_HEADER, Regularized,
                          bifurcation_delta, classify_region, find_roots, sweep_partition)
from .runio import RunWriter, fmt_float

DEFAULT_OUT = "autores_out"
# lets values such as "-1.5:1.5:0.01" or "-2e-3" through as arguments, not options
_NEGATIVE_VALUE = re.compile(r"^-(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?(:\S*)?$")


class ConfigError(ValueError):
    """Bad flag or config-file value; reported with exit status 2."""


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


# ---------------------------------------------------------------------------
# flag groups
# ---------------------------------------------------------------------------


def _range_spec(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}")
    lo, hi, step = (float(x) for x in parts)
    if not (step > 0 and hi > lo):
        raise argparse.ArgumentTypeError("need stop > start and step > 0")
    return lo, hi, step


def _grid(spec: tuple[float, float, float]) -> np.ndarray:
    lo, hi, step = spec
    n = int(round((hi - lo) / step)) + 1
    return np.linspace(lo, hi, n)


def _add_model(p, mu0=0.5, nu=0.0, shift=None, mu0_help=None):
    g = p.add_argument_group("model")
    g.add_argument("--lambda", dest="lam", type=float, default=1.0, help="sweep rate lambda > 0")
    g.add_argument("--nu", type=float, default=nu, help="pump phase nu in [0, pi)")
    g.add_argument("--mu0", type=float, default=mu0,
                   help=mu0_help or "pump strength; delta = mu0 sqrt(lambda)")
    g.add_argument("--mu-shift", type=float, default=shift,
                   help="use mu = mu0 (shift + tau)**-1/2 instead of mu0 tau**-1/2")


def _add_root(p, branch=1):
    g = p.add_argument_group("root")
    g.add_argument("--root", type=int, default=0,
                   help="index into the sigma-sorted root list printed by `roots`")
    g.add_argument("--branch", type=int, choices=(1, -1), default=branch,
                   help="sign of psi1 for double roots (ignored otherwise)")
    g.add_argument("--orders", type=int, default=6, help="correction orders of the series")


def _add_solver(p, rtol=1e-9, atol=1e-11, max_samples=200_000):
    g = p.add_argument_group("solver")
    g.add_argument("--rtol", type=float, default=rtol, help="relative error tolerance")
    g.add_argument("--atol", type=float, default=atol, help="absolute error tolerance")
    g.add_argument("--max-samples", type=int, default=max_samples,
                   help="sample buffer; the kept-step stride doubles when it fills")


def _add_io(p):
    g = p.add_argument_group("run")
    g.add_argument("--config", default=None, metavar="JSON",
                   help="JSON object of flag values (flag names with '_' for '-'); flags win")
    g.add_argument("--out-dir", default=None,
                   help=f"output directory (fallback: $AUTORES_OUT, then ./{DEFAULT_OUT})")
    g.add_argument("--format", choices=("csv", "json"), default="csv",
                   help="format of tabular outputs; reports are always JSON")
    g.add_argument("--seed", type=int, default=0, help="seed of all random draws")
    g.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads for per-cell / per-sample work")


def _build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="autores", allow_abbrev=False,
        description="Autoresonant modes under combined external and parametric excitation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text,
                           formatter_class=fmt, allow_abbrev=False)
        p._negative_number_matcher = _NEGATIVE_VALUE
        return p

    p = add("roots", "List the roots sigma of P with multiplicity and stability class.")
    _add_model(p)
    _add_io(p)

    p = add("partition", "Root count and classes over a (delta, nu) grid.")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0,
                   help="sweep rate; only fixes mu0 = delta / sqrt(lambda)")
    p.add_argument("--nu-steps", type=int, default=64,
                   help="nu grid: this many points on [0, pi), endpoint excluded")
    p.add_argument("--delta", dest="delta_range", type=_range_spec, default="-1.5:1.5:0.01",
                   help="delta grid start:stop:step, both ends included")
    _add_io(p)

    p = add("series", "Coefficients of a particular solution and its values on a tau grid.")
    _add_model(p)
    _add_root(p)
    p.add_argument("--dps", type=int, default=None, help="mpmath digits (default: float64)")
    p.add_argument("--tau-min", type=float, default=10.0, help="first evaluation time")
    p.add_argument("--tau-max", type=float, default=1e6, help="last evaluation time")
    p.add_argument("--tau-points", type=int, default=25, help="log-spaced evaluation points")
    _add_io(p)

    p = add("simulate", "Integrate the amplitude/phase system from one initial condition.")
    _add_model(p)
    p.add_argument("--rho0", type=float, default=0.5, help="initial amplitude")
    p.add_argument("--psi0", type=float, default=0.0, help="initial phase mismatch")
    p.add_argument("--tau0", type=float, default=1.0,
                   help="start time; 0 needs a regularized pump (--mu-shift)")
    p.add_argument("--tau-end", type=float, default=200.0, help="final tau")
    p.add_argument("--capture-tol", type=float, default=0.1,
                   help="captured if |rho / sqrt(lambda tau) - 1| stays below this at the end")
    _add_solver(p, max_samples=20_000)
    _add_io(p)

    p = add("capture-map", "Captured / NotCaptured verdicts over a grid of initial conditions.")
    _add_model(p, mu0=-0.5, shift=1.0)
    p.add_argument("--rho-min", type=float, default=0.1, help="smallest initial amplitude")
    p.add_argument("--rho-max", type=float, default=4.0, help="largest initial amplitude")
    p.add_argument("--n-rho", type=int, default=40, help="initial amplitudes, evenly spaced")
    p.add_argument("--n-psi", type=int, default=40, help="psi0 points on [0, 2 pi)")
    p.add_argument("--tau0", type=float, default=0.0, help="start time of every run")
    p.add_argument("--horizon", type=float, default=200.0, help="final tau of every run")
    p.add_argument("--capture-tol", type=float, default=0.1,
                   help="captured if |rho / sqrt(lambda tau) - 1| stays below this at the end")
    _add_solver(p, max_samples=4096)
    _add_io(p)

    p = add("oscillator-demo",
            "Integrate the fast oscillator and compare its envelope with the reduced model.")
    p.add_argument("--epsilon", type=float, default=0.01, help="small parameter of the oscillator")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0,
                   help="sets the chirp rate through lambda = 8 vartheta kappa**2 / epsilon**2")
    p.add_argument("--nu", type=float, default=0.0, help="pump phase nu in [0, pi)")
    p.add_argument("--rho0", type=float, default=None,
                   help="initial amplitude (default: on the captured particular solution)")
    p.add_argument("--psi0", type=float, default=None, help="initial phase mismatch")
    p.add_argument("--tau-end", type=float, default=25.0, help="final slow time")
    p.add_argument("--compare-from", type=float, default=1.0,
                   help="start of the comparison window in tau")
    _add_solver(p, rtol=1e-10, atol=1e-12, max_samples=20_000)
    _add_io(p)

    p = add("stability", "Measured decay/growth rate of perturbations of a particular solution.")
    _add_model(p, mu0=0.2)
    _add_root(p, branch=-1)
    p.add_argument("--samples", type=int, default=8, help="perturbed starts, random angles from --seed")
    p.add_argument("--horizon", type=float, default=1e4, help="final tau")
    p.add_argument("--radius", type=float, default=0.03, help="start radius in scaled variables")
    p.add_argument("--tau0", type=float, default=100.0, help="time at which perturbations start")
    p.add_argument("--escape-radius", type=float, default=0.06,
                   help="growth runs stop once the scaled deviation exceeds this")
    p.add_argument("--kappa", type=float, default=0.5, help="margin kappa in l = (1 - kappa) / (1 + kappa)")
    p.add_argument("--sensitivity", action="store_true", help="rerun from 4 tau0 as a check")
    _add_solver(p, rtol=1e-8, atol=1e-11)
    _add_io(p)

    p = add("portrait", "Level grid and critical points of the frozen Hamiltonian h_minus1.")
    _add_model(p, mu0=-0.5)
    _add_root(p)
    p.add_argument("--r-max", type=float, default=1.5, help="R grid on [-r_max, r_max]")
    p.add_argument("--n-r", type=int, default=121, help="R grid points")
    p.add_argument("--n-psi", type=int, default=241, help="Psi grid on [-pi, pi]")
    _add_io(p)

    p = add("action-angle", "Period and frequency of the closed orbits around a Case II root.")
    _add_model(p, mu0=None, nu=math.pi / 6,
               mu0_help="pump strength (default: on the lower bifurcation curve for this nu)")
    _add_root(p, branch=-1)
    p.add_argument("--levels", type=int, default=32, help="levels evenly spaced in (0, I*)")
    _add_io(p)

    p = add("envelope", "Amplitude and phase laws of small oscillations about a particular solution.")
    _add_model(p, mu0=0.2)
    _add_root(p, branch=-1)
    p.add_argument("--epsilon", type=float, default=0.01, help="scaled initial amplitude")
    p.add_argument("--tau0", type=float, default=100.0, help="time at which perturbations start")
    p.add_argument("--tau-end", type=float, default=1e4, help="final tau")
    _add_solver(p, rtol=1e-9, atol=1e-12, max_samples=3_000_000)
    _add_io(p)
    return parser


# ---------------------------------------------------------------------------
# config resolution
# ---------------------------------------------------------------------------

_NOT_CONFIG = {"config", "command", "help", "version"}
_SECTIONS = ("params", "solver", "io", "options")


def _actions(parser: argparse.ArgumentParser, command: str) -> dict[str, argparse.Action]:
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return {a.dest: a for a in sub.choices[command]._actions if a.dest not in _NOT_CONFIG}


def _explicit(argv: list[str], actions: dict[str, argparse.Action]) -> set[str]:
    given = set()
    for dest, act in actions.items():
        for opt in act.option_strings:
            if any(tok == opt or tok.startswith(opt + "=") for tok in argv):
                given.add(dest)
    return given


def _read_config(path: str) -> dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    flat = {}
    for key, value in raw.items():
        if key in _SECTIONS and isinstance(value, dict):
            flat.update(value)
        elif key != "subcommand":
            flat[key] = value
    return flat


def _coerce(dest: str, act: argparse.Action, value: Any) -> Any:
    if isinstance(act, argparse._StoreTrueAction):
        if not isinstance(value, bool):
            raise ConfigError(f"config field '{dest}': expected true/false")
        return value
    if value is None:
        return None
    kind = act.type
    try:
        if kind is _range_spec:
            if not isinstance(value, str):
                raise ValueError("expected a 'start:stop:step' string")
            value = _range_spec(value)
        elif kind in (int, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"expected a number, got {value!r}")
            if kind is int and not isinstance(value, int):
                raise ValueError(f"expected an integer, got {value!r}")
            value = kind(value)
        elif not isinstance(value, str):
            raise ValueError(f"expected a string, got {value!r}")
    except (ValueError, argparse.ArgumentTypeError) as exc:
        raise ConfigError(f"config field '{dest}': {exc}") from None
    if act.choices is not None and value not in act.choices:
        raise ConfigError(f"config field '{dest}': {value!r} not in {list(act.choices)}")
    return value


def resolve(argv: list[str]) -> tuple[str, dict[str, Any]]:
    """Parse argv into (subcommand, settings): defaults < config file < flags."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    actions = _actions(parser, args.command)
    settings = vars(args).copy()
    if isinstance(settings.get("delta_range"), str):
        settings["delta_range"] = _range_spec(settings["delta_range"])
    if args.config:
        explicit = _explicit(argv, actions)
        for key, value in _read_config(args.config).items():
            dest = key.replace("-", "_")
            dest = "lam" if dest == "lambda" else dest
            dest = "delta_range" if (dest == "delta" and "delta_range" in actions) else dest
            if dest not in actions:
                raise ConfigError(f"{args.config}: unknown field '{key}' for {args.command}")
            if dest not in explicit:
                settings[dest] = _coerce(dest, actions[dest], value)
    for k in _NOT_CONFIG:
        settings.pop(k, None)
    return args.command, settings


def _model(s: dict) -> ModelParams:
    try:
        mu = (Regularized(s["mu0"], s["mu_shift"]) if s.get("mu_shift") is not None
              else AsymptoticSeries((s["mu0"],)))
        return ModelParams(s["lam"], s["nu"], mu)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _series_params(params: ModelParams) -> ModelParams:
    if isinstance(params.mu, Regularized):
        return ModelParams(params.lam, params.nu, params.mu.as_asymptotic())
    return params


def _solver(s: dict):
    from .integrator import SolverConfig
    try:
        return SolverConfig(rtol=s["rtol"], atol=s["atol"], max_samples=s["max_samples"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _pick_root(params: ModelParams, index: int):
    roots = find_roots(params)
    if not 0 <= index < len(roots):
        raise ConfigError(f"--root {index} out of range: {len(roots)} roots at delta="
                          f"{params.delta:.6g}, nu={params.nu:.6g}")
    return roots[index]


def _out_dir(s: dict) -> Path:
    out = s.get("out_dir") or os.environ.get("AUTORES_OUT") or DEFAULT_OUT
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"out_dir '{out}': {exc.strerror}") from None
    if not os.access(path, os.W_OK):
        raise ConfigError(f"out_dir '{out}' is not writable")
    return path


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _root_rows(roots):
    return [(r.sigma, r.multiplicity, r.stability_class.value, *r.p_derivs) for r in roots]


ROOT_HEADER = ("sigma", "multiplicity", "stability_class", "dP1", "dP2", "dP3", "dP4", "dP5")


def cmd_roots(s, out: RunWriter, pmap):
    params = _model(s)
    roots = find_roots(params)
    rc = classify_region(params.delta, params.nu)
    out.table("roots", ROOT_HEADER, _root_rows(roots))
    listing = [{"sigma": r.sigma, "multiplicity": r.multiplicity,
                "stability_class": r.stability_class.value} for r in roots]
    print(json.dumps({"delta": params.delta, "gamma": rc.gamma, "region": rc.region.value,
                      "roots": listing}, indent=2))


def cmd_partition(s, out: RunWriter, pmap):
    if s["nu_steps"] < 1:
        raise ConfigError("nu_steps must be positive")
    nus = np.linspace(0.0, math.pi, s["nu_steps"], endpoint=False)
    deltas = _grid(s["delta_range"])
    rows = sweep_partition(s["lam"], nus, deltas, pmap=pmap)
    out.table("partition", PARTITION_HEADER,
              [r.csv_fields(fmt_float) if out.fmt == "csv" else _partition_json(r) for r in rows])


def _partition_json(row):
    return [row.delta, row.nu, row.gamma, row.region.value, row.n_roots,
            [r.sigma for r in row.roots], [r.multiplicity for r in row.roots],
            row.error or [r.stability_class.value for r in row.roots]]


def cmd_series(s, out: RunWriter, pmap):
    from .series import (build_solution, eval_solution, predicted_residual_exponent,
                         truncation_estimate)
    params = _series_params(_model(s))
    root = _pick_root(params, s["root"])
    sol = build_solution(params, root, branch=s["branch"], n_orders=s["orders"], dps=s["dps"])
    report = sol.to_json()
    report.update(n_orders=sol.n_orders, next_terms=list(sol.next_terms),
                  predicted_residual_exponent=predicted_residual_exponent(sol),
                  stability_class=root.stability_class.value)
    out.report("series", report)
    taus = np.logspace(math.log10(s["tau_min"]), math.log10(s["tau_max"]), s["tau_points"])
    rho, psi = eval_solution(sol, taus)
    er, ep = truncation_estimate(sol, taus)
    out.table("series_values", ("tau", "rho", "psi", "trunc_rho", "trunc_psi"),
              zip(taus, np.asarray(rho, float), np.asarray(psi, float), er, ep))


def cmd_simulate(s, out: RunWriter, pmap):
    from .integrator import classify_capture, integrate
    params = _model(s)
    traj = integrate(params, (s["tau0"], s["rho0"], s["psi0"]), s["tau_end"], _solver(s))
    v = classify_capture(traj, params, s["capture_tol"])
    out.table("trajectory", ("tau", "rho", "psi"), zip(traj.tau, traj.rho, traj.psi))
    out.report("verdict", {"verdict": v.verdict.value, "rho_ratio_end": v.rho_ratio_end,
                           "psi_winding": v.psi_winding, "steps": traj.solver_stats.steps})


def cmd_capture_map(s, out: RunWriter, pmap):
    from .integrator import SolverConfig, capture_map, ic_grid
    params = _model(s)
    grid = ic_grid((s["rho_min"], s["rho_max"]), s["n_rho"], s["n_psi"])
    cfg = _solver(s)
    rows = capture_map(params, grid, s["horizon"], cfg, tau0=s["tau0"],
                       capture_tol=s["capture_tol"], pmap=pmap)
    out.table("capture_map", ("rho0", "psi0", "verdict", "rho_ratio_end", "psi_winding", "error"),
              [(r.rho0, r.psi0, r.verdict, r.rho_ratio_end, r.psi_winding, r.error) for r in rows])
    counts = {}
    for r in rows:
        counts[r.verdict] = counts.get(r.verdict, 0) + 1
    out.report("capture_summary", dict(sorted(counts.items())))


def cmd_oscillator_demo(s, out: RunWriter, pmap):
    from .integrator import (KAPPA, integrate, integrate_oscillator, locked_start, oscillator_ic,
                             reduced_params, vartheta_for)
    eps = s["epsilon"]
    if not eps > 0:
        raise ConfigError("epsilon must be positive")
    vartheta = vartheta_for(s["lam"], eps)
    params = reduced_params(eps, vartheta, s["nu"])
    cfg = _solver(s)
    if s["rho0"] is None or s["psi0"] is None:
        rho0, psi0 = locked_start(params)
    else:
        rho0, psi0 = s["rho0"], s["psi0"]
    osc = integrate_oscillator(eps, vartheta, oscillator_ic(rho0, psi0),
                               2.0 * KAPPA * s["tau_end"] / eps, cfg)
    ms = integrate(params, (0.0, rho0, psi0), s["tau_end"], cfg)
    tau, env = osc.slow_time(), osc.envelope()
    rho = np.interp(tau, ms.tau, ms.rho)
    out.table("oscillator", ("t", "tau", "x", "v", "envelope", "rho_reduced"),
              zip(osc.t, tau, osc.x, osc.v, env, rho))
    window = tau >= s["compare_from"]
    rel = np.abs(env[window] / rho[window] - 1.0)
    out.report("oscillator_summary", {
        "epsilon": eps, "vartheta": vartheta, "lambda": params.lam, "rho0": rho0, "psi0": psi0,
        "max_relative_error": float(rel.max()) if rel.size else None,
        "tolerance": 5.0 * eps, "window": [s["compare_from"], s["tau_end"]]})


def cmd_stability(s, out: RunWriter, pmap):
    from .integrator import SolverConfig
    from .stability import measure_stability
    params = _series_params(_model(s))
    root = _pick_root(params, s["root"])
    try:
        cfg = SolverConfig(rtol=s["rtol"], atol=s["atol"], max_samples=s["max_samples"], stride=4)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rep = measure_stability(params, root, branch=s["branch"], radius=s["radius"],
                            n_samples=s["samples"], horizon=s["horizon"], cfg=cfg,
                            tau0=s["tau0"], escape_radius=s["escape_radius"], kappa=s["kappa"],
                            seed=s["seed"], sensitivity=s["sensitivity"], n_orders=s["orders"],
                            pmap=pmap)
    out.report("stability", rep.to_dict())


def cmd_portrait(s, out: RunWriter, pmap):
    from .averaging import critical_points, level_grid
    params = _model(s)
    root = _pick_root(params, s["root"])
    grid = level_grid(root, params, (-s["r_max"], s["r_max"]), n_R=s["n_r"], n_Psi=s["n_psi"])
    out.table("level_grid", ("R", "Psi", "h"), grid)
    cps = critical_points(root, params)
    out.report("critical_points", {"sigma": cps.sigma, "points": [
        {"R": c.R, "Psi": c.Psi, "kind": c.kind.value, "multiplicity": c.multiplicity}
        for c in cps.points]})


def cmd_action_angle(s, out: RunWriter, pmap):
    from .averaging import (action_angle_table, double_root_constants, omega_expansion,
                            omega_small_amplitude, small_action_slope)
    if s["mu0"] is None:
        s = dict(s, mu0=-bifurcation_delta(s["nu"]) / math.sqrt(s["lam"]))
    params = _model(s)
    root = _pick_root(params, s["root"])
    c = double_root_constants(root, params)
    table = action_angle_table(root, params, s["levels"])
    expansion = omega_expansion(root, params, table.rows[:, 0])
    out.table("action_angle", ("I", "T", "omega", "omega_expansion"),
              np.column_stack([table.rows, expansion]))
    out.report("action_angle_summary", {
        "mu0": params.mu0, "sigma": root.sigma, "phi": c.phi, "omega2": c.omega2,
        "I_star": table.I_star, "omega_small_amplitude": omega_small_amplitude(root, params),
        "small_action_slope": small_action_slope(root, params),
        "expansion_slope": -5.0 / (48.0 * (c.omega2 * c.phi) ** 2)})


def cmd_envelope(s, out: RunWriter, pmap):
    from .averaging import envelope_run
    from .integrator import SolverConfig
    from .series import build_solution
    params = _series_params(_model(s))
    root = _pick_root(params, s["root"])
    sol = build_solution(params, root, branch=s["branch"], n_orders=s["orders"])
    run = envelope_run(params, sol, s["epsilon"], s["tau0"], s["tau_end"], _solver(s))
    payload = {k: v for k, v in vars(run).items() if k != "fit"}
    payload["fit"] = vars(run.fit)
    payload.update(sigma=root.sigma, multiplicity=root.multiplicity, branch=sol.branch)
    out.report("envelope", payload)


COMMANDS: dict[str, Callable] = {
    "roots": cmd_roots, "partition": cmd_partition, "series": cmd_series,
    "simulate": cmd_simulate, "capture-map": cmd_capture_map,
    "oscillator-demo": cmd_oscillator_demo, "stability": cmd_stability,
    "portrait": cmd_portrait, "action-angle": cmd_action_angle, "envelope": cmd_envelope,
}


def run(command: str, settings: dict) -> int:
    """Execute one resolved run; returns the process exit status."""
    out_dir = _out_dir(settings)
    writer = RunWriter(out_dir, settings["format"], log=_log)
    threads = max(1, int(settings.get("threads") or 1))
    hashed = {k: v for k, v in settings.items() if k not in ("out_dir", "threads")}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        pmap = pool.map if threads > 1 else map
        _log(f"{command}: start")
        COMMANDS[command](settings, writer, pmap)
    writer.manifest(command, hashed, settings["seed"])
    _log(f"{command}: done")
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        command, settings = resolve(argv)
        return run(command, settings)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return 2
    except SystemExit as exc:  # argparse: usage errors exit 2, --help exits 0
        return int(exc.code or 0)
    except Exception as exc:
        _log(f"error: {type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
