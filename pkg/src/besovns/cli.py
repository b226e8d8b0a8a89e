"""
Command-line entry point ``besovns``.

Subcommands: ``norm``, ``decompose``, ``solve-elliptic``, ``solve-transport``,
``solve-ns``, ``verify``, ``stability``, ``scaling-check``. Each writes its
outputs and a ``manifest.json`` under ``--out``.

Exit status: 0 success, 1 suite or check FAIL, 2 usage or configuration
error, 3 numerical abort (non-convergence, density bound, CFL, monitor abort).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import harness
from .elliptic import CoefficientField, NonConvergenceError, SolverTimeoutError, solve_pressure
from .io import TrajectoryStore, read_field, svg_line_plot, write_csv, write_field, write_manifest
from .littlewood_paley import DyadicDecomposition
from .navier_stokes import (
    FAMILIES,
    BootstrapKnobs,
    DensityBoundError,
    MonitorBreachError,
    SolverConfig,
    run,
    scaling_check,
    stability_experiment,
)
from .spectral import ParameterError, ShapeError, TorusGrid, lp_norm
from .transport import CFLError, ScheduleExhaustedError, advect

log = logging.getLogger("besovns")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3
CONFIG_VERSION = 1


class UsageError(Exception):
    """Bad arguments or configuration, detected before any compute."""


# -- configuration helpers ------------------------------------------------------


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: dict, overrides) -> dict:
    """Apply ``key=value`` overrides; dotted keys reach nested dicts, values parse as JSON when possible."""
    for item in overrides or ():
        if "=" not in item:
            raise UsageError(f"override {item!r} is not of the form key=value")
        key, val = item.split("=", 1)
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise UsageError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = _parse_value(val)
    return config


def load_config(path, overrides=()) -> dict:
    config = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise UsageError(f"config file {p} does not exist")
        try:
            config = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {p} is not valid JSON: {exc}") from exc
    config = apply_overrides(config, overrides)
    version = config.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise UsageError(f"unsupported config version {version}")
    return config


def make_grid(cfg: dict, default=(64, 64)) -> TorusGrid:
    g = cfg.get("grid", {})
    if isinstance(g, int):
        g = {"sizes": [g, g]}
    sizes = tuple(g.get("sizes", default))
    periods = g.get("periods")
    return TorusGrid(sizes, tuple(periods) if periods else None)


SCALAR_FAMILIES = ("zero", "scalar", "large-tail", "sample", "file")
VECTOR_FAMILIES = ("zero-velocity", "solenoidal", "taylor-green", "sample", "file")


def check_family(spec, allowed, what):
    if spec is None:
        return
    name = spec.get("family") if isinstance(spec, dict) else None
    if name not in allowed:
        raise UsageError(f"unknown {what} family {name!r}; expected one of {allowed}")
    if name == "file" and not Path(spec.get("path", "")).with_suffix(".json").exists():
        raise UsageError(f"{what} snapshot {spec.get('path')!r} does not exist")


def make_field(grid: TorusGrid, spec: dict | None, vector: bool):
    """Build a field from ``{"family": name, **params}``."""
    if spec is None:
        return None
    spec = {k: v for k, v in spec.items() if v is not None}
    name = spec.pop("family")
    if name == "file":
        g, f, _ = read_field(spec["path"])
        if g.sizes != grid.sizes:
            raise UsageError(f"snapshot grid {g.sizes} does not match {grid.sizes}")
        return f
    if name == "sample":
        kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in spec.items()}
        if vector:
            kw.setdefault("components", grid.dim)
            kw.setdefault("solenoidal", True)
        return harness.generate_sample(harness.SampleSpec(sizes=grid.sizes, periods=grid.periods, **kw))
    return FAMILIES[name](grid, **spec)


# -- subcommands ----------------------------------------------------------------


def _field_arg(args, grid_default=64):
    if args.field:
        if not Path(args.field).with_suffix(".json").exists():
            raise UsageError(f"snapshot {args.field} does not exist")
        grid, f, _ = read_field(args.field)
        return grid, f
    grid = TorusGrid((args.size,) * args.dim)
    spec = {"family": "sample", "s": args.sample_s, "seed": args.seed}
    return grid, make_field(grid, spec, False)


def cmd_norm(args, out: Path) -> tuple[int, dict, str]:
    grid, f = _field_arg(args)
    dec = DyadicDecomposition(grid, f)
    val = dec.besov(args.s, args.p, args.r)
    res = {"s": args.s, "p": args.p, "r": args.r, "besov": val, "lp": lp_norm(grid, f, args.p),
           "sizes": list(grid.sizes)}
    (out / "norm.json").write_text(json.dumps(res, indent=2))
    print(repr(val))
    return EXIT_OK, res, f"B^{args.s}_{args.p},{args.r} norm {val:.6g}"


def cmd_decompose(args, out: Path):
    grid, f = _field_arg(args)
    dec = DyadicDecomposition(grid, f)
    rows = [{"level": int(l), "lp_norm": float(n), "weighted": float(2.0 ** (l * args.s) * n)}
            for l, n in zip(dec.levels, dec.norms(args.p))]
    write_csv(out / "blocks.csv", rows, ["level", "lp_norm", "weighted"])
    if args.write_blocks:
        for l, b in dec.blocks():
            write_field(out / f"block_{int(l) + 1:02d}", grid, b, name=f"Delta_{l}")
    err = float(np.abs(dec.reconstruct() - f).max())
    svg_line_plot(out / "blocks.svg", [("||Delta_l u||", dec.levels, dec.norms(args.p))],
                  "block norms", "level l", "L^p norm", logy=True)
    return EXIT_OK, {"reconstruction_error": err, "levels": len(rows)}, f"{len(rows)} blocks"


def cmd_solve_elliptic(args, out: Path):
    cfg = load_config(args.config, args.set)
    check_family(cfg.get("a"), SCALAR_FAMILIES, "coefficient")
    check_family(cfg.get("F"), VECTOR_FAMILIES, "source")
    grid = make_grid(cfg)
    a = make_field(grid, cfg.get("a", {"family": "scalar", "amplitude": 0.1, "seed": args.seed}), False)
    amax = args.a_max if args.a_max is not None else cfg.get("a_max")
    if amax is not None and np.ptp(a) > 0:
        # map onto [0, a_max] so that 1 + a stays positive however large a_max is
        a = amax * (a - a.min()) / np.ptp(a)
    F = make_field(grid, cfg.get("F", {"family": "sample", "s": 0.5, "seed": args.seed + 1,
                                       "solenoidal": False}), True)
    coef = CoefficientField(grid, a, c=cfg.get("c", 0.05))
    hist = []
    try:
        sol = solve_pressure(coef, F, cfg.get("tol", 1e-10), cfg.get("max_iter", 500))
        hist = sol.history
    except (NonConvergenceError, SolverTimeoutError) as exc:
        hist = exc.history
        raise
    finally:
        rows = [{"iter": i, "residual": r, "contraction_estimate": c} for i, r, c in hist]
        write_csv(out / "solver_log.csv", rows, ["iter", "residual", "contraction_estimate"])
        if rows:
            svg_line_plot(out / "residual.svg", [("residual", [r["iter"] for r in rows],
                                                  [r["residual"] for r in rows])],
                          "fixed-point residual", "iteration", "relative residual", logy=True)
    write_field(out / "grad_pi", grid, sol.grad_pi, name="grad_pi")
    res = {"iterations": sol.iterations, "residual": sol.residual, "contraction": sol.contraction,
           "a_inf": float(np.abs(a).max()), "m": coef.m}
    return EXIT_OK, res, f"converged in {sol.iterations} iterations, residual {sol.residual:.3g}"


def cmd_solve_transport(args, out: Path):
    cfg = load_config(args.config, args.set)
    check_family(cfg.get("a0"), SCALAR_FAMILIES, "a0")
    check_family(cfg.get("v"), VECTOR_FAMILIES, "velocity")
    grid = make_grid(cfg)
    a0 = make_field(grid, cfg.get("a0", {"family": "scalar", "amplitude": 1.0, "seed": args.seed}), False)
    v = make_field(grid, cfg.get("v", {"family": "taylor-green"}), True)
    T = cfg.get("T", 1.0)
    vmax = float(np.sqrt(np.sum(v * v, axis=0)).max())
    dt = cfg.get("dt", 0.45 * min(grid.spacing) / max(vmax, 1e-300))
    every = int(cfg.get("snapshot_every", 0))
    res = advect(grid, a0, v, T, dt, cfl=cfg.get("cfl", 0.5), lp_track=(2.0, 4.0, math.inf), keep_every=every)
    rows = [{"t": t, "L2": res.lp_history[2.0][i], "L4": res.lp_history[4.0][i], "Linf": res.lp_history[math.inf][i]}
            for i, t in enumerate(res.times)]
    write_csv(out / "lp_norms.csv", rows, ["t", "L2", "L4", "Linf"])
    svg_line_plot(out / "lp_norms.svg", [(k, res.times, [r[k] / rows[0][k] for r in rows]) for k in ("L2", "L4", "Linf")],
                  "relative L^p norms", "t", "||a(t)|| / ||a0||")
    if every:
        store = TrajectoryStore(out / "trajectory", grid, dt)
        for t, snap in res.snapshots:
            store.append(t, a=snap)
    drift = {k: max(abs(r[k] / rows[0][k] - 1) for r in rows) for k in ("L2", "L4", "Linf")}
    return EXIT_OK, {"drift": drift, "steps": len(res.times) - 1, "dt": dt}, f"max relative drift {drift}"


def _ns_setup(cfg: dict, seed: int):
    for key, allowed in (("a0", SCALAR_FAMILIES), ("u0", VECTOR_FAMILIES), ("force", VECTOR_FAMILIES)):
        check_family(cfg.get(key), allowed, key)
    grid = make_grid(cfg, (128, 128))
    a0 = make_field(grid, cfg.get("a0", {"family": "scalar", "amplitude": 0.1, "seed": seed + 1}), False)
    u0 = make_field(grid, cfg.get("u0", {"family": "solenoidal", "amplitude": 0.5, "seed": seed}), True)
    f = make_field(grid, cfg.get("force"), True)
    fields = {k: cfg[k] for k in SolverConfig.__dataclass_fields__ if k in cfg and k != "knobs"}
    try:
        knobs = BootstrapKnobs(**cfg.get("knobs", {}))
        sc = SolverConfig(knobs=knobs, **fields)
    except TypeError as exc:
        raise UsageError(f"bad solver configuration: {exc}") from exc
    return grid, a0, u0, f, sc


def cmd_solve_ns(args, out: Path):
    cfg = load_config(args.config, args.set)
    grid, a0, u0, f, sc = _ns_setup(cfg, args.seed)
    besov = [tuple(x) for x in cfg.get("besov", [[0.0, 2.0, 2.0]])]
    norms_rows = []

    def callback(state):
        row = {"t": state.t}
        for s, p, r in besov:
            row[f"a_B{s}_{p}_{r}"] = DyadicDecomposition(grid, state.a).besov(s, p, r)
            row[f"u_B{s}_{p}_{r}"] = DyadicDecomposition(grid, state.u).besov(s, p, r)
        norms_rows.append(row)

    every = int(cfg.get("snapshot_every", 0))
    if every:
        sc.keep_every = every
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        result = run(grid, a0, u0, f, sc, callback=callback)
    rows = result.rows()
    for row, nrow in zip(rows, norms_rows):
        row.update({k: v for k, v in nrow.items() if k != "t"})
    cols = list(rows[-1].keys())
    write_csv(out / "monitors.csv", rows, cols)
    svg_line_plot(out / "energy.svg", [("energy", result.times, result.energy),
                                       ("dissipation", result.times, result.dissipation)],
                  "energy balance", "t", "")
    svg_line_plot(out / "residual.svg", [("energy residual", result.times[1:], result.energy_residual[1:])],
                  "energy equality residual", "t", "relative residual", logy=True)
    if result.snapshots:
        store = TrajectoryStore(out / "trajectory", grid, sc.dt)
        for st in result.snapshots:
            store.append(st.t, a=st.a, u=st.u)
    if result.breaches:
        (out / "breaches.txt").write_text("\n".join(result.breaches) + "\n")
        for msg in result.breaches[:5]:
            print(f"warning: {msg}", file=sys.stderr)
    res = {"energy_residual": float(result.energy_residual[-1]), "steps": len(result.times) - 1,
           "max_div": result.max_div, "pressure_iterations": result.pressure_iterations,
           "breaches": len(result.breaches)}
    return EXIT_OK, res, f"terminal energy residual {res['energy_residual']:.3g}"


def cmd_stability(args, out: Path):
    cfg = load_config(args.config, args.set)
    grid, a0, u0, f, sc = _ns_setup({**{"grid": {"sizes": [64, 64]}}, **cfg}, args.seed)
    check_family(cfg.get("da0"), SCALAR_FAMILIES, "da0")
    check_family(cfg.get("du0"), VECTOR_FAMILIES, "du0")
    da0 = make_field(grid, cfg.get("da0", {"family": "scalar", "amplitude": 1.0, "seed": args.seed + 5}), False)
    du0 = make_field(grid, cfg.get("du0", {"family": "solenoidal", "amplitude": 1.0, "seed": args.seed + 6}), True)
    deltas = cfg.get("deltas", [1e-2, 1e-3, 1e-4])
    if not sc.keep_every:
        sc.keep_every = max(1, int(round(sc.T / sc.dt / 10)))
    res = stability_experiment(grid, a0, u0, da0, du0, deltas, sc, f)
    rows = []
    for d, series in zip(deltas, res["series"]):
        for t, (na, nu, nl2) in zip(res["times"], series):
            rows.append({"delta": d, "t": t, "da_weak": na, "du_weak": nu, "du_L2": nl2})
    write_csv(out / "stability.csv", rows, ["delta", "t", "da_weak", "du_weak", "du_L2"])
    svg_line_plot(out / "stability.svg",
                  [(f"delta={d:g}", res["times"], [s[2] / d if d else 0 for s in series])
                   for d, series in zip(deltas, res["series"])],
                  "||delta u(t)||_2 / delta", "t", "")
    slope = res["slope"]
    ok = abs(slope - 1.0) <= cfg.get("slope_tol", 0.1)
    summary = {"slope": slope, "terminal_du": res["terminal_du"], "constants": res["constants"], "passed": ok}
    return (EXIT_OK if ok else EXIT_FAIL), summary, f"log-log slope {slope:.4f}"


def cmd_scaling(args, out: Path):
    cfg = load_config(args.config, args.set)
    grid, a0, u0, f, sc = _ns_setup({**{"grid": {"sizes": [64, 64]}, "T": 0.2, "dt": 0.02}, **cfg}, args.seed)
    if f is not None:
        raise UsageError("scaling-check runs without forcing")
    l = cfg.get("l", 2)
    res = scaling_check(grid, a0, u0, sc, l)
    tol = cfg.get("tol", 1e-10)
    ok = res["max_diff"] <= tol
    (out / "scaling.json").write_text(json.dumps(res, indent=2))
    return (EXIT_OK if ok else EXIT_FAIL), {**res, "passed": ok}, f"max difference {res['max_diff']:.3g}"


def cmd_verify(args, out: Path):
    cfg = load_config(args.config, args.set)
    laws = args.law or cfg.get("laws") or ["bony-identity"]
    unknown = [k for k in laws if k not in harness.LAWS]
    if unknown:
        raise UsageError(f"unknown law(s) {unknown}; known: {sorted(harness.LAWS)}")
    cfg = {k: v for k, v in cfg.items() if k != "version"}
    cfg["laws"] = laws
    if args.samples is not None:
        cfg["samples"] = args.samples
    if args.resolutions:
        cfg["resolutions"] = args.resolutions
    cfg.setdefault("seed", args.seed)
    try:
        sc = harness.SuiteConfig(**cfg)
    except TypeError as exc:
        raise UsageError(f"bad suite configuration: {exc}") from exc
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc
    result = harness.run_suite(None, config=sc)
    harness.write_suite(result, out)
    for law, v in result.verdicts.items():
        print(f"{law}: {'PASS' if v['passed'] else 'FAIL'} C_emp={v['c_emp']:.4g} "
              f"stability={v['stability']:.4g} {'; '.join(v['reasons'])}")
    return (EXIT_OK if result.passed else EXIT_FAIL), result.summary(), "PASS" if result.passed else "FAIL"


COMMANDS = {
    "norm": cmd_norm,
    "decompose": cmd_decompose,
    "solve-elliptic": cmd_solve_elliptic,
    "solve-transport": cmd_solve_transport,
    "solve-ns": cmd_solve_ns,
    "verify": cmd_verify,
    "stability": cmd_stability,
    "scaling-check": cmd_scaling,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="besovns", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        p.add_argument("--out", default=None, help="run directory (default runs/<command>)")
        p.add_argument("--seed", type=int, default=0)
        if config:
            p.add_argument("--config", help="JSON configuration file")
            p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                           help="override a configuration entry (dotted keys, JSON values)")

    for name in ("norm", "decompose"):
        p = sub.add_parser(name, help="Besov norm of a field" if name == "norm" else "dyadic block norms")
        common(p, config=False)
        p.add_argument("--field", help="snapshot header (.json) to read")
        p.add_argument("--size", type=int, default=64, help="grid size for a generated sample")
        p.add_argument("--dim", type=int, default=2)
        p.add_argument("--sample-s", type=float, default=1.0, help="regularity of a generated sample")
        p.add_argument("--s", type=float, default=0.0)
        p.add_argument("--p", type=float, default=2.0)
        p.add_argument("--r", type=float, default=2.0)
        if name == "decompose":
            p.add_argument("--write-blocks", action="store_true")

    p = sub.add_parser("solve-elliptic", help="variable-coefficient pressure solve")
    common(p)
    p.add_argument("--a-max", type=float, default=None, help="map the coefficient perturbation onto [0, A_MAX]")
    p = sub.add_parser("solve-transport", help="transport by a divergence-free velocity")
    common(p)
    p = sub.add_parser("solve-ns", help="density-dependent Navier-Stokes run")
    common(p)
    p = sub.add_parser("verify", help="inequality suite")
    common(p)
    p.add_argument("--law", action="append", help=f"law id (repeatable): {', '.join(sorted(harness.LAWS))}")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--resolutions", type=int, nargs="+", default=None)
    p = sub.add_parser("stability", help="perturbation response experiment")
    common(p)
    p = sub.add_parser("scaling-check", help="parabolic scaling covariance")
    common(p)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out or Path("runs") / args.command)
    out.mkdir(parents=True, exist_ok=True)
    status, summary, message = EXIT_USAGE, {}, ""
    try:
        status, summary, message = COMMANDS[args.command](args, out)
    except (UsageError, ParameterError, ShapeError, KeyError, TypeError) as exc:
        status, message = EXIT_USAGE, f"usage error: {exc}"
    except (NonConvergenceError, SolverTimeoutError, DensityBoundError, CFLError,
            MonitorBreachError, ScheduleExhaustedError, FloatingPointError) as exc:
        status, message = EXIT_ABORT, f"numerical abort ({type(exc).__name__}): {exc}"
    config = {k: v for k, v in vars(args).items() if k != "command"}
    if getattr(args, "config", None) and Path(args.config).exists():
        config["config_contents"] = json.loads(Path(args.config).read_text())
    (out / "result.json").write_text(
        json.dumps({"status": status, "message": message, **summary}, indent=2, default=str))
    write_manifest(out, args.command, ["besovns", *argv], config, status, message, getattr(args, "seed", None))
    stream = sys.stdout if status in (EXIT_OK, EXIT_FAIL) else sys.stderr
    print(message, file=stream)
    return status


if __name__ == "__main__":
    sys.exit(main())
