"""Command line driver: ``kolmo <command> [options]``.

Every command writes its tables and grids into ``--out`` together with a
``manifest.txt`` recording the inputs hash, library versions, seed and a
digest of each output. Output files never contain timestamps, so a repeated
run with the same configuration and seed reproduces them byte for byte.
"""
from __future__ import annotations

import argparse
import hashlib
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import RunConfig, load_config, parse_config
from .errors import ConfigError, KolmoError
from .gridio import format_table, grid_csv_rows, write_grid

COMMANDS = ("density", "flow", "solve", "mc", "besov", "schauder", "verify")


def _floats(text: str):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from exc


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from exc
    if v < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output directory (default from config, else ./out)")
    common.add_argument("--seed", type=int, default=None, help="random seed (default from config)")
    common.add_argument("--resolution", type=_positive_int, default=None,
                        help="grid points per axis (or the command's main resolution knob)")
    common.add_argument("--config", default=None, help="flat key = value configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")

    p = argparse.ArgumentParser(prog="kolmo", description="Degenerate stable Ornstein-Uhlenbeck chains.")
    p.add_argument("--version", action="version", version=f"kolmo {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    d = sub.add_parser("density", parents=[common], help="stable or OU density grid")
    kind = d.add_mutually_exclusive_group()
    kind.add_argument("--stable", action="store_true", help="density of the projected stable law (default)")
    kind.add_argument("--ou", action="store_true", help="transition density of the chain from --x")
    d.add_argument("--t", type=float, default=1.0, help="time (default 1)")
    d.add_argument("--x", type=_floats, default=None, help="start point for --ou (default origin)")
    d.add_argument("--half-width", type=float, default=None, help="half width of the grid box")

    f = sub.add_parser("flow", parents=[common], help="drift flow path and sensitivity ratios")
    f.add_argument("--x", type=_floats, default=None, help="start point (default origin)")
    f.add_argument("--t0", type=float, default=0.0)
    f.add_argument("--t1", type=float, default=None, help="end time (default model.T)")
    f.add_argument("--pairs", type=_positive_int, default=200, help="pairs in the sensitivity sample")

    s = sub.add_parser("solve", parents=[common], help="Picard or time-chain solve")
    how = s.add_mutually_exclusive_group()
    how.add_argument("--picard", action="store_true", help="single Picard solve on [0, T] (default)")
    how.add_argument("--chain", type=float, metavar="T_SUB", default=None,
                     help="backward chain of solves on sub-intervals of length T_SUB")

    m = sub.add_parser("mc", parents=[common], help="Feynman-Kac Monte Carlo estimate")
    m.add_argument("--paths", type=_positive_int, default=None)
    m.add_argument("--steps", type=_positive_int, default=None)
    m.add_argument("--x", type=_floats, default=None, help="start point (default origin)")
    m.add_argument("--t", type=float, default=0.0, help="start time")

    b = sub.add_parser("besov", parents=[common], help="first and second Besov control series")
    b.add_argument("--lags", type=_floats, default=None, help="comma separated lags (default 5 in [0.1, 0.6])")

    sc = sub.add_parser("schauder", parents=[common], help="Schauder ratio study")
    sc.add_argument("--pairs", type=_positive_int, default=512, help="pair budget of the norm estimates")

    v = sub.add_parser("verify", parents=[common], help="run property suites")
    which = v.add_mutually_exclusive_group(required=True)
    which.add_argument("--suite", help="suite name")
    which.add_argument("--all", action="store_true", help="run every suite")
    which.add_argument("--list", action="store_true", help="list suite names")
    return p


# -- plumbing -------------------------------------------------------------------


class Run:
    """Collects outputs and writes the manifest."""

    def __init__(self, command, args, cfg: RunConfig, out: Path, argv):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.argv = list(argv)
        self.outputs = []
        out.mkdir(parents=True, exist_ok=True)

    @property
    def config_hash(self) -> str:
        return self.cfg.digest()

    def table(self, name, header, rows) -> Path:
        path = self.out / name
        path.write_text(format_table(header, rows, self.config_hash), encoding="utf-8")
        self.outputs.append(path)
        return path

    def grid(self, name, values) -> Path:
        path = write_grid(self.out / name, values)
        self.outputs.append(path)
        return path

    def manifest(self, seed) -> Path:
        args = list(self.argv)
        if "--out" in args:
            i = args.index("--out")
            del args[i:i + 2]
        args = [a for a in args if not a.startswith("--out=")]
        inputs = self.cfg.to_text(include_out=False) + "\n".join(args)
        lines = [
            f"command = {self.command}",
            f"argv = {' '.join(self.argv)}",
            f"inputs_hash = {hashlib.sha256(inputs.encode()).hexdigest()}",
            f"config_hash = {self.config_hash}",
            f"seed = {seed}",
            f"threads = {os.environ.get('KOLMO_THREADS', 'default')}",
            f"kolmo = {__version__}",
            f"numpy = {np.__version__}",
            f"scipy = {scipy.__version__}",
            f"python = {platform.python_version()}",
        ]
        for p in self.outputs:
            lines.append(f"output = {p.name} sha256={hashlib.sha256(p.read_bytes()).hexdigest()}")
        path = self.out / "manifest.txt"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


def _threads() -> int | None:
    raw = os.environ.get("KOLMO_THREADS")
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"KOLMO_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"KOLMO_THREADS must be a positive integer, got {raw!r}")
    return n


def _config(args) -> RunConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.seed is not None:
        overrides["run.seed"] = str(args.seed)
    if args.out is not None:
        overrides["run.out"] = args.out
    if args.resolution is not None and args.command in ("solve", "schauder", "density"):
        overrides["grid.points"] = str(args.resolution)
    if args.command == "mc":
        if args.paths is not None:
            overrides["mc.paths"] = str(args.paths)
        if args.steps is not None:
            overrides["mc.steps"] = str(args.steps)
    if args.config:
        return load_config(args.config, overrides)
    return parse_config("", overrides)


def _point(cfg, x):
    nd = cfg.n * cfg.d
    if x is None:
        return np.zeros(nd)
    x = np.asarray(x, dtype=float)
    if x.size != nd:
        raise ConfigError(f"point needs {nd} coordinates, got {x.size}")
    return x


# -- commands -------------------------------------------------------------------


def cmd_density(args, cfg, run):
    from .ou import OUDensity
    from .stable import GridSpec, stable_density_grid

    if args.t <= 0:
        raise ConfigError("--t must be positive")
    ou = OUDensity(cfg.A, cfg.model)
    nd = cfg.n * cfg.d
    if args.ou:
        hw = args.half_width or float(np.max(ou.scale.T_diag(args.t))) * 12.0
        grid = GridSpec.cube(nd, cfg.points, hw)
        x = _point(cfg, args.x)
        mesh = grid.mesh().reshape(-1, nd)
        values = ou(args.t, x[None, :], mesh).reshape(grid.points)
        defect = float(values.sum() * grid.cell_volume - 1.0)
        label = "ou"
    else:
        # unit-time spacing 0.08 resolves the symbol decay, scaled by t^{1/alpha}
        hw = args.half_width or 0.04 * cfg.points * args.t ** (1.0 / cfg.alpha)
        grid = GridSpec.cube(nd, cfg.points, hw)
        dens = stable_density_grid(ou.proj_model, args.t, grid)
        values, defect, label = dens.values, float(dens.mass_defect), "stable"
    run.grid(f"density_{label}.ksgd", values)
    header = tuple(f"y{i + 1}" for i in range(nd)) + ("density",)
    run.table(f"density_{label}.csv", header, grid_csv_rows(grid.axes(), values).tolist())
    print(f"{label} density at t = {args.t:g} on {cfg.points}^{nd} points, half width {hw:g}")
    print(f"mass defect: {defect:.3e}")
    return 0


def cmd_flow(args, cfg, run):
    from .flow import flow_sensitivity_report, integrate_flow
    from .metric import MetricParams, aniso_distance

    drift = cfg.drift_spec()
    t1 = cfg.T if args.t1 is None else args.t1
    steps = args.resolution or 256
    path = integrate_flow(args.t0, _point(cfg, args.x), drift, cfg.A, t1, max(steps, 8))
    nd = cfg.n * cfg.d
    run.table("flow_path.csv", ("time",) + tuple(f"theta{i + 1}" for i in range(nd)), path.rows())
    rng = np.random.default_rng(cfg.seed)
    x = rng.uniform(-2.0, 2.0, (args.pairs, nd))
    xp = x + rng.uniform(-0.5, 0.5, (args.pairs, nd)) * 0.25
    params = MetricParams(cfg.n, cfg.d, cfg.alpha, cfg.beta)
    rep = flow_sensitivity_report(drift, cfg.A, cfg.alpha, cfg.beta, x, xp, args.t0, t1, n_steps=max(steps // 4, 8))
    rows = [(float(a), float(b), float(c), float(e)) for a, b, c, e in
            zip(aniso_distance(x, xp, params), rep.flow_ratio, rep.mean_ratio, rep.freeze_ratio)]
    run.table("flow_sensitivity.csv", ("distance", "flow_ratio", "mean_ratio", "freeze_ratio"), rows)
    summ = rep.summary()
    print(f"flow from t = {args.t0:g} to {t1:g}: end state {np.array2string(path.states[-1], precision=6)}, "
          f"integral residual {path.residual:.2e}")
    print("max sensitivity ratios: " + ", ".join(f"{k} {v:.4g}" for k, v in summ.items()))
    return 0


def _solve(cfg, chain=None):
    from .ou import OUDensity
    from .solver import picard_solve, time_chain_solve

    prob = cfg.problem()
    grid = cfg.grid()
    ou = OUDensity(cfg.A, cfg.model)
    if chain is not None:
        return prob, time_chain_solve(prob, cfg.T, chain, grid, cfg.n_time, ou=ou)
    return prob, picard_solve(prob, grid, cfg.n_time, max_iters=cfg.picard_max_iters, tol=cfg.picard_tol, ou=ou)


def cmd_solve(args, cfg, run):
    if args.chain is not None and args.chain <= 0:
        raise ConfigError("--chain needs a positive sub-interval length")
    prob, fld = _solve(cfg, args.chain)
    run.grid("solution.ksgd", fld.values)
    run.table("solution_times.csv", ("k", "t"), [(k, float(t)) for k, t in enumerate(fld.times)])
    run.table("run_report.csv", ("iteration", "sup_distance", "factor"), fld.rows())
    centre = fld.at(0.0, np.zeros((1, fld.grid.dims)))[0]
    print(f"solved {prob.name} on {fld.grid.points} points x {len(fld.times)} times; "
          f"{fld.iteration} iterations, contraction {fld.contraction:.4g}, scale {fld.scale:.4g}")
    print(f"u(0, 0) = {centre:.8f}")
    return 0


def cmd_mc(args, cfg, run):
    from .montecarlo import feynman_kac

    prob = cfg.problem()
    x = _point(cfg, args.x)
    est = feynman_kac(prob, args.t, x, cfg.mc_paths, cfg.mc_steps, seed=cfg.seed)
    run.table("mc.csv", ("t", *(f"x{i + 1}" for i in range(len(x))), "estimate", "std_error", "paths_used",
                         "excluded_fraction"),
              [(args.t, *map(float, x), est.value, est.std_error, est.n_used, est.excluded)])
    print(f"u({args.t:g}, {', '.join(f'{v:g}' for v in x)}) = {est.value:.6f} ± {est.std_error:.6f} "
          f"({est.n_used} paths, {100 * est.excluded:.2f}% excluded)")
    return 0


def cmd_besov(args, cfg, run):
    from .besov import (control_series, first_besov_control, first_control_exponent, second_besov_control,
                        second_control_exponent)
    from .catalogue import desk_level2_drift
    from .ou import OUDensity

    if (cfg.n, cfg.d) != (2, 1):
        raise ConfigError("Besov controls are available for n = 2, d = 1")
    ou = OUDensity(cfg.A, cfg.model)
    lags = np.geomspace(0.1, 0.6, 5) if args.lags is None else np.asarray(args.lags)
    if np.any(lags <= 0):
        raise ConfigError("lags must be positive")
    n_v = args.resolution or 64
    summary = []
    for l in (0, 1):
        target = first_control_exponent(cfg.alpha, cfg.beta, 2, l)
        ser = control_series(lambda **kw: first_besov_control(ou, l=l, beta=cfg.beta, n_v=n_v, **kw), lags, target)
        run.table(f"besov_first_l{l}.csv", ("lag", "norm", "low", "thermic"), ser.rows())
        summary.append((f"first_l{l}", ser.slope, target))
    drift = desk_level2_drift(1.0, cfg.alpha, cfg.beta)
    target = second_control_exponent(cfg.alpha, cfg.beta, (0, 0))
    ser = control_series(lambda **kw: second_besov_control(ou, drift, x=np.array([0.0, -0.2]), beta=cfg.beta,
                                                            n_v=n_v, **kw), lags, target)
    run.table("besov_second.csv", ("lag", "norm", "low", "thermic"), ser.rows())
    summary.append(("second", ser.slope, target))
    run.table("besov_slopes.csv", ("control", "slope", "target"), summary)
    for name, slope, target in summary:
        print(f"{name}: log-log slope {slope:.4f} (target {target:.4f})")
    return 0


def cmd_schauder(args, cfg, run):
    from .solver import schauder_ratio_with_noise

    prob, fld = _solve(cfg)
    rows = []
    for part in ("full", "seminorm"):
        rep = schauder_ratio_with_noise(fld, prob, seeds=(cfg.seed, cfg.seed + 1), part=part,
                                        pair_budget=args.pairs, time_stride=max(1, cfg.n_time // 8))
        rows.append((part, rep.ratio, rep.u_norm, rep.f_norm, rep.g_norm, rep.noise))
        print(f"{part}: ratio {rep.ratio:.4f} (seed spread {rep.noise:.3g})")
    run.table("schauder.csv", ("part", "ratio", "u_norm", "f_norm", "g_norm", "seed_spread"), rows)
    return 0


def cmd_verify(args, cfg, run):
    from .verify import SUITES, run_suite

    if args.list:
        print("\n".join(SUITES))
        return 0
    names = list(SUITES) if args.all else [args.suite]
    if args.suite is not None and args.suite not in SUITES:
        raise ConfigError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
    if args.resolution is not None:
        print("note: suites run at their own fixed resolutions; --resolution is ignored")
    failed = 0
    for name in names:
        res = run_suite(name, seed=cfg.seed)
        path = run.out / f"verify_{name}.csv"
        path.write_text(res.csv(cfg.digest()) + f"# passed={int(res.passed)}\n", encoding="utf-8")
        run.outputs.append(path)
        if len(res.rows) <= 12:
            print(",".join(res.header))
            for row in res.rows:
                print(",".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row))
        print(f"{name}: {'PASS' if res.passed else 'FAIL'} ({res.summary})")
        failed += not res.passed
    return 1 if failed else 0


HANDLERS = {"density": cmd_density, "flow": cmd_flow, "solve": cmd_solve, "mc": cmd_mc,
            "besov": cmd_besov, "schauder": cmd_schauder, "verify": cmd_verify}


def main(argv=None) -> int:
    """Entry point; returns the process exit status.

    Exit codes: 0 success, 1 a verification suite failed, 2 usage or
    configuration error, 3 numerical failure.
    """
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _threads()
        cfg = _config(args)
        run = Run(args.command, args, cfg, Path(cfg.out), argv)
        code = HANDLERS[args.command](args, cfg, run)
        if not getattr(args, "list", False):
            run.manifest(cfg.seed)
        return code
    except (ConfigError, ValueError) as exc:
        print(f"kolmo {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except KolmoError as exc:
        print(f"kolmo {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
