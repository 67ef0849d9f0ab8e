"""Command-line entry point: ``heatstab <subcommand>``.

Exit status is 0 when every assertion of the subcommand holds, 1 on an
assertion failure (the report path is printed) and 2 on a configuration or
input error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .closed_loop import decay_envelope, simulate, verify_decay
from .exceptions import ConfigurationError, HeatStabError, InputError
from .feedback import FeedbackLaw, bound_curves, synthesize, trend_report
from .gram import CalibratedConstant
from .io import (RunManifest, canonical_config, load_config, read_json, write_csv, write_json)
from .spectral import build_model, mode
from .verification import (check_gram, check_spectrum, check_synthesis, default_calibration,
                           run_battery)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class Context:
    """Config, model and manifest shared by every subcommand."""

    def __init__(self, args):
        self.args = args
        self.config = load_config(args.config) if args.config else canonical_config()
        self.seed = args.seed if args.seed is not None else int(self.config.seeds[0])
        if self.seed < 0:
            raise ConfigurationError(f"--seed must be a non-negative integer, got {self.seed}")
        self.out = Path(args.output_dir or self.config.output_dir)
        self.model = build_model(self.config.model)
        self.manifest = RunManifest(config_hash=self.config.digest(),
                                    model_hash=self.model.digest)
        self.plots = not args.no_plot

    def calibration(self, path=None) -> CalibratedConstant:
        if path:
            cal = CalibratedConstant.from_json(read_json(path))
            if cal.model_hash and cal.model_hash != self.model.digest:
                raise ConfigurationError(f"calibration {path} was computed for a different model")
        else:
            cal = default_calibration(self.model, self.config.M_range, self.config.safety_factor)
        self.manifest.calibration = cal.to_json()
        return cal

    def write_json(self, name, payload) -> Path:
        path = write_json(self.out / name, {**payload, "manifest_hash": self.manifest.manifest_hash})
        self.manifest.record(path)
        return path

    def write_csv(self, name, header, rows) -> Path:
        path = write_csv(self.out / name, header, rows)
        self.manifest.record(path)
        return path

    def finish(self, passed: bool, report: Path) -> int:
        self.manifest.write(self.out)
        if passed:
            return EXIT_OK
        print(f"assertion failure; see {report}", file=sys.stderr)
        return EXIT_FAIL


# -- subcommands ----------------------------------------------------------

def cmd_model_info(ctx: Context) -> int:
    model = ctx.model
    res = check_spectrum(model)
    for j, lam in enumerate(model.eigenvalues[:10], start=1):
        print(f"lambda_{j:<2d} = {float(lam)!r}")
    print(f"gamma0    = {model.gamma0!r}")
    print(f"m         = {model.m}")
    path = ctx.write_json("model_info.json", {
        "eigenvalues": model.eigenvalues[:10], "gamma0": model.gamma0, "m": model.m,
        "n_grid": model.n, "h": model.h, "resolved_modes": model.resolved_modes(),
        "model_hash": model.digest, "checks": res.to_json()})
    return ctx.finish(res.passed, path)


def cmd_calibrate(ctx: Context) -> int:
    args = ctx.args
    lo, hi = args.M_range or ctx.config.M_range
    sf = args.safety_factor if args.safety_factor is not None else ctx.config.safety_factor
    cal = default_calibration(ctx.model, (lo, hi), sf)
    ctx.manifest.calibration = cal.to_json()
    res = check_gram(ctx.model, cal, Ms=range(1, hi + 1), rng=ctx.seed)
    print(f"C0 = {cal.C0!r} (raw {cal.raw_C0!r}, safety factor {cal.safety_factor!r})")
    path = ctx.write_json("calibration.json", {**cal.to_json(), "checks": res.to_json()})
    return ctx.finish(res.passed, path)


def cmd_synthesize(ctx: Context) -> int:
    args = ctx.args
    gamma = args.gamma if args.gamma is not None else ctx.config.gamma
    T = args.T if args.T is not None else ctx.config.T
    cal = ctx.calibration(args.calibration)
    law = synthesize(ctx.model, gamma, T, cal.C0, cal.safety_factor)
    res = check_synthesis(ctx.model, law)
    p = law.params
    print(f"N = {p.N}, M = {p.M}, eps0 = {p.eps0!r}, ||F_T|| = {law.op_norm!r}")
    path = ctx.write_json(args.out, {**law.to_json(), "checks": res.to_json()})
    return ctx.finish(res.passed, path)


def initial_state(ctx: Context, spec: str) -> np.ndarray:
    """Parse ``mode:j``, ``random:seed``, ``zero`` or a path to grid values (JSON or CSV)."""
    model = ctx.model
    kind, _, arg = spec.partition(":")
    try:
        if kind == "mode":
            return mode(model, int(arg))
        if kind == "random":
            rng = np.random.default_rng(int(arg) if arg else ctx.seed)
            a = rng.standard_normal(model.n)
            return a / np.linalg.norm(a)
        if kind == "zero":
            return np.zeros(model.n)
    except (ValueError, IndexError) as exc:
        raise ConfigurationError(f"--y0 {spec!r}: {exc}") from None
    path = Path(arg if kind == "file" else spec)
    if not path.exists():
        raise ConfigurationError(f"--y0 {spec!r}: expected mode:j, random:seed, zero or a file")
    if path.suffix == ".json":
        values = np.asarray(read_json(path), dtype=float)
    else:
        values = np.loadtxt(path, delimiter=",", ndmin=1)
    if values.shape != (model.n,):
        raise InputError(f"{path}: expected {model.n} grid values, got shape {values.shape}")
    return model.to_coefficients(values)


def cmd_simulate(ctx: Context) -> int:
    args = ctx.args
    law = FeedbackLaw.from_json(read_json(args.law))
    if law.model_hash and law.model_hash != ctx.model.digest:
        raise ConfigurationError(f"law {args.law} was synthesized for a different model")
    y0 = initial_state(ctx, args.y0)
    periods = args.periods or ctx.config.periods
    traj = simulate(ctx.model, law, y0, periods, output_dt=args.output_dt)
    rep = verify_decay(traj, law)
    ctx.write_csv("trajectory.csv", ["t", "norm"], zip(traj.times, traj.norms))
    print(f"worst two-period ratio {rep.worst_two_period_ratio!r} "
          f"(target {math.exp(-2 * law.params.gamma * law.params.T)!r})")
    path = ctx.write_json("simulate_report.json", {
        **rep.to_json(), "op_norm": law.op_norm, "y0": args.y0, "periods": periods,
        "two_period_ratios": rep.two_period_ratios, "period_norms": traj.period_norms})
    if ctx.plots:
        from .plotting import plot_trajectory
        env = (decay_envelope(law, law.params.gamma, law.params.T, traj.times) * traj.norms[0]
               if law.N else None)
        plot_trajectory(traj.times, traj.norms, ctx.out / "trajectory.png", envelope=env,
                        T=law.params.T, gamma=law.params.gamma)
    return ctx.finish(rep.passed, path)


def cmd_sweep(ctx: Context) -> int:
    args = ctx.args
    gamma = args.gamma if args.gamma is not None else ctx.config.gamma
    grid = args.T_grid or ctx.config.T_grid
    if any(t <= 0 for t in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigurationError("--T-grid must be positive and strictly increasing")
    cal = ctx.calibration(args.calibration)
    laws = [synthesize(ctx.model, gamma, T, cal.C0, cal.safety_factor) for T in grid]
    rows = bound_curves(ctx.model, laws, gamma, cal.C0)
    trend = trend_report(rows)
    ctx.write_csv("sweep.csv", ["T", "op_norm", "m1", "m2_advisory", "N", "M"],
                  ((r.T, r.op_norm, r.m1, r.m2_advisory, r.N, r.M) for r in rows))
    for r in rows:
        print(f"T = {r.T:<6g} N = {r.N} M = {r.M:<3d} ||F_T|| = {r.op_norm:.6e} m1 = {r.m1:.6e}")
    path = ctx.write_json("sweep_report.json", {"gamma": gamma, "T_grid": list(grid),
                                                "trend": trend.to_json()})
    if ctx.plots:
        from .plotting import plot_sweep
        plot_sweep([r.T for r in rows], [r.op_norm for r in rows], [r.m1 for r in rows],
                   ctx.out / "sweep.png", m2=[r.m2_advisory for r in rows])
    # only the lower bound is a hard assertion; the trends are reported
    return ctx.finish(trend.above_m1, path)


def cmd_verify(ctx: Context) -> int:
    cfg = ctx.config
    cal = ctx.calibration(ctx.args.calibration)
    results = run_battery(ctx.model, cfg.gamma, cfg.T, cfg.T_grid, cal, seed=ctx.seed,
                          periods=cfg.periods)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}")
    passed = all(r.passed for r in results)
    path = ctx.write_json("verify_report.json", {"pass": passed,
                                                 "checks": [r.to_json() for r in results]})
    return ctx.finish(passed, path)


# -- parser ---------------------------------------------------------------

def _float_list(text: str):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS lets the global flags appear before or after the subcommand
    common.add_argument("--config", default=argparse.SUPPRESS, help="TOML config file")
    common.add_argument("--output-dir", default=argparse.SUPPRESS, help="directory for outputs")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="RNG seed (u64)")
    common.add_argument("--no-plot", action="store_true", default=argparse.SUPPRESS,
                        help="skip PNG figures")

    parser = argparse.ArgumentParser(prog="heatstab", parents=[common],
                                     description="Sampled-data output feedback for 1-D heat "
                                                 "equations with a potential.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model-info", parents=[common], help="print the low spectrum")
    p.set_defaults(func=cmd_model_info)

    p = sub.add_parser("calibrate", parents=[common], help="fit the observability constant C0")
    p.add_argument("--M-range", type=int, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--safety-factor", type=float)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("synthesize", parents=[common], help="build the feedback law")
    p.add_argument("--gamma", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--calibration", help="calibration JSON (default: calibrate on the fly)")
    p.add_argument("--out", default="law.json", help="law file name inside the output dir")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", parents=[common], help="run the closed loop")
    p.add_argument("--law", required=True, help="law JSON written by synthesize")
    p.add_argument("--y0", default="mode:1", help="mode:j | random:seed | zero | file")
    p.add_argument("--periods", type=int)
    p.add_argument("--output-dt", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep-T", parents=[common], help="operator norm against T")
    p.add_argument("--gamma", type=float)
    p.add_argument("--T-grid", type=_float_list, help="comma-separated T values")
    p.add_argument("--calibration")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", parents=[common], help="run the self-check battery")
    p.add_argument("--calibration")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    for name, default in (("config", None), ("output_dir", None), ("seed", None),
                          ("no_plot", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    try:
        ctx = Context(args)
        return args.func(ctx)
    except (ConfigurationError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HeatStabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
