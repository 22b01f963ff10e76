"""Command-line pipeline: generate-data, synthesize, analyze, simulate, export.

Every subcommand accepts ``--config cfg.json`` holding flat keys named like
the flags (``gamma_hi``, ``n_omega``, ...); flags given on the command line
override the file.  Exit codes: 0 success, 1 domain failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import benchmark as bm
from .analysis import certify_stability, channel_numerator, characteristic, check_performance
from .ctrlparam import ControllerParameterization, default_parameterization
from .errors import LpvFrdError
from .frfdata import CHANNELS, FrfDataset, WeightSet, load_frf_dataset, save_frf_dataset, weight_frf
from .realize import realize
from .simulate import SimScenario, ramp_scenario, simulate_frozen_step, simulate_nonlinear, staircase_scenario
from .synthesis import SynthesisProblem, bisect

DEFAULTS = {
    "Ts": bm.TS,
    "n_omega": bm.N_OMEGA,
    "n_points": bm.N_POINTS,
    "format": None,
    "order": 5,
    "margin": 1e-6,
    "gamma_lo": 1e-2,
    "gamma_hi": 1e3,
    "bisect_tol": 1e-3,
    "channels": ",".join(CHANNELS),
    "out": None,
    "margins": None,
    "duration": 10.0,
    "expect_stable": False,
}


class UsageError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with flat keys mirroring the flags")
    p.add_argument("-v", "--verbose", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpvfrd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-data", help="sample the unbalanced-disk coprime factors")
    _add_common(g)
    g.add_argument("--out", help="dataset path (.csv or .json)")
    g.add_argument("--format", choices=("csv", "json"))
    g.add_argument("--Ts", type=float)
    g.add_argument("--n-omega", dest="n_omega", type=int)
    g.add_argument("--n-points", dest="n_points", type=int)
    g.add_argument("--weights-out", dest="weights_out", help="also write the default weights")

    s = sub.add_parser("synthesize", help="bisect gamma and write the controller")
    _add_common(s)
    s.add_argument("--data")
    s.add_argument("--weights", help="weights JSON (default: built-in disk weights)")
    s.add_argument("--out", help="controller JSON (default controller.json)")
    s.add_argument("--margins", help="per-constraint margins CSV (default margins.csv)")
    s.add_argument("--order", type=int)
    s.add_argument("--margin", type=float)
    s.add_argument("--gamma-lo", dest="gamma_lo", type=float)
    s.add_argument("--gamma-hi", dest="gamma_hi", type=float)
    s.add_argument("--bisect-tol", dest="bisect_tol", type=float)
    s.add_argument("--channels", help="comma-separated subset of S,SG,KS,T")

    a = sub.add_parser("analyze", help="certify stability (and performance) from data")
    _add_common(a)
    a.add_argument("--data")
    a.add_argument("--controller", help="controller JSON, or 'reference' for the reference controller")
    a.add_argument("--weights")
    a.add_argument("--gamma", type=float)
    a.add_argument("--channels")
    a.add_argument("--out", help="certificate JSON")
    a.add_argument("--expect-stable", dest="expect_stable", action="store_true", default=None)

    m = sub.add_parser("simulate", help="frozen step or nonlinear closed-loop simulation")
    _add_common(m)
    m.add_argument("--controller")
    mode = m.add_mutually_exclusive_group()
    mode.add_argument("--frozen", type=float, metavar="P", help="frozen scheduling value")
    mode.add_argument("--nonlinear", action="store_true", default=None)
    m.add_argument("--scenario", help="scenario JSON, or 'staircase' / 'ramp'")
    m.add_argument("--duration", type=float, help="frozen step duration in seconds")
    m.add_argument("--out", help="time-series CSV")

    e = sub.add_parser("export", help="Bode-magnitude tables of the four closed-loop maps")
    _add_common(e)
    e.add_argument("--data")
    e.add_argument("--controller")
    e.add_argument("--weights")
    e.add_argument("--out", help="CSV path")
    return parser


def _resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Merge defaults < config file < command-line flags."""
    cfg = {}
    if getattr(args, "config", None):
        cfg = json.loads(_read_text(args.config))
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
    for key, val in vars(args).items():
        if val is None:
            if key in cfg:
                setattr(args, key, cfg[key])
            elif key in DEFAULTS:
                setattr(args, key, DEFAULTS[key])
    unknown = set(cfg) - set(vars(args))
    if unknown:
        raise UsageError(f"unknown config keys for {args.command}: {sorted(unknown)}")
    return args


def _read_text(path) -> str:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"file not found: {path}")
    return p.read_text()


def _need(args, name: str):
    val = getattr(args, name, None)
    if val is None:
        raise UsageError(f"--{name.replace('_', '-')} is required")
    return val


def _check_out(path) -> Path:
    p = Path(path)
    if not p.parent.is_dir():
        raise UsageError(f"output directory does not exist: {p.parent}")
    return p


def _write(path, text: str) -> None:
    _check_out(path).write_text(text)


def _load_data(args) -> FrfDataset:
    path = _need(args, "data")
    _read_text(path)
    return load_frf_dataset(path)


def _load_weights(args, data: FrfDataset | None, Ts: float) -> WeightSet:
    if getattr(args, "weights", None):
        return WeightSet.from_json(_read_text(args.weights), data.grid if data else None)
    return bm.default_weights(Ts)


def _load_controller(args) -> tuple[ControllerParameterization, dict]:
    spec = _need(args, "controller")
    if spec == "reference":
        return bm.reference_controller(), {}
    obj = json.loads(_read_text(spec))
    return ControllerParameterization.from_dict(obj), obj


def _channels(text) -> tuple[str, ...]:
    chans = tuple(c.strip() for c in str(text).split(",") if c.strip())
    for c in chans:
        if c not in CHANNELS:
            raise UsageError(f"unknown channel {c!r}; choose from {','.join(CHANNELS)}")
    return chans


def _print(obj) -> None:
    print(json.dumps(obj, indent=1))


# --------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    out = _need(args, "out")
    Ts = float(args.Ts)
    grid = bm.default_grid(int(args.n_omega), Ts)
    points = bm.default_points(int(args.n_points))
    ds = bm.generate_dataset(bm.build_unbalanced_disk(), Ts, grid, points)
    save_frf_dataset(ds, _check_out(out), args.format)
    if args.weights_out:
        _write(args.weights_out, bm.default_weights(Ts).to_json(Ts))
    _print({"out": str(out), "n_omega": len(grid), "n_points": len(points), "Ts": Ts})
    return 0


def cmd_synthesize(args) -> int:
    data = _load_data(args)
    Ts = data.grid.Ts
    if Ts is None:
        raise UsageError("synthesis needs discrete-time data")
    weights = _load_weights(args, data, Ts)
    problem = SynthesisProblem(
        data, weights, default_parameterization(Ts, int(args.order)),
        channels=_channels(args.channels), margin=float(args.margin),
        gamma_bracket=(float(args.gamma_lo), float(args.gamma_hi)),
        bisect_tol=float(args.bisect_tol),
    )
    out = args.out or "controller.json"
    margins = args.margins or str(Path(out).with_name("margins.csv"))
    result = bisect(problem)
    ctrl = result.controller.to_dict()
    ctrl["gamma"] = result.gamma
    _write(out, json.dumps(ctrl, indent=1) + "\n")
    _write(margins, result.margins_csv())
    summary = result.summary()
    summary.pop("theta")
    summary.update(controller=str(out), margins=str(margins))
    _print(summary)
    return 0


def cmd_analyze(args) -> int:
    data = _load_data(args)
    ctrl, obj = _load_controller(args)
    stab = certify_stability(data, ctrl)
    report = {"stability": stab.to_dict()}
    ok = stab.stable
    gamma = args.gamma if args.gamma is not None else (obj.get("gamma") if args.weights else None)
    if gamma is not None:
        weights = _load_weights(args, data, data.grid.Ts)
        chans = _channels(args.channels) if args.channels else weights.channels
        cert = check_performance(data, weights, ctrl, float(gamma), chans, stability=stab)
        report["performance"] = cert.to_dict()
        ok = ok and cert.passed
    if args.out:
        _write(args.out, json.dumps(report, indent=1) + "\n")
    n_ok = sum(e.stable for e in stab.entries)
    print(f"stability: {stab.verdict} at {n_ok}/{len(stab.entries)} operating points")
    for e in stab.entries:
        print(f"  p={e.p:.4g}  winding={e.winding}  min|Dp|={e.min_abs:.4g}  {e.verdict}")
    if "performance" in report:
        perf = report["performance"]
        print(f"performance at gamma={perf['gamma']:.6g}: {perf['verdict']} "
              f"(achieved {perf['achieved_gamma']:.6g}, worst margin {perf['worst_margin']:.3g})")
    if args.expect_stable and not ok:
        return 1
    return 0


def cmd_simulate(args) -> int:
    ctrl, _ = _load_controller(args)
    filt = realize(ctrl)
    if args.frozen is not None:
        plant = bm.frozen_discrete(bm.build_unbalanced_disk(), float(args.frozen), ctrl.Ts)
        res = simulate_frozen_step(plant, filt, float(args.frozen), float(args.duration))
    else:
        spec = args.scenario or "staircase"
        if spec == "staircase":
            scenario = staircase_scenario(Ts=ctrl.Ts)
        elif spec == "ramp":
            scenario = ramp_scenario(Ts=ctrl.Ts)
        else:
            scenario = SimScenario.from_json(_read_text(spec))
        res = simulate_nonlinear(bm.DiskParameters(), filt, scenario)
    if args.out:
        _write(args.out, res.to_csv())
    tail = res.t >= res.t[-1] - 1.0
    _print({"samples": int(res.t.size), "max_abs_y": float(np.max(np.abs(res.y))),
            "max_abs_u": float(np.max(np.abs(res.u))),
            "final_abs_error": float(np.max(np.abs(res.e[tail]))), "out": args.out})
    return 0


def bode_table(data: FrfDataset, ctrl: ControllerParameterization, weights: WeightSet) -> str:
    """CSV of ``omega, p, |S|, |SG|, |KS|, |T|`` and ``|W_*|`` per channel."""
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    wch = [ch for ch in CHANNELS if ch in weights.channels]
    out.writerow(["omega", "p"] + [f"|{ch}|" for ch in CHANNELS] + [f"|W_{ch}|" for ch in wch])
    W = {ch: np.abs(weight_frf(weights, ch, data.grid)) for ch in wch}
    for j, p in enumerate(data.points.points):
        Dp, NK, DK = characteristic(data, ctrl, j)
        mags = [np.abs(channel_numerator(ch, data.N[:, j], data.D[:, j], NK, DK) / Dp) for ch in CHANNELS]
        for k, w in enumerate(data.grid.omegas):
            out.writerow([repr(float(w)), repr(float(p))] + [repr(float(m[k])) for m in mags]
                         + [repr(float(W[ch][k])) for ch in wch])
    return buf.getvalue()


def cmd_export(args) -> int:
    data = _load_data(args)
    ctrl, _ = _load_controller(args)
    weights = _load_weights(args, data, data.grid.Ts)
    text = bode_table(data, ctrl, weights)
    out = _need(args, "out")
    _write(out, text)
    _print({"out": str(out), "rows": len(data.grid) * len(data.points)})
    return 0


COMMANDS = {
    "generate-data": cmd_generate,
    "synthesize": cmd_synthesize,
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "export": cmd_export,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args = _resolve(args)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (LpvFrdError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
