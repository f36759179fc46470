"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 formula-integrity
discrepancy (outputs are still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import analytic as an
from . import reports
from .channel import Modulation, SystemDims
from .curves import AnalyticCurve
from .montecarlo import Estimator
from .receivers import OrderingStrategy, ReceiverKind

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INTEGRITY = 3

ANALYTIC_QUANTITIES = {
    # name: (abscissa unit, needs m >= 2)
    "f1-bound": ("x_db", True),
    "f1-bound-quadrature": ("x_db", True),
    "f1-bound-asymptote": ("x_db", False),
    "f1-highsnr": ("x_db", False),
    "f1-unordered": ("x_db", False),
    "f1-lower": ("x_db", False),
    "bler-mrc-gain": ("gamma0_db", False),
    "bler-power-law": ("gamma0_db", False),
    "bler-two-step": ("gamma0_db", False),
    "tber": ("gamma0_db", False),
}


def _grid(text: str):
    """``lo:hi:step`` or a comma list."""
    try:
        if ":" in text:
            lo, hi, step = (float(v) for v in text.split(":"))
            return [float(v) for v in np.arange(lo, hi + step * 1e-6, step)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; use lo:hi:step or a comma list") from None


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="64-bit RNG seed")
    p.add_argument("--trials", type=int, default=None, help="channel realizations")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--out-dir", type=Path, default=Path("out"), help="output directory")
    return p


def _system(p, receiver=True):
    p.add_argument("--n", type=int, required=True, help="receive antennas")
    p.add_argument("--m", type=int, required=True, help="transmit antennas")
    if receiver:
        p.add_argument("--receiver", choices=[k.value for k in ReceiverKind], default=ReceiverKind.ZF_SIC.value)
        p.add_argument("--ordering", choices=[o.value for o in OrderingStrategy],
                       default=OrderingStrategy.OPTIMAL.value)
    p.add_argument("--mod", choices=[m.value for m in Modulation], default=Modulation.BPSK.value)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="vblast", description="Outage and error rates of ordered ZF V-BLAST")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-outage", parents=[common], help="Monte-Carlo per-step outage")
    _system(p)
    p.add_argument("--x-grid-db", type=_grid, default=None, help="normalized SNR grid in dB")

    p = sub.add_parser("simulate-error", parents=[common], help="Monte-Carlo BLER/TBER/per-step BER")
    _system(p)
    p.add_argument("--snr-grid-db", type=_grid, default=None, help="average SNR grid in dB")
    p.add_argument("--noise-trials", type=int, default=None, help="noise draws per channel")
    p.add_argument("--estimator", choices=[e.value for e in Estimator], default=Estimator.SYMBOL.value)

    p = sub.add_parser("analytic", parents=[common], help="evaluate a closed form on a grid")
    _system(p, receiver=False)
    p.add_argument("quantity", choices=sorted(ANALYTIC_QUANTITIES))
    p.add_argument("--grid-db", type=_grid, default=None, help="x (outage) or gamma0 (error rate) grid in dB")
    p.add_argument("--convention", choices=["factorial", "printed"], default="factorial",
                   help="prefactor reading for the closed-form coefficient table")

    p = sub.add_parser("figure", parents=[common], help="reference figure bundle")
    p.add_argument("figure_id", metavar="id", help="one of " + ", ".join(reports.FIGURE_IDS))
    p.add_argument("--full", action="store_true", help="run the published trial budgets")
    p.add_argument("--noise-trials", type=int, default=None)

    p = sub.add_parser("compare", parents=[common], help="horizontal dB offsets between two curve files")
    p.add_argument("curve_a", type=Path)
    p.add_argument("curve_b", type=Path)
    p.add_argument("--levels", type=_grid, default=list(reports.DEFAULT_LEVELS))

    p = sub.add_parser("coeff-table", parents=[common], help="print the closed-form coefficient table")
    p.add_argument("n", type=int)
    p.add_argument("m", type=int)
    p.add_argument("--convention", choices=["factorial", "printed"], default="factorial")

    p = sub.add_parser("run", parents=[common], help="run an INI config or replay a manifest")
    p.add_argument("config", type=Path)
    return parser


def _experiment_values(args) -> dict:
    vals = {"n": args.n, "m": args.m, "receiver": args.receiver, "ordering": args.ordering, "mod": args.mod}
    for key, attr in (("seed", "seed"), ("channel_trials", "trials")):
        if getattr(args, attr) is not None:
            vals[key] = getattr(args, attr)
    return vals


def _analytic_curve(args) -> AnalyticCurve:
    try:
        dims = SystemDims(args.n, args.m)
    except ValueError as exc:
        raise reports.ConfigError(f"dims: {exc}") from None
    unit, needs_pair = ANALYTIC_QUANTITIES[args.quantity]
    if needs_pair and dims.m < 2:
        raise reports.ConfigError("dims: this quantity needs m >= 2")
    default = reports._x_grid_db() if unit == "x_db" else reports._snr_grid_db()
    grid_db = args.grid_db or default
    v = 10.0 ** (np.asarray(grid_db) / 10.0)
    mod = Modulation(args.mod)
    q = args.quantity
    if q == "f1-bound":
        table = an.build_coefficient_table(dims, args.convention)
        vals = an.f1_bound_closedform(dims, v, table=table)
    elif q == "f1-bound-quadrature":
        vals = an.f1_bound_suboptimal_quadrature(dims, v)
    elif q == "f1-bound-asymptote":
        vals = an.f1_bound_asymptote(dims, v)
    elif q == "f1-highsnr":
        vals = an.f1_approx_highsnr(dims, v)
    elif q == "f1-unordered":
        vals = an.f1_unordered(dims, v)
    elif q == "f1-lower":
        vals = an.f1_lower_exchangeable(dims, v)
    elif q == "tber":
        vals = an.tber_approx(dims, v, mod)
    else:
        vals = an.bler_approx(dims, v, mod, q.removeprefix("bler-"))
    label = f"{q}_{dims.n}x{dims.m}" + ("" if unit == "x_db" else f"_{mod.value}")
    return AnalyticCurve(grid_db, np.asarray(vals, dtype=float), label, unit)


def _table_json(table) -> dict:
    def frac(v: Fraction) -> str:
        return str(v)

    return {
        "n": table.dims.n,
        "m": table.dims.m,
        "convention": table.convention,
        "prefactor": table.prefactor,
        "d": {str(p): frac(v) for p, v in sorted(table.d.items())},
        "b": {str(p): frac(v) for p, v in sorted(table.b.items())},
        "a": {f"{p},{l}": frac(v) for (p, l), v in sorted(table.a.items())},
        "exponential_polynomials": {str(l): [frac(c) for c in q]
                                    for l, q in sorted(table.exponential_polynomials().items())},
        "integrity_ok": an.check_table_integrity(table),
    }


def _dispatch(args) -> int:
    cmd = args.command
    if cmd in ("simulate-outage", "simulate-error"):
        vals = _experiment_values(args)
        if cmd == "simulate-outage":
            if args.x_grid_db:
                vals["x_grid_db"] = args.x_grid_db
            tasks = ("outage",)
        else:
            if args.snr_grid_db:
                vals["snr_grid_db"] = args.snr_grid_db
            if args.noise_trials is not None:
                vals["noise_trials_per_channel"] = args.noise_trials
            vals["estimator"] = args.estimator
            tasks = ("error",)
        cfg = reports.build_config(vals)
        bundle = reports.run_experiment(cfg, tasks, args.out_dir, threads=args.threads)
    elif cmd == "analytic":
        try:
            curve = _analytic_curve(args)
        except ValueError as exc:
            raise reports.ConfigError(str(exc)) from None
        bundle = reports._Bundle(args.out_dir, "analytic", {"quantity": args.quantity, "n": args.n, "m": args.m,
                                                            "mod": args.mod, "convention": args.convention}, None)
        bundle.add(curve)
        bundle = bundle.finish()
    elif cmd == "figure":
        bundle = reports.run_figure(args.figure_id, args.out_dir, trials=args.trials, noise_trials=args.noise_trials,
                                    seed=args.seed or 0, threads=args.threads, full=args.full)
    elif cmd == "compare":
        a, b = reports.read_curve_csv(args.curve_a), reports.read_curve_csv(args.curve_b)
        rows = reports.compare_curves(a, b, args.levels)
        text = reports.offsets_to_csv([(a.label, b.label, r) for r in rows])
        args.out_dir.mkdir(parents=True, exist_ok=True)
        (args.out_dir / "offsets.csv").write_text(text)
        sys.stdout.write(text)
        return EXIT_OK
    elif cmd == "coeff-table":
        try:
            table = an.build_coefficient_table(SystemDims(args.n, args.m), args.convention)
        except ValueError as exc:
            raise reports.ConfigError(f"dims: {exc}") from None
        info = _table_json(table)
        print(json.dumps(info, indent=2))
        return EXIT_OK if info["integrity_ok"] else EXIT_INTEGRITY
    else:
        overrides = {"seed": args.seed, "channel_trials": args.trials}
        if args.config.suffix == ".json":
            bundle = reports.replay_manifest(args.config, args.out_dir)
        else:
            bundle = reports.run_custom(args.config, args.out_dir, overrides)

    print(f"wrote {len(bundle.manifest.outputs)} files to {bundle.out_dir}")
    if not bundle.integrity_ok:
        for event in bundle.manifest.discrepancies:
            print(f"formula-integrity discrepancy: {event}", file=sys.stderr)
        return EXIT_INTEGRITY
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except reports.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
