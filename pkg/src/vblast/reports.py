"""Curve files, run manifests, config files and figure bundles.

CSV layout (one curve per file)::

    abscissa,abscissa_unit,value,ci_low,ci_high,trials,label

Probabilities carry 10 significant digits and dB abscissas 4 decimals.
Analytic curves leave ``ci_low``, ``ci_high`` and ``trials`` empty.
"""

from __future__ import annotations

import configparser
import csv
import datetime as _dt
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import analytic as an
from . import montecarlo as mc
from .channel import Modulation, SystemDims
from .curves import AnalyticCurve, EstimatedCurve, compare_curves
from .receivers import OrderingStrategy

log = logging.getLogger(__name__)

CSV_HEADER = ["abscissa", "abscissa_unit", "value", "ci_low", "ci_high", "trials", "label"]
DEFAULT_LEVELS = (1e-1, 1e-2, 1e-3, 1e-4)
FIGURE_IDS = ("fig2", "fig3", "fig4", "fig5", "fig6")
# budgets of the published figures; desk-scale runs use a tenth of the channels
FULL_OUTAGE_TRIALS = 5_000_000
FULL_CHANNEL_TRIALS = 1_000_000
FULL_NOISE_TRIALS = 100
DESK_SCALE = 10

FORMULA_VERSIONS = {
    "mrc_outage": "incomplete-gamma series, tail form below x=n",
    "f1_bound_closedform": "exact rational table, factorial prefactor, quadrature-checked",
    "f1_bound_asymptote": "(x/2)^d/d!",
    "f1_approx_highsnr": "(x/m)^d/d!",
    "mrc_avg_ber": "Craig/Gauss-Legendre (BPSK), Gauss-Laguerre (BFSK), 96 nodes",
    "bler_approx": "mrc-gain | power-law | two-step",
    "tber_approx": "bler-over-m | square",
}


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending fields."""


# --------------------------------------------------------------------------
# CSV


def _fmt_prob(v) -> str:
    return "%.10g" % v


def _fmt_abscissa(v, unit: str) -> str:
    return "%.4f" % v if unit.endswith("_db") else "%.10g" % v


def curve_to_csv(curve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    estimated = isinstance(curve, EstimatedCurve)
    for i, (a, v) in enumerate(zip(curve.grid, curve.values)):
        if estimated:
            row = [_fmt_prob(v), _fmt_prob(curve.ci_low[i]), _fmt_prob(curve.ci_high[i]), str(int(curve.trials[i]))]
        else:
            row = [_fmt_prob(v), "", "", ""]
        w.writerow([_fmt_abscissa(a, curve.unit), curve.unit] + row + [curve.label])
    return buf.getvalue()


def write_curve_csv(curve, path) -> Path:
    path = Path(path)
    path.write_text(curve_to_csv(curve))
    return path


def read_curve_csv(path):
    """Load a curve file written by :func:`write_curve_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    missing = set(CSV_HEADER) - set(rows[0])
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    unit = rows[0]["abscissa_unit"]
    label = rows[0]["label"]
    grid = [float(r["abscissa"]) for r in rows]
    values = [float(r["value"]) for r in rows]
    if rows[0]["ci_low"] == "":
        return AnalyticCurve(grid, values, label, unit)
    return EstimatedCurve(
        grid, values,
        [float(r["ci_low"]) for r in rows],
        [float(r["ci_high"]) for r in rows],
        [int(r["trials"]) for r in rows],
        label, unit,
    )


def offsets_to_csv(rows) -> str:
    """``rows`` holds ``(label_a, label_b, OffsetRow)`` triples."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["curve_a", "curve_b", "level", "offset_db", "abscissa_a", "abscissa_b", "in_range"])
    for a, b, r in rows:
        def f(v):
            return "" if v is None else "%.4f" % v
        w.writerow([a, b, _fmt_prob(r.level), f(r.offset_db), f(r.abscissa_a), f(r.abscissa_b), int(r.in_range)])
    return buf.getvalue()


# --------------------------------------------------------------------------
# manifest and bundle


@dataclass
class RunManifest:
    task: str
    config: dict
    seed: int | None
    formula_versions: dict = field(default_factory=lambda: dict(FORMULA_VERSIONS))
    started_at: str = ""
    wall_clock_s: float = 0.0
    outputs: list = field(default_factory=list)
    discrepancies: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json() + "\n")
        return path

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


@dataclass
class OutputBundle:
    out_dir: Path
    curves: dict
    offsets: list
    manifest: RunManifest
    manifest_path: Path

    @property
    def integrity_ok(self) -> bool:
        return not self.manifest.discrepancies

    @property
    def files(self) -> list:
        return [self.out_dir / p for p in self.manifest.outputs]


class _Bundle:
    """Collects curves and offset rows, then writes everything at once."""

    def __init__(self, out_dir, task: str, config: dict, seed):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.curves: dict = {}
        self.offsets: list = []
        self.manifest = RunManifest(task, config, seed)
        self.t0 = time.perf_counter()
        self.manifest.started_at = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")

    def add(self, curve):
        if curve.label in self.curves:
            raise ValueError(f"duplicate curve label {curve.label!r}")
        self.curves[curve.label] = curve
        return curve

    def compare(self, label_a, label_b, levels=DEFAULT_LEVELS):
        a, b = self.curves.get(label_a), self.curves.get(label_b)
        if a is None or b is None:
            return
        try:
            rows = compare_curves(a, b, levels)
        except ValueError as exc:
            log.info("skipping comparison %s vs %s: %s", label_a, label_b, exc)
            return
        self.offsets.extend((label_a, label_b, r) for r in rows)

    def finish(self) -> OutputBundle:
        outputs = []
        for label, curve in self.curves.items():
            name = f"{label}.csv"
            write_curve_csv(curve, self.out_dir / name)
            outputs.append(name)
        if self.offsets:
            (self.out_dir / "offsets.csv").write_text(offsets_to_csv(self.offsets))
            outputs.append("offsets.csv")
        m = self.manifest
        m.outputs = outputs + ["manifest.json"]
        # integrity checks are cached per table, so the whole process log is kept
        m.discrepancies = an.discrepancy_log()
        m.wall_clock_s = round(time.perf_counter() - self.t0, 3)
        path = m.write(self.out_dir / "manifest.json")
        return OutputBundle(self.out_dir, self.curves, self.offsets, m, path)


# --------------------------------------------------------------------------
# figures


def _x_grid_db(lo=-30.0, hi=10.0, step=2.5):
    return [float(v) for v in np.arange(lo, hi + 1e-9, step)]


def _snr_grid_db(lo=0.0, hi=25.0, step=2.5):
    return [float(v) for v in np.arange(lo, hi + 1e-9, step)]


def _analytic(bundle, grid_db, values, label, unit="x_db"):
    return bundle.add(AnalyticCurve(grid_db, np.clip(values, 0.0, 1.0), label, unit))


def _budget(full: bool, trials: int | None, published_budget: int) -> int:
    if trials is not None:
        return int(trials)
    return published_budget if full else published_budget // DESK_SCALE


def _outage_figure(bundle, dims, grid_db, trials, seed, threads):
    x = 10.0 ** (np.asarray(grid_db) / 10.0)
    tag = f"{dims.n}x{dims.m}"
    _analytic(bundle, grid_db, an.f1_bound_closedform(dims, x), f"bound_step1_{tag}")
    _analytic(bundle, grid_db, an.f1_approx_highsnr(dims, x), f"highsnr_step1_{tag}")
    if dims == SystemDims(3, 3):
        _analytic(bundle, grid_db, an.mrc_outage(2, x), f"mrc2_{tag}")
        _analytic(bundle, grid_db, an.step_outage_3x3(2, x), f"approx_step2_{tag}")
        _analytic(bundle, grid_db, an.step_outage_3x3(3, x), f"approx_step3_{tag}")
        pairs = [("bound_step1", 1), ("highsnr_step1", 1), ("mrc2", 2), ("approx_step2", 2), ("approx_step3", 3)]
    else:
        _analytic(bundle, grid_db, an.f1_bound_closedform(SystemDims(dims.n, dims.m - 1), x), f"approx_step2_{tag}")
        _analytic(bundle, grid_db, an.mrc_outage(3, x), f"mrc3_{tag}")
        _analytic(bundle, grid_db, an.f1_bound_closedform(SystemDims(dims.n, dims.m - 2), x), f"approx_step3_{tag}")
        pairs = [("bound_step1", 1), ("highsnr_step1", 1), ("approx_step2", 2), ("mrc3", 3), ("approx_step3", 3)]
    if trials <= 0:
        return
    cfg = mc.ExperimentConfig(dims=dims, x_grid_db=grid_db, channel_trials=trials, seed=seed)
    steps = mc.estimate_step_outage(cfg, threads=threads)
    for i, c in enumerate(steps[:3]):
        c.label = f"mc_step{i + 1}_{tag}"
        bundle.add(c)
    for name, step in pairs:
        bundle.compare(f"mc_step{step}_{tag}", f"{name}_{tag}")


FIG4_SIZES = ((2, 2), (3, 3), (4, 4), (3, 2), (4, 3), (4, 2))


def _fig4(bundle, grid_db, trials, seed, threads):
    x = 10.0 ** (np.asarray(grid_db) / 10.0)
    for n, m in FIG4_SIZES:
        dims = SystemDims(n, m)
        tag = f"{n}x{m}"
        _analytic(bundle, grid_db, an.f1_bound_asymptote(dims, x), f"bound_asymptote_{tag}")
        _analytic(bundle, grid_db, an.f1_approx_highsnr(dims, x), f"highsnr_{tag}")
        if trials > 0:
            cfg = mc.ExperimentConfig(dims=dims, x_grid_db=grid_db, channel_trials=trials, seed=seed)
            c = mc.estimate_step_outage(cfg, threads=threads)[0]
            c.label = f"mc_step1_{tag}"
            bundle.add(c)
            bundle.compare(c.label, f"bound_asymptote_{tag}")
            bundle.compare(c.label, f"highsnr_{tag}")


def _error_figure(bundle, sizes, grid_db, trials, noise_trials, seed, threads, with_tber):
    g = 10.0 ** (np.asarray(grid_db) / 10.0)
    bpsk = Modulation.BPSK
    for n, m in sizes:
        dims = SystemDims(n, m)
        tag = f"{n}x{m}"
        _analytic(bundle, grid_db, an.bler_approx(dims, g, bpsk, "mrc-gain"), f"bler_mrc_gain_{tag}", "gamma0_db")
        _analytic(bundle, grid_db, an.bler_approx(dims, g, bpsk, "power-law"), f"bler_power_law_{tag}", "gamma0_db")
        if with_tber:
            _analytic(bundle, grid_db, an.bler_approx(dims, g, bpsk, "two-step"), f"bler_two_step_{tag}", "gamma0_db")
            _analytic(bundle, grid_db, an.tber_approx(dims, g, bpsk), f"tber_bler_over_m_{tag}", "gamma0_db")
        if trials <= 0:
            continue
        cfg = mc.ExperimentConfig(dims=dims, snr_grid_db=grid_db, channel_trials=trials,
                                  noise_trials_per_channel=noise_trials, seed=seed)
        bler, tber, steps = mc.estimate_error_rates(cfg, threads=threads)
        bler.label = f"mc_bler_{tag}"
        bundle.add(bler)
        bundle.compare(bler.label, f"bler_mrc_gain_{tag}")
        bundle.compare(bler.label, f"bler_power_law_{tag}")
        if with_tber:
            tber.label = f"mc_tber_{tag}"
            bundle.add(tber)
            for i, s in enumerate(steps):
                s.label = f"mc_step{i + 1}_ber_{tag}"
                bundle.add(s)
            bundle.compare(bler.label, f"bler_two_step_{tag}")
            bundle.compare(tber.label, f"tber_bler_over_m_{tag}")


def run_figure(figure_id: str, out_dir, trials: int | None = None, noise_trials: int | None = None,
               seed: int = 0, threads: int = 1, full: bool = False) -> OutputBundle:
    """Write the analytic and Monte-Carlo curves of one reference figure.

    ``trials`` overrides the channel budget (0 gives an analytic-only
    bundle). Without it the published budget is divided by ten unless
    ``full`` is set.
    """
    if figure_id not in FIGURE_IDS:
        raise ConfigError(f"figure: unknown id {figure_id!r}, expected one of {', '.join(FIGURE_IDS)}")
    overrides = {"trials": trials, "noise_trials": noise_trials, "threads": threads, "full": full}
    bundle = _Bundle(out_dir, f"figure:{figure_id}", {"figure": figure_id, **overrides}, seed)
    if figure_id in ("fig2", "fig3"):
        dims = SystemDims(3, 3) if figure_id == "fig2" else SystemDims(4, 4)
        _outage_figure(bundle, dims, _x_grid_db(), _budget(full, trials, FULL_OUTAGE_TRIALS), seed, threads)
    elif figure_id == "fig4":
        _fig4(bundle, _x_grid_db(), _budget(full, trials, FULL_OUTAGE_TRIALS), seed, threads)
    else:
        nt = noise_trials if noise_trials is not None else FULL_NOISE_TRIALS
        budget = _budget(full, trials, FULL_CHANNEL_TRIALS)
        if figure_id == "fig5":
            _error_figure(bundle, [(3, 3), (4, 3)], _snr_grid_db(), budget, nt, seed, threads, with_tber=True)
        else:
            sizes = [(m, m) for m in (2, 3, 4, 5, 10)]
            _error_figure(bundle, sizes, _snr_grid_db(), budget, nt, seed, threads, with_tber=False)
    return bundle.finish()


# --------------------------------------------------------------------------
# config files

_LIST_KEYS = {"snr_grid_db", "x_grid_db"}
_SECTION_KEYS = {
    "dims": {"n", "m"},
    "receiver": {"receiver", "ordering", "mod"},
    "simulation": {"channel_trials", "noise_trials_per_channel", "seed", "estimator", "snr_grid_db",
                   "x_grid_db", "auto_stop", "ci_rel_target"},
    "run": {"tasks", "threads"},
}
TASKS = ("outage", "error")


def _format_validation(exc: ValidationError) -> str:
    parts = []
    for e in exc.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "config"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def build_config(values: dict) -> mc.ExperimentConfig:
    """Validate a flat mapping into an :class:`ExperimentConfig`.

    ``n`` and ``m`` are folded into ``dims``; errors name the field path.
    """
    values = dict(values)
    if "n" in values or "m" in values:
        dims = {"n": values.pop("n", None), "m": values.pop("m", None)}
        if dims["n"] is None or dims["m"] is None:
            raise ConfigError("dims: both n and m are required")
        values["dims"] = dims
    if "dims" not in values:
        raise ConfigError("dims: section [dims] with n and m is required")
    try:
        return mc.ExperimentConfig.model_validate(values)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None


def load_config(path, overrides: dict | None = None):
    """Read an INI config; ``overrides`` (CLI flags) win over file values.

    Sections: ``[dims]`` n, m; ``[receiver]`` receiver, ordering, mod;
    ``[simulation]`` channel_trials, noise_trials_per_channel, seed,
    estimator, snr_grid_db, x_grid_db (comma lists), auto_stop,
    ci_rel_target; ``[run]`` tasks (comma list of outage/error), threads.

    Returns ``(config, tasks, threads)``.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"config: {exc}") from None

    flat: dict = {}
    for section in parser.sections():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"{section}: unknown section")
        for key, raw in parser.items(section):
            if key not in _SECTION_KEYS[section]:
                raise ConfigError(f"{section}.{key}: unknown key")
            if key in _LIST_KEYS or key == "tasks":
                flat[key] = [v.strip() for v in raw.split(",") if v.strip()]
            else:
                flat[key] = raw.strip()
    for key, val in (overrides or {}).items():
        if val is not None:
            flat[key] = val

    tasks = flat.pop("tasks", ["outage"])
    bad = [t for t in tasks if t not in TASKS]
    if bad or not tasks:
        raise ConfigError(f"run.tasks: expected a list drawn from {TASKS}, got {tasks}")
    try:
        threads = int(flat.pop("threads", 1))
    except ValueError:
        raise ConfigError("run.threads: not an integer") from None
    return build_config(flat), tuple(tasks), threads


def run_experiment(cfg: mc.ExperimentConfig, tasks, out_dir, threads: int = 1) -> OutputBundle:
    """Run the requested estimators for ``cfg`` and write the bundle."""
    snapshot = {"experiment": cfg.model_dump(mode="json"), "tasks": list(tasks)}
    bundle = _Bundle(out_dir, "custom", snapshot, cfg.seed)
    dims = cfg.dims
    if "outage" in tasks:
        for c in mc.estimate_step_outage(cfg, threads=threads):
            bundle.add(c)
        x = cfg.x_grid
        if dims.m >= 2 and cfg.ordering == OrderingStrategy.OPTIMAL:
            _analytic(bundle, cfg.x_grid_db, an.f1_bound_closedform(dims, x), f"bound_step1_{dims.n}x{dims.m}")
            bundle.compare(f"mc_step1_{mc._label(cfg)}", f"bound_step1_{dims.n}x{dims.m}")
    if "error" in tasks:
        res = mc.estimate_error_rates(cfg, threads=threads)
        for c in [res.bler, res.tber, *res.per_step_ber]:
            if c is not None:
                bundle.add(c)
    return bundle.finish()


def run_custom(config_file, out_dir, overrides: dict | None = None) -> OutputBundle:
    cfg, tasks, threads = load_config(config_file, overrides)
    return run_experiment(cfg, tasks, out_dir, threads)


def replay_manifest(manifest_path, out_dir) -> OutputBundle:
    """Re-run the task recorded in a manifest into ``out_dir``."""
    man = RunManifest.load(manifest_path)
    if man.task == "custom":
        cfg = build_config(man.config["experiment"])
        return run_experiment(cfg, man.config["tasks"], out_dir)
    if man.task.startswith("figure:"):
        c = man.config
        return run_figure(c["figure"], out_dir, trials=c.get("trials"), noise_trials=c.get("noise_trials"),
                          seed=man.seed or 0, threads=c.get("threads", 1), full=c.get("full", False))
    raise ConfigError(f"task: cannot replay {man.task!r}")
