"""Command-line front end: ``repen bench`` and ``repen select``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, bench
from .estimator import HistogramSelector
from .exceptions import DegenerateConditioningError, DegeneratePathError, EmptyModelSetError

__all__ = [
    "RunManifest",
    "ConfigError",
    "DataError",
    "NumericalError",
    "parse_config",
    "read_data",
    "write_csv",
    "read_csv",
    "cmd_bench",
    "cmd_select",
    "main",
]

CSV_COLUMNS = ("algorithm", "c_or", "c_or_se", "c_path_or", "c_path_or_se", "n_reps")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


class NumericalError(Exception):
    pass


@dataclass
class RunManifest:
    config: dict
    master_seed: int
    version: str
    outputs: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    experiments: dict = field(default_factory=dict)

    def write(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=str) + "\n")


# -- config files ------------------------------------------------------------

# key -> converter; keys mirror ExperimentConfig plus run-level options
_CONFIG_KEYS = {
    "experiments": lambda v: [e.strip() for e in v.replace(",", " ").split()],
    "n_reps": int,
    "master_seed": int,
    "seed": int,
    "n": int,
    "mc_draws": int,
    "workers": int,
    "out": str,
    "overpen": float,
    "threshold": int,
    "max_failures": int,
}


def parse_config(text):
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lower().replace("-", "_")
        value = value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            out[key] = _CONFIG_KEYS[key](value)
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
    if "seed" in out:
        out.setdefault("master_seed", out.pop("seed"))
    return out


# -- data files --------------------------------------------------------------


def read_data(path):
    """Two numeric columns (x, y), separated by whitespace or commas."""
    xs, ys = [], []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected two columns, got {len(parts)}")
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError:
            raise DataError(f"{path}:{lineno}: not numeric: {raw!r}") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise DataError(f"{path}:{lineno}: non-finite value")
        if not 0.0 <= x <= 1.0:
            raise DataError(f"{path}:{lineno}: x={x} outside [0, 1]")
        xs.append(x)
        ys.append(y)
    if len(xs) < 2:
        raise DataError(f"{path}: need at least two observations")
    return np.array(xs), np.array(ys)


# -- CSV ---------------------------------------------------------------------


def _fmt(v):
    return "%.17g" % v


def write_csv(report, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in report.rows:
            w.writerow([row.algorithm, _fmt(row.c_or), _fmt(row.c_or_se),
                        _fmt(row.c_path_or), _fmt(row.c_path_or_se), row.n_reps])


def read_csv(path):
    """Rows of an emitted CSV as ``AlgorithmResult`` (without exclusion counts)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_COLUMNS:
            raise DataError(f"{path}: unexpected header {header}")
        rows = []
        for rec in reader:
            rows.append(bench.AlgorithmResult(rec[0], *map(float, rec[1:5]), int(rec[5])))
    return rows


# -- commands ----------------------------------------------------------------


def _bench_settings(args):
    settings = {}
    if args.config:
        try:
            settings = parse_config(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    overrides = {
        "n_reps": args.n_reps,
        "master_seed": args.seed,
        "mc_draws": args.mc_draws,
        "workers": args.workers,
        "out": args.out,
        "overpen": args.overpen,
        "threshold": args.threshold,
        "n": args.n,
    }
    settings.update({k: v for k, v in overrides.items() if v is not None})
    if args.all:
        settings["experiments"] = list(bench.EXPERIMENTS)
    elif args.experiment:
        settings["experiments"] = [args.experiment]
    if not settings.get("experiments"):
        raise ConfigError("no experiment selected (use --experiment, --all or 'experiments =')")
    for name in settings["experiments"]:
        if name not in bench.EXPERIMENTS:
            raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(bench.EXPERIMENTS)}")
    return settings


def cmd_bench(args):
    s = _bench_settings(args)
    n_reps = s.get("n_reps", 1000)
    seed = s.get("master_seed", 0)
    out = Path(s.get("out", "."))
    workers = s.get("workers", bench.default_workers())
    max_failures = s.get("max_failures", 0)
    kwargs = {}
    if "overpen" in s:
        kwargs["algorithms"] = bench.paper_algorithms(overpen=s["overpen"])
    if "threshold" in s:
        kwargs["threshold"] = s["threshold"]
    if "mc_draws" in s:
        kwargs["mc_draws"] = s["mc_draws"]
    try:
        configs = [
            bench.experiment(name, n_reps=n_reps, master_seed=seed, n=s.get("n"), **kwargs)
            for name in s["experiments"]
        ]
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None

    manifest = RunManifest(
        config={k: v for k, v in s.items()},
        master_seed=seed,
        version=__version__,
    )
    manifest.timing["python"] = platform.python_version()
    manifest.timing["workers"] = workers
    reports = []
    for config in configs:
        t0 = time.perf_counter()
        report = bench.run_experiment(config, workers=workers)
        elapsed = time.perf_counter() - t0
        if report.failures > max_failures:
            raise NumericalError(
                f"{config.name}: {report.failures} failed replications (budget {max_failures})"
            )
        path = out / f"{config.name}.csv"
        write_csv(report, path)
        reports.append(report)
        manifest.outputs[config.name] = str(path)
        manifest.timing[config.name] = round(elapsed, 3)
        manifest.experiments[config.name] = {
            "echo": report.config,
            "failures": report.failures,
            "oracle_mean": report.oracle_mean,
            "path_excluded": {r.algorithm: r.n_path_excluded for r in report.rows},
            "sigma2_estimator": report.sigma2_estimator,
        }
    table = bench.summarize(reports).to_text()
    (out / "summary.txt").write_text(table + "\n")
    manifest.outputs["summary"] = str(out / "summary.txt")
    manifest.write(out / "manifest.json")
    print(table)
    return EXIT_OK


def _print_path(path, n_candidates=None):
    extra = "" if n_candidates is None else f", {n_candidates} candidates"
    print(f"path ({len(path)} segments{extra}):")
    for lo, hi, mid in path.segments:
        print(f"  [{lo:.6g}, {hi:.6g})  {mid}")


def cmd_select(args):
    x, y = read_data(args.datafile)
    est = HistogramSelector(
        family=args.family,
        method=args.method,
        V=args.V,
        constant=args.constant,
        overpen_factor=args.overpen,
        threshold=args.threshold,
        slope_heuristics=args.slope_heuristics,
        mc_draws=args.mc_draws,
        random_state=args.seed,
    )
    p = print
    try:
        est.fit(x[:, None], y)
    except DegeneratePathError:
        _print_path(est.path_)
        raise
    except (TypeError, ValueError) as exc:
        if isinstance(exc, (EmptyModelSetError, DegenerateConditioningError)):
            raise
        raise ConfigError(str(exc)) from None

    p(f"selected: {est.selected_model_} (D={est.fit_.dim})")
    p("breakpoints: " + " ".join(_fmt(b) for b in est.breakpoints_))
    p("means: " + " ".join(_fmt(m) for m in est.means_))
    if args.slope_heuristics:
        p(f"C_hat: {_fmt(est.C_hat_)}")
        _print_path(est.path_, len(est.candidate_ids_))
    p("candidates:")
    p(f"  {'model':<14}{'D':>5}{'risk':>14}{'penalty':>14}{'total':>14}")
    for mid, dim, risk, pen, total in est.penalty_table():
        p(f"  {mid:<14}{dim:>5}{risk:>14.6g}{pen:>14.6g}{total:>14.6g}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="repen", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run simulation experiments and write oracle-ratio tables")
    b.add_argument("--config", help="flat 'key = value' configuration file")
    grp = b.add_mutually_exclusive_group()
    grp.add_argument("--experiment", choices=sorted(bench.EXPERIMENTS))
    grp.add_argument("--all", action="store_true", help="run S1, S2, HSd1 and HSd2")
    b.add_argument("--n-reps", type=int)
    b.add_argument("--seed", type=int, help="master seed")
    b.add_argument("--n", type=int, help="override the sample size")
    b.add_argument("--mc-draws", type=int, help="Monte-Carlo weight draws instead of closed forms")
    b.add_argument("--workers", type=int, help="worker processes (default: $REPEN_WORKERS or 1)")
    b.add_argument("--out", help="output directory (default: .)")
    b.add_argument("--overpen", type=float, help="factor of the '+' variants (default 1.25)")
    b.add_argument("--threshold", type=int, help="minimum points per cell (default 2)")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("select", help="select a histogram for one data file")
    s.add_argument("datafile")
    s.add_argument("--family", default="regular",
                   help="regular, two-bin, dyadic or dyadic-two-bin, optionally with ':a,b' arguments")
    s.add_argument("--method", default="rademacher",
                   help="efron, rademacher, hold-out, loo, vfold, mallows or vfcv")
    s.add_argument("--V", type=int, default=5)
    s.add_argument("--constant", type=float)
    s.add_argument("--overpen", type=float, default=1.0)
    s.add_argument("--threshold", type=int, default=2)
    s.add_argument("--mc-draws", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--slope-heuristics", action="store_true")
    s.set_defaults(func=cmd_select)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        code, msg = EXIT_CONFIG, f"config error: {exc}"
    except (DataError, EmptyModelSetError) as exc:
        code, msg = EXIT_DATA, f"data error: {exc}"
    except (NumericalError, DegenerateConditioningError, DegeneratePathError, FloatingPointError) as exc:
        code, msg = EXIT_NUMERIC, f"numerical failure: {exc}"
    print(msg, file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
