"""Command-line front end.

``tubelab run CONFIG...`` runs the shrinking-window experiment and writes
``timeseries.csv`` and ``summary.json``.  ``tubelab verify-identities
CONFIG --which 14,15`` writes ``identities.csv``.

Exit status: 0 when every verdict passes, 2 when a run fails or aborts
(hypothesis or regularity failure) or an identity residual exceeds its
tolerance, 1 on configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from .config import ScenarioConfig, parse_config
from .errors import TubeLabError
from .theorem_harness import CSV_COLUMNS, ExperimentResult, run_noncollapse_experiment
from .tube_levelset import write_vtk
from .verification import TABLE_COLUMNS, parse_which, verify_identities

logger = logging.getLogger("tubelab")

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def fmt(value) -> str:
    """Deterministic text form of a table cell: 17 significant digits for reals."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if hasattr(obj, "item"):  # numpy scalars
        return _json_safe(obj.item())
    return obj


def write_table(path: Path, columns, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def write_timeseries(path: Path, result: ExperimentResult) -> Path:
    return write_table(path, CSV_COLUMNS, (r.row() for r in result.records))


def write_summary(path: Path, result: ExperimentResult) -> Path:
    data = _json_safe(result.summary())
    data["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def _out_dir(config: ScenarioConfig, out: str | None, many: bool) -> Path:
    base = Path(out) if out is not None else Path(config.outputs.directory)
    return base / config.name if many else base


def cmd_run(config: ScenarioConfig, out_dir) -> int:
    """Run one experiment and write its outputs; returns the exit status."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory {out_dir}: {exc}", file=sys.stderr)
        return EXIT_ERROR

    hook = None
    every = config.outputs.snapshot_every
    if config.outputs.vtk and every > 0:

        def hook(k, state):
            if k % every == 0:
                write_vtk(state, out_dir / f"theta_{k:05d}.vtk")

    try:
        result = run_noncollapse_experiment(config, on_state=hook)
        write_timeseries(out_dir / "timeseries.csv", result)
        write_summary(out_dir / "summary.json", result)
    except TubeLabError as exc:
        print(f"error: {config.name}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {config.name}: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{config.name}: verdict {result.verdict} ({result.details.get('reason', '')}); outputs in {out_dir}")
    return EXIT_OK if result.passed else EXIT_FAIL


def cmd_verify_identities(config: ScenarioConfig, which, out_dir) -> int:
    out_dir = Path(out_dir)
    try:
        rows = verify_identities(config, which)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_table(out_dir / "identities.csv", TABLE_COLUMNS, (r.row() for r in rows))
    except TubeLabError as exc:
        print(f"error: {config.name}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {config.name}: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for r in rows:
        status = "ok  " if r.passed else "FAIL"
        print(f"{status} {r.identity:<32} {r.resolution:<12} rel_error={r.rel_error:.3e} tol={r.tolerance:.1e}")
    return EXIT_OK if all(r.passed for r in rows) else EXIT_FAIL


def _job(task):
    kind, path, out, which, many = task
    try:
        config = parse_config(path)
    except TubeLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out_dir = _out_dir(config, out, many)
    if kind == "run":
        return cmd_run(config, out_dir)
    return cmd_verify_identities(config, which, out_dir)


def _combine(codes) -> int:
    codes = list(codes)
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    if EXIT_FAIL in codes:
        return EXIT_FAIL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tubelab", description="Regular-tube level-set laboratory.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("configs", nargs="+", metavar="CONFIG", help="scenario TOML file(s)")
        sp.add_argument("--out", metavar="DIR", help="output directory (default: outputs.directory of the config)")
        sp.add_argument("--jobs", type=int, default=1, metavar="N", help="run independent configs in N processes")
        sp.add_argument("--seed", type=int, default=None, help="reserved; every computation is deterministic")

    common(sub.add_parser("run", help="run the shrinking-window volume experiment"))
    vp = sub.add_parser("verify-identities", help="tabulate identity residuals on an oracle scenario")
    common(vp)
    vp.add_argument("--which", default="14,15,23,25,flux", help="comma-separated subset of 14,15,23,25,flux")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_ERROR
    which = None
    if args.command == "verify-identities":
        try:
            which = parse_which(args.which)
        except TubeLabError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ERROR
    many = len(args.configs) > 1
    tasks = [(args.command, path, args.out, which, many) for path in args.configs]
    if args.jobs == 1 or len(tasks) == 1:
        return _combine(_job(t) for t in tasks)
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        return _combine(pool.map(_job, tasks))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
