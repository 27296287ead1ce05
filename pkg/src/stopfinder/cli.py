"""``stopfinder`` command line: audit feeds, run experiments, replay logs, render reports.

Exit status is 0 on success, 1 on a data or runtime error (bad file, schema
problem, invalid config) and 2 on a usage error. Output files are written to
a temporary sibling and renamed into place, so a failed run leaves nothing
half-written behind.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

from . import gtfs, stats
from .guidance import GuidanceConfig, replay, timeline_csv
from .perception import CameraIntrinsics, SignSpec, read_replay_log
from .simulator import load_config, run_experiment, trials_from_csv, trials_to_csv

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2


class CliError(Exception):
    """Data/runtime failure reported to the user with exit status 1."""


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from None


def _read_text(path: str) -> str:
    try:
        return _read_bytes(path).decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise CliError(f"{path}: not UTF-8 text ({exc.reason})") from None


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write(out, text)


# subcommands ----------------------------------------------------------------

def cmd_audit(args) -> int:
    try:
        registry = gtfs.parse_stops(_read_bytes(args.stops))
    except gtfs.GtfsError as exc:
        raise CliError(f"{args.stops}: {exc}") from None
    try:
        truth = gtfs.parse_ground_truth(_read_bytes(args.truth))
    except gtfs.GtfsError as exc:
        raise CliError(f"{args.truth}: {exc}") from None
    if args.thresholds:
        thresholds = list(args.thresholds)
    else:
        if not args.bus_length_m > 0:
            raise CliError("--bus-length-m must be > 0")
        thresholds = gtfs.bus_length_thresholds(args.bus_length_m)
    try:
        rep = gtfs.audit_mapping(registry, truth, thresholds)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    if args.out:
        atomic_write(args.out, rep.to_csv())
    _emit(rep.to_json(), args.summary)
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        raise CliError(f"cannot read {args.config}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise CliError(f"{args.config}: {exc}") from None
    if args.workers < 1:
        raise CliError("--workers must be >= 1")
    table = run_experiment(cfg, args.master_seed, workers=args.workers)
    atomic_write(args.out, trials_to_csv(table))
    return EXIT_OK


def load_guidance_config(path: str) -> tuple[GuidanceConfig, CameraIntrinsics, SignSpec]:
    """Read ``camera``, ``sign`` and ``guidance`` sections; an experiment config also works."""
    try:
        doc = json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise CliError(f"{path}: expected a JSON object")
    try:
        return (GuidanceConfig.from_dict(doc.get("guidance", {})),
                CameraIntrinsics(**doc.get("camera", {})),
                SignSpec(**doc.get("sign", {})))
    except (TypeError, ValueError) as exc:
        raise CliError(f"{path}: {exc}") from None


def cmd_replay(args) -> int:
    cfg, cam, sign = load_guidance_config(args.guidance_config)
    try:
        frames = read_replay_log(_read_text(args.log))
        rows = replay(frames, cfg, cam, sign)
    except ValueError as exc:
        raise CliError(f"{args.log}: {exc}") from None
    atomic_write(args.out, timeline_csv(rows))
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        table = trials_from_csv(_read_text(args.trials))
        rep = stats.report(table, n_resamples=args.resamples, seed=args.seed)
    except ValueError as exc:
        raise CliError(f"{args.trials}: {exc}") from None
    render = {"csv": rep.to_csv, "json": rep.to_json, "text": rep.to_text}[args.format]
    _emit(render(), args.out)
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


# parser ---------------------------------------------------------------------

def _positive_float(s: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0: {s!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stopfinder", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("audit", help="compare a GTFS stops.txt against surveyed sign positions")
    p.add_argument("--stops", required=True, help="GTFS stops.txt")
    p.add_argument("--truth", required=True, help="CSV with stop_id,lat,lon,heading_deg")
    p.add_argument("--bus-length-m", type=float, default=gtfs.DEFAULT_BUS_LENGTH_M,
                   help="threshold is two bus lengths (default %(default)s m)")
    p.add_argument("--thresholds", type=_positive_float, nargs="+", metavar="M",
                   help="explicit exceedance thresholds in meters (overrides --bus-length-m)")
    p.add_argument("--out", help="per-stop error CSV")
    p.add_argument("--summary", help="summary JSON (default: stdout)")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("simulate", help="run the paired-trial experiment")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True, help="trial table CSV")
    p.add_argument("--master-seed", type=int, default=None, help="override the config's master seed")
    p.add_argument("--workers", type=int, default=1, help="worker processes (output is identical)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="drive the guidance engine from a frame log")
    p.add_argument("--log", required=True, help="replay log CSV")
    p.add_argument("--guidance-config", required=True,
                   help="JSON with camera, sign and guidance sections")
    p.add_argument("--out", required=True, help="timeline CSV")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report", help="summarise a trial table")
    p.add_argument("--trials", required=True, help="trial table CSV")
    p.add_argument("--format", choices=("csv", "text", "json"), default="text")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--resamples", type=int, default=stats.DEFAULT_RESAMPLES,
                   help="bootstrap resamples for gap intervals")
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p.set_defaults(func=cmd_report)
    return ap


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except CliError as exc:
        print(f"stopfinder {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"stopfinder {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
