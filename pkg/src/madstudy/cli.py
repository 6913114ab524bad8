"""Command-line front door: ingest -> select -> schedule -> serve -> tally -> rank -> report.

Address and port for `serve` may also come from the MADSTUDY_ADDRESS and
MADSTUDY_PORT environment variables; nothing else is overridable by env.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import service
from .errors import MadstudyError


def _config_from_args(args) -> service.StudyConfig:
    values = {}
    if args.config:
        return service.StudyConfig.parse(args.config)
    for item in args.set or []:
        if "=" not in item:
            raise MadstudyError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        values[key.strip()] = value.strip()
    return service.StudyConfig.from_mapping(values)


def _add_study_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("study_dir", help="study directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="madstudy",
        description="Pick the images two enhancers disagree on most, run a "
        "forced-choice study over HTTP, and rank the methods from the votes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a study directory")
    _add_study_arg(p)
    p.add_argument("--config", help="key=value config file to copy in")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override")

    p = sub.add_parser("ingest", help="validate the pool layout and write the manifest")
    _add_study_arg(p)
    p.add_argument("--pool-dir", required=True, help="directory with inputs/ and per-method dirs")
    p.add_argument("--methods", required=True, help="file listing method names, one per line")

    p = sub.add_parser("select", help="greedy per-pair selection")
    _add_study_arg(p)
    p.add_argument("--reject-file", help="candidate_id,reason lines to exclude and rerun")

    p = sub.add_parser("schedule", help="build the trial schedule and open the study")
    _add_study_arg(p)

    p = sub.add_parser("serve", help="run the local rater service")
    _add_study_arg(p)
    p.add_argument("--address", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--ui-dir", default=None, help="override the rater UI bundle directory")

    p = sub.add_parser("close", help="stop accepting votes")
    _add_study_arg(p)

    for name, help_text in (
        ("tally", "write the count matrix"),
        ("rank", "fit the global ranking"),
        ("report", "write count matrix, ranking, and stability curve"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_study_arg(p)
        p.add_argument(
            "--preliminary",
            action="store_true",
            help="allow running while the study is still open",
        )

    p = sub.add_parser("simulate", help="fill the vote log with ideal Thurstone observers")
    _add_study_arg(p)
    p.add_argument("--mu", required=True, help="file with one ground-truth score per line")
    p.add_argument("--subjects", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)

    return parser


def _cmd_init(args) -> None:
    config = _config_from_args(args)
    service.StudyState.create(args.study_dir, config)
    print(f"initialized study '{config.study_id}' in {args.study_dir}")


def _cmd_ingest(args) -> None:
    state = service.StudyState.load(args.study_dir)
    pool = service.run_ingest(state, args.pool_dir, args.methods)
    print(f"pool manifest: {len(pool.candidates)} candidates x {len(pool.methods)} methods")


def _cmd_select(args) -> None:
    state = service.StudyState.load(args.study_dir)
    rejections = service.load_rejections(args.reject_file) if args.reject_file else None
    written = service.run_select(state, rejections)
    print(f"wrote {len(written)} selection files to {state.selections_dir}")


def _cmd_schedule(args) -> None:
    state = service.StudyState.load(args.study_dir)
    sched = service.run_schedule(state)
    print(f"schedule: {len(sched)} trials; study is open")


def _cmd_serve(args) -> None:
    state = service.StudyState.load(args.study_dir)
    address = args.address or os.environ.get("MADSTUDY_ADDRESS", "127.0.0.1")
    port = args.port
    if port is None:
        port = int(os.environ.get("MADSTUDY_PORT", "8765"))
    server = service.StudyServer(state, address=address, port=port, ui_dir=args.ui_dir)
    print(
        f"serving study '{state.config.study_id}' at http://{server.address}:{server.port}",
        flush=True,
    )
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()


def _cmd_close(args) -> None:
    state = service.StudyState.load(args.study_dir)
    service.run_close(state)
    print("study closed")


def _cmd_tally(args) -> None:
    state = service.StudyState.load(args.study_dir)
    counts = service.run_tally(state, preliminary=args.preliminary)
    print(f"count matrix ({int(counts.sum())} votes) -> {state.reports_dir / 'counts.txt'}")


def _cmd_rank(args) -> None:
    state = service.StudyState.load(args.study_dir)
    scores = service.run_rank(state, preliminary=args.preliminary)
    flag = "converged" if scores.converged else "NOT converged"
    print(f"ranking ({flag}, {scores.iterations} iterations) -> "
          f"{state.reports_dir / 'ranking.txt'}")


def _cmd_report(args) -> None:
    state = service.StudyState.load(args.study_dir)
    service.run_report(state, preliminary=args.preliminary)
    print(f"reports written to {state.reports_dir}")


def _cmd_simulate(args) -> None:
    state = service.StudyState.load(args.study_dir)
    mu = np.array(
        [float(line) for line in Path(args.mu).read_text().split() if line.strip()]
    )
    count = service.run_simulate(state, mu, args.subjects, args.seed)
    print(f"recorded {count} simulated votes")


_COMMANDS = {
    "init": _cmd_init,
    "ingest": _cmd_ingest,
    "select": _cmd_select,
    "schedule": _cmd_schedule,
    "serve": _cmd_serve,
    "close": _cmd_close,
    "tally": _cmd_tally,
    "rank": _cmd_rank,
    "report": _cmd_report,
    "simulate": _cmd_simulate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except MadstudyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
