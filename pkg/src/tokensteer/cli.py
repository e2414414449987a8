"""Command line entry points: `tokensteer serve` and `tokensteer profile`.

Profile exit codes: 0 full success, 2 partial (some entries failed),
1 fatal (unusable config/corpus or an unexpected error).
"""
from __future__ import annotations

import argparse
import asyncio
import itertools
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import load_config
from .errors import TokensteerError
from .profiler import (
    SWEEP_GRID,
    baseline_mode,
    load_corpus,
    run_corpus,
    write_report,
)
from .service import build_runtime, create_app_from_config

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_PARTIAL = 2


class _Parser(argparse.ArgumentParser):
    # Usage problems are fatal, not "partial": keep exit code 1 for them
    # so 2 unambiguously means a partially-failed run.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_FATAL)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tokensteer")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the steering service")
    serve.add_argument("--config", required=True, help="JSON config file")

    profile = sub.add_parser("profile", help="profile a prompt corpus")
    profile.add_argument("--corpus", required=True, help="JSON array of corpus entries")
    profile.add_argument("--config", required=True, help="JSON config file")
    profile.add_argument("--scripted", default=None, help="trace directory (offline mode)")
    profile.add_argument("--baseline", type=int, default=None, metavar="N",
                         help="emit N whole completions per entry instead of profiling")
    profile.add_argument("--sweep", default=None,
                         help="comma-separated parameter names to sweep (alpha,beta,tau)")
    profile.add_argument("--out", required=True, help="output directory")
    profile.add_argument("--concurrency", type=int, default=4)
    return parser


def _cmd_serve(args) -> int:
    import uvicorn

    cfg = load_config(args.config)
    app = create_app_from_config(cfg)
    uvicorn.run(app, host=cfg.listen_host, port=cfg.listen_port, log_level="info")
    return EXIT_OK


def _config_for_profiling(args):
    cfg = load_config(args.config)
    if args.scripted:
        cfg.scripted_dir = str(args.scripted)
    cfg.log_dir = ""  # reports are the artifact; no interaction logs
    return cfg.validate()


def _cmd_profile(args) -> int:
    cfg = _config_for_profiling(args)
    entries = load_corpus(args.corpus)
    out_dir = Path(args.out)

    if args.baseline is not None:
        if not 1 <= args.baseline <= 5:
            print(f"--baseline must be in 1..5, got {args.baseline}", file=sys.stderr)
            return EXIT_FATAL
        manager = build_runtime(cfg)
        rows = []
        for entry in sorted(entries, key=lambda e: e.id):
            completions = asyncio.run(baseline_mode(manager, entry, args.baseline))
            rows.append({"entry_id": entry.id, "completions": completions})
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "baseline.json").write_text(
            json.dumps(rows, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        return EXIT_OK

    if args.sweep:
        names = [n.strip() for n in args.sweep.split(",") if n.strip()]
        unknown = [n for n in names if n not in SWEEP_GRID]
        if unknown:
            print(f"unknown sweep parameters: {unknown}", file=sys.stderr)
            return EXIT_FATAL
        grids = [SWEEP_GRID[n] for n in names]
        index = []
        any_failed = False
        for values in itertools.product(*grids):
            point = dict(zip(names, values))
            point_cfg = replace(cfg, **point).validate()
            manager = build_runtime(point_cfg)
            report = asyncio.run(
                run_corpus(
                    manager,
                    entries,
                    config_echo=_echo(point_cfg),
                    concurrency=args.concurrency,
                )
            )
            stem = "report_" + "_".join(f"{n}{v}" for n, v in point.items())
            write_report(report, out_dir, stem=stem)
            index.append({"point": point, "report": f"{stem}.json"})
            any_failed = any_failed or report.failed > 0
        (out_dir / "sweep_index.json").write_text(
            json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return EXIT_PARTIAL if any_failed else EXIT_OK

    manager = build_runtime(cfg)
    report = asyncio.run(
        run_corpus(manager, entries, config_echo=_echo(cfg), concurrency=args.concurrency)
    )
    write_report(report, out_dir)
    return EXIT_PARTIAL if report.failed > 0 else EXIT_OK


def _echo(cfg) -> dict:
    return {
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "tau": cfg.tau,
        "h_max": cfg.h_max,
        "top_k": cfg.top_k,
        "scripted": bool(cfg.scripted_dir),
    }


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            return _cmd_serve(args)
        return _cmd_profile(args)
    except (TokensteerError, ValueError, OSError) as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
