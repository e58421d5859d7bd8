"""Command line: ``run``, ``sweep`` and ``plotdata``.

Exit codes: 0 success, 2 invalid input, 3 one or more sweep cells failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from .sim.config import InvalidConfig, load_toml
from .sim.engine import run
from .sweep import FIGURES, AggregateResult, InvalidSpec, MissingAxis, emit_plot_data, load_sweep, run_sweep

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdtaodv", description="Trust-aware VANET routing simulator")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run one scenario file")
    r.add_argument("scenario")
    r.add_argument("--out", default=None, help="directory for metrics.csv, summary.json and trace.jsonl")
    r.add_argument("--seed-override", type=int, default=None)
    r.add_argument("--trace", action="store_true", help="also write the JSON-lines event trace")

    s = sub.add_parser("sweep", help="run a parameter grid")
    s.add_argument("sweep_file")
    s.add_argument("--out", default="sweep-out")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--seed-override", type=int, default=None, help="first seed; replaces the seed list keeping its length")

    d = sub.add_parser("plotdata", help="emit tidy plot data from a sweep result directory")
    d.add_argument("result_dir")
    d.add_argument("--figure", required=True, choices=sorted(FIGURES))
    d.add_argument("--out", default=None, help="write the CSV here instead of stdout")
    return p


def _cmd_run(args) -> int:
    cfg = load_toml(args.scenario)
    if args.seed_override is not None:
        cfg = cfg.replace(seed=args.seed_override)
    res = run(cfg, trace=args.trace)
    summary = res.metrics.summary()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(res.metrics.to_csv())
        (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=1) + "\n")
        if args.trace:
            (out / "trace.jsonl").write_text(res.trace_lines())
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    spec = load_sweep(args.sweep_file)
    if args.seed_override is not None:
        n = len(spec.seeds())
        spec.axes = {k: v for k, v in spec.axes.items() if k != "seed"}
        spec.axes["seed"] = [args.seed_override + i for i in range(n)]
        spec.replications = 1
        spec.validate()
    result = run_sweep(spec, out=args.out, workers=max(1, args.workers))
    sys.stdout.write(result.to_csv())
    for c in result.cells:
        for f in c.failures:
            print(f"cell {dict(c.key)} failed: {f}", file=sys.stderr)
    return EXIT_FAILED if result.failed else EXIT_OK


def _cmd_plotdata(args) -> int:
    result = AggregateResult.load(args.result_dir)
    text = emit_plot_data(result, args.figure)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    handlers = {"run": _cmd_run, "sweep": _cmd_sweep, "plotdata": _cmd_plotdata}
    try:
        return handlers[args.cmd](args)
    except (InvalidConfig, InvalidSpec, MissingAxis) as exc:
        msg = exc.args[0] if isinstance(exc, MissingAxis) else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
