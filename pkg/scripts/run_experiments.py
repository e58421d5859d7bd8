"""Run the rate and node-count comparisons, write plot data, print the checks.

    python scripts/run_experiments.py                 # both experiments
    python scripts/run_experiments.py --only rates --workers 8

Finished runs are cached under results/<code fingerprint>/, so an
interrupted invocation resumes where it stopped.
"""

import argparse
import time
from pathlib import Path

from sdtaodv.experiments import EXPERIMENTS, X_AXIS, check_nodes, check_rates, experiment_dir, run_experiment, run_seconds
from sdtaodv.sweep import FIGURES, emit_plot_data


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--only", choices=sorted(EXPERIMENTS), default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--root", type=Path, default=None, help="cache root (default ./results)")
    args = p.parse_args()

    names = [args.only] if args.only else ["rates", "nodes"]
    for name in names:
        t0 = time.perf_counter()
        result = run_experiment(name, root=args.root, workers=args.workers)
        out = experiment_dir(name, args.root)
        for fig, (axis, _) in FIGURES.items():
            if axis == X_AXIS[name]:
                (out / f"{fig}.csv").write_text(emit_plot_data(result, fig))
        secs = run_seconds(name, result, args.root)
        print(f"{name}: {len(result.runs)} runs in {time.perf_counter() - t0:.0f} s, slowest run {max(secs, default=0):.0f} s -> {out}")
        checks = check_rates(result) if name == "rates" else check_nodes(result)
        for c in checks:
            print(c.line())


if __name__ == "__main__":
    main()
