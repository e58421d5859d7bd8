"""Batch experiments: grid sweeps over scenario parameters, seed aggregation, plot data."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .sim.config import InvalidConfig, ScenarioConfig, from_dict, with_overrides
from .sim.engine import run
from .sim.metrics import read_samples_csv

MAX_RUNS = 10_000
METRICS = ("avg_delay", "throughput", "total_messages", "delivery_ratio")

FIGURES = {
    "delay_vs_rate": ("data_rate", "avg_delay"),
    "throughput_vs_rate": ("data_rate", "throughput"),
    "throughput_vs_nodes": ("node_count", "throughput"),
    "overhead_vs_nodes": ("node_count", "total_messages"),
}

PLOT_COLUMNS = ("x", "series", "mean", "stddev")


class InvalidSpec(ValueError):
    pass


class MissingAxis(KeyError):
    pass


@dataclass
class SweepSpec:
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    axes: Dict[str, List[Any]] = field(default_factory=dict)
    replications: int = 1
    allow_large: bool = False

    def seeds(self) -> List[int]:
        if "seed" in self.axes:
            return [int(s) for s in self.axes["seed"]]
        return [self.base.seed + i for i in range(self.replications)]

    def cell_axes(self) -> List[str]:
        return [k for k in self.axes if k != "seed"]

    def cells(self) -> List[Tuple[Tuple[str, Any], ...]]:
        names = self.cell_axes()
        return [tuple(zip(names, combo)) for combo in itertools.product(*(self.axes[k] for k in names))]

    def run_count(self) -> int:
        return len(self.cells()) * len(self.seeds())

    def validate(self) -> "SweepSpec":
        problems = []
        if self.replications < 1:
            problems.append("replications: must be >= 1")
        if "seed" in self.axes and self.replications != 1:
            problems.append("replications: give either a seed axis or a replication count, not both")
        probe = self.base.to_dict()
        for name, values in self.axes.items():
            if not isinstance(values, (list, tuple)) or not values:
                problems.append(f"axes.{name}: needs a non-empty list of values")
                continue
            head = name.split(".", 1)[0]
            if name == "seed":
                continue
            if head not in probe or ("." in name and name.split(".", 1)[1] not in probe[head]):
                problems.append(f"axes.{name}: not a scenario parameter")
        if problems:
            raise InvalidSpec("; ".join(problems))
        n = self.run_count()
        if n > MAX_RUNS and not self.allow_large:
            raise InvalidSpec(f"sweep has {n} runs; more than {MAX_RUNS} needs allow_large = true")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "base": self.base.to_dict(),
            "axes": {k: list(v) for k, v in self.axes.items()},
            "replications": self.replications,
        }


def load_sweep(path: str | Path) -> SweepSpec:
    """Read a sweep file: optional ``scenario`` path, ``[base]`` overrides, ``[axes]`` lists."""
    from .sim.config import tomllib

    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise InvalidSpec(f"{path}: {exc.strerror or exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise InvalidSpec(f"{path}: {exc}") from exc
    unknown = set(data) - {"scenario", "base", "axes", "replications", "allow_large"}
    if unknown:
        raise InvalidSpec(f"unknown sweep keys: {sorted(unknown)}")
    try:
        base = ScenarioConfig()
        if "scenario" in data:
            from .sim.config import load_toml

            base = load_toml(path.parent / data["scenario"])
        base = from_dict(data.get("base", {}), base)
    except InvalidConfig as exc:
        raise InvalidSpec(f"base scenario: {exc}") from exc
    spec = SweepSpec(
        base=base,
        axes=dict(data.get("axes", {})),
        replications=int(data.get("replications", 1)),
        allow_large=bool(data.get("allow_large", False)),
    )
    return spec.validate()


# -- results -----------------------------------------------------------------


@dataclass
class RunRecord:
    cell: Tuple[Tuple[str, Any], ...]
    seed: int
    digest: str = ""
    summary: Optional[Dict[str, float]] = None
    error: Optional[str] = None  # RunFailed diagnostic when the run did not complete


@dataclass
class CellResult:
    key: Tuple[Tuple[str, Any], ...]
    n: int
    mean: Dict[str, float]
    std: Dict[str, float]
    failures: List[str] = field(default_factory=list)


@dataclass
class AggregateResult:
    axes: List[str]
    cells: List[CellResult]
    runs: List[RunRecord] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(c.failures for c in self.cells)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = list(self.axes) + ["n", "failed"]
        for m in METRICS:
            head += [f"{m}_mean", f"{m}_std"]
        w.writerow(head)
        for c in self.cells:
            row = [_fmt(v) for _, v in c.key] + [c.n, len(c.failures)]
            for m in METRICS:
                row += [_fmt(c.mean.get(m, math.nan)), _fmt(c.std.get(m, math.nan))]
            w.writerow(row)
        return buf.getvalue()

    def to_json(self) -> str:
        cells = [
            {"key": [list(kv) for kv in c.key], "n": c.n, "mean": c.mean, "std": c.std, "failures": c.failures}
            for c in self.cells
        ]
        return json.dumps({"axes": self.axes, "cells": cells}, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "AggregateResult":
        data = json.loads(text)
        cells = [
            CellResult(tuple((k, v) for k, v in c["key"]), c["n"], c["mean"], c["std"], c["failures"])
            for c in data["cells"]
        ]
        return cls(list(data["axes"]), cells)

    def save(self, out: str | Path) -> None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "aggregate.csv").write_text(self.to_csv())
        (out / "aggregate.json").write_text(self.to_json())

    @classmethod
    def load(cls, out: str | Path) -> "AggregateResult":
        path = Path(out) / "aggregate.json"
        if not path.exists():
            raise InvalidSpec(f"{out}: no aggregate.json (not a sweep result directory)")
        result = cls.from_json(path.read_text())
        index = Path(out) / "runs.json"
        if index.exists():
            for r in json.loads(index.read_text()):
                rec = RunRecord(tuple((k, v) for k, v in r["cell"]), r["seed"], r["digest"], None, r["error"])
                done = run_dir(Path(out), rec.digest) / "summary.json"
                if rec.digest and done.exists():
                    rec.summary = json.loads(done.read_text())
                result.runs.append(rec)
        return result


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def aggregate(axes: Sequence[str], cells: Sequence[Tuple], runs: Sequence[RunRecord]) -> AggregateResult:
    """Seed-aggregate run summaries per cell; order follows the grid, not completion."""
    by_cell: Dict[Tuple, List[RunRecord]] = {c: [] for c in cells}
    for r in runs:
        by_cell[r.cell].append(r)
    out = []
    for c in cells:
        ok = [r.summary for r in by_cell[c] if r.summary is not None]
        fails = [f"seed {r.seed}: {r.error}" for r in by_cell[c] if r.error is not None]
        mean, std = {}, {}
        for m in METRICS:
            vals = [float(s[m]) for s in ok]
            mean[m] = statistics.fmean(vals) if vals else math.nan
            std[m] = statistics.stdev(vals) if len(vals) > 1 else (0.0 if vals else math.nan)
        out.append(CellResult(c, len(ok), mean, std, fails))
    return AggregateResult(list(axes), out, list(runs))


# -- execution ---------------------------------------------------------------


def _cell_config(spec: SweepSpec, cell, seed: int) -> ScenarioConfig:
    changes = dict(cell)
    changes["seed"] = seed
    return with_overrides(spec.base, changes)


def _execute(job) -> Tuple[Optional[Dict[str, float]], Optional[str], Optional[str], float]:
    """Run one scenario; returns (summary, samples csv, error, wall seconds)."""
    t0 = time.perf_counter()
    try:
        res = run(from_dict(job))
    except Exception as exc:  # isolated per cell; recorded, not raised
        return None, None, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0
    return res.metrics.summary(), res.metrics.to_csv(), None, time.perf_counter() - t0


def run_dir(out: Path, digest: str) -> Path:
    return out / "runs" / digest


def run_sweep(spec: SweepSpec, out: Optional[str | Path] = None, workers: int = 1) -> AggregateResult:
    """Run every cell x seed, reusing finished runs found under ``out/runs/<digest>``."""
    spec.validate()
    out_path = Path(out) if out is not None else None
    cells = spec.cells()
    records: List[RunRecord] = []
    jobs: List[Tuple[int, Dict[str, Any]]] = []
    for cell in cells:
        for seed in spec.seeds():
            rec = RunRecord(cell, seed)
            records.append(rec)
            try:
                cfg = _cell_config(spec, cell, seed)
            except InvalidConfig as exc:
                rec.error = f"InvalidConfig: {exc}"
                continue
            rec.digest = cfg.digest()
            if out_path is not None:
                done = run_dir(out_path, rec.digest) / "summary.json"
                if done.exists():
                    rec.summary = json.loads(done.read_text())
                    continue
            jobs.append((len(records) - 1, cfg.to_dict()))

    def finish(idx: int, result) -> None:
        summary, samples, error, seconds = result
        rec = records[idx]
        rec.summary, rec.error = summary, error
        if out_path is not None and summary is not None:
            d = run_dir(out_path, rec.digest)
            d.mkdir(parents=True, exist_ok=True)
            (d / "config.json").write_text(json.dumps(dict(jobs_by_idx[idx]), sort_keys=True, indent=1) + "\n")
            (d / "metrics.csv").write_text(samples)
            # wall time lives apart from summary.json so summaries stay byte-stable
            (d / "timing.json").write_text(json.dumps({"seconds": round(seconds, 3)}) + "\n")
            (d / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")

    jobs_by_idx = dict(jobs)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, os.cpu_count() or 1, len(jobs))) as pool:
            futures = {idx: pool.submit(_execute, cfg) for idx, cfg in jobs}
            for idx, fut in futures.items():
                try:
                    res = fut.result()
                except Exception as exc:
                    res = (None, None, f"{type(exc).__name__}: {exc}", 0.0)
                finish(idx, res)
    else:
        for idx, cfg in jobs:
            finish(idx, _execute(cfg))

    result = aggregate(spec.cell_axes(), cells, records)
    if out_path is not None:
        result.save(out_path)
        (out_path / "sweep.json").write_text(json.dumps(spec.to_dict(), sort_keys=True, indent=1) + "\n")
        runs_index = [
            {"cell": [list(kv) for kv in r.cell], "seed": r.seed, "digest": r.digest, "error": r.error} for r in records
        ]
        (out_path / "runs.json").write_text(json.dumps(runs_index, sort_keys=True, indent=1) + "\n")
    return result


def summary_from_csv(text: str, active_time: float) -> Dict[str, float]:
    """Recompute run metrics from a per-run samples CSV."""
    samples = read_samples_csv(text)
    if not samples:
        return {"avg_delay": 0.0, "throughput": 0.0, "total_messages": 0}
    last = samples[-1]
    total = sum(s.throughput for s in samples)
    return {
        "avg_delay": last.delay,
        "throughput": total / active_time if active_time > 0 else 0.0,
        "total_messages": last.messages,
    }


# -- plot data ---------------------------------------------------------------


def emit_plot_data(result: AggregateResult, figure: str) -> str:
    """Tidy CSV with columns x, series, mean, stddev for one figure."""
    if figure not in FIGURES:
        raise InvalidSpec(f"unknown figure {figure!r}; choose from {sorted(FIGURES)}")
    x_axis, metric = FIGURES[figure]
    if x_axis not in result.axes:
        raise MissingAxis(f"{figure} needs a {x_axis} axis; sweep axes are {result.axes}")
    others = [a for a in result.axes if a != x_axis]
    rows = []
    for c in result.cells:
        if c.n == 0:
            continue
        key = dict(c.key)
        series = ";".join(f"{key[a]}" if a == "protocol" else f"{a}={key[a]}" for a in others) or metric
        rows.append((float(key[x_axis]), series, c.mean[metric], c.std[metric]))
    rows.sort(key=lambda r: (r[1], r[0]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOT_COLUMNS)
    for x, series, mean, std in rows:
        w.writerow([f"{x:g}", series, repr(float(mean)), repr(float(std))])
    return buf.getvalue()
