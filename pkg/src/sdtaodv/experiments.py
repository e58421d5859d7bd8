"""The two comparative experiments, with results cached per code version.

``rates`` sweeps the link rate on the default 25-node scenario; ``nodes``
sweeps the node count at the default rate. Both pair AODV with SD-TAODV
over seeds 1..10. Finished runs are kept under
``<root>/<fingerprint>/<name>/runs/<digest>`` so repeated invocations with
unchanged code reuse them.
"""

from __future__ import annotations

import hashlib
import json
import os
import statistics
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

from .sim.config import ScenarioConfig
from .sweep import AggregateResult, SweepSpec, run_dir, run_sweep

PROTOCOLS = ["AODV", "SDTAODV"]
SEEDS = list(range(1, 11))
RATES = [1.0, 2.0, 5.5, 11.0]
NODE_COUNTS = [15, 25, 35, 50]

EXPERIMENTS = {
    "rates": SweepSpec(ScenarioConfig(), {"protocol": PROTOCOLS, "data_rate": RATES, "seed": SEEDS}),
    "nodes": SweepSpec(ScenarioConfig(), {"protocol": PROTOCOLS, "node_count": NODE_COUNTS, "seed": SEEDS}),
}
X_AXIS = {"rates": "data_rate", "nodes": "node_count"}


# modules that only orchestrate runs; editing them cannot change a run's output
_ORCHESTRATION = {"cli.py", "__main__.py", "experiments.py", "sweep.py"}


def code_fingerprint() -> str:
    """Hash of the simulation sources; changing them invalidates cached runs."""
    h = hashlib.sha256()
    pkg = Path(__file__).parent
    for path in sorted(pkg.rglob("*.py")):
        rel = path.relative_to(pkg).as_posix()
        if rel in _ORCHESTRATION:
            continue
        h.update(rel.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:12]


def results_root() -> Path:
    return Path(os.environ.get("SDTAODV_RESULTS", Path.cwd() / "results"))


def experiment_dir(name: str, root: Optional[Path] = None) -> Path:
    return (root or results_root()) / code_fingerprint() / name


def run_experiment(name: str, root: Optional[Path] = None, workers: Optional[int] = None, seeds: Optional[List[int]] = None) -> AggregateResult:
    spec = EXPERIMENTS[name]
    if seeds is not None:
        spec = SweepSpec(spec.base, {**spec.axes, "seed": list(seeds)})
    return run_sweep(spec, out=experiment_dir(name, root), workers=workers or os.cpu_count() or 1)


def paired(result: AggregateResult, x_axis: str, metric: str) -> Dict[str, Dict[float, Dict[int, float]]]:
    """protocol -> x -> seed -> metric value, for seed-paired comparisons."""
    out: Dict[str, Dict[float, Dict[int, float]]] = defaultdict(lambda: defaultdict(dict))
    for r in result.runs:
        if r.summary is None:
            continue
        key = dict(r.cell)
        out[key["protocol"]][float(key[x_axis])][r.seed] = float(r.summary[metric])
    return out


def run_seconds(name: str, result: AggregateResult, root: Optional[Path] = None) -> List[float]:
    """Wall time of each run as recorded when it was computed."""
    base = experiment_dir(name, root)
    times = []
    for r in result.runs:
        f = run_dir(base, r.digest) / "timing.json" if r.digest else None
        if f is not None and f.exists():
            times.append(json.loads(f.read_text())["seconds"])
    return times


# -- qualitative checks --------------------------------------------------------


@dataclass
class Check:
    criterion: int
    ok: bool
    detail: str

    def line(self) -> str:
        return f"criterion {self.criterion}: {'PASS' if self.ok else 'FAIL'} ({self.detail})"


def _means(table: Dict[float, Dict[int, float]]) -> Dict[float, float]:
    return {x: statistics.fmean(v.values()) for x, v in sorted(table.items())}


def _seed_paired(a: Dict[int, float], b: Dict[int, float]) -> List[int]:
    common = sorted(set(a) & set(b))
    if len(common) != len(a) or len(common) != len(b):
        raise ValueError("seed sets differ between protocols")
    return common


def _nondecreasing(vals: List[float]) -> bool:
    return all(x <= y for x, y in zip(vals, vals[1:]))


def _fmt_series(means: Dict[float, float], digits: int) -> str:
    return " ".join(f"{x:g}:{v:.{digits}f}" for x, v in means.items())


def _complete(table, xs: List[float], seeds: List[int]) -> bool:
    return all(sorted(table[p]) == sorted(xs) and all(sorted(table[p][x]) == sorted(seeds) for x in xs) for p in PROTOCOLS)


def check_rates(result: AggregateResult, min_gain: float = 0.05, seeds: List[int] = SEEDS) -> List[Check]:
    """Throughput gain and monotonicity, and delay ordering, over the rate sweep."""
    thr = paired(result, "data_rate", "throughput")
    if not _complete(thr, RATES, seeds):
        return [Check(5, False, "incomplete rate grid"), Check(6, False, "incomplete rate grid")]
    dly = paired(result, "data_rate", "avg_delay")
    gains = {}
    for rate in sorted(thr["AODV"]):
        seeds = _seed_paired(thr["AODV"][rate], thr["SDTAODV"][rate])
        a = statistics.fmean(thr["AODV"][rate][s] for s in seeds)
        d = statistics.fmean(thr["SDTAODV"][rate][s] - thr["AODV"][rate][s] for s in seeds)
        gains[rate] = d / a
    t_a, t_s = _means(thr["AODV"]), _means(thr["SDTAODV"])
    gain_ok = all(g >= min_gain for g in gains.values())
    mono_ok = _nondecreasing(list(t_a.values())) and _nondecreasing(list(t_s.values()))
    c5 = Check(
        5,
        gain_ok and mono_ok and not result.failed,
        "gain " + " ".join(f"{r:g}:{g:+.3f}" for r, g in gains.items())
        + f"; AODV thr {_fmt_series(t_a, 0)}; SD-TAODV thr {_fmt_series(t_s, 0)}",
    )
    d_a, d_s = _means(dly["AODV"]), _means(dly["SDTAODV"])
    order_ok = all(d_s[r] >= d_a[r] for r in d_a)
    dmono = _nondecreasing(list(d_a.values())) and _nondecreasing(list(d_s.values()))
    c6 = Check(6, order_ok and dmono, f"AODV delay {_fmt_series(d_a, 4)}; SD-TAODV delay {_fmt_series(d_s, 4)}")
    return [c5, c6]


def check_nodes(result: AggregateResult, seeds: List[int] = SEEDS) -> List[Check]:
    """Overhead ordering and growth, and the throughput trend, over the node sweep."""
    msg = paired(result, "node_count", "total_messages")
    thr = paired(result, "node_count", "throughput")
    if not _complete(thr, [float(n) for n in NODE_COUNTS], seeds):
        return [Check(7, False, "incomplete node grid"), Check(8, False, "incomplete node grid")]
    m_a, m_s = _means(msg["AODV"]), _means(msg["SDTAODV"])
    grows = lambda v: all(x < y for x, y in zip(v, v[1:]))
    c7 = Check(
        7,
        all(m_s[n] > m_a[n] for n in m_a) and grows(list(m_a.values())) and grows(list(m_s.values())) and not result.failed,
        f"AODV msgs {_fmt_series(m_a, 0)}; SD-TAODV msgs {_fmt_series(m_s, 0)}",
    )
    t_a, t_s = _means(thr["AODV"]), _means(thr["SDTAODV"])
    falls = lambda v: all(x > y for x, y in zip(v, v[1:]))
    c8 = Check(
        8,
        falls(list(t_a.values())) and falls(list(t_s.values())) and all(t_s[n] >= t_a[n] for n in t_a),
        f"AODV thr {_fmt_series(t_a, 0)}; SD-TAODV thr {_fmt_series(t_s, 0)}",
    )
    return [c7, c8]
