"""Run metrics: end-to-end delay, throughput and control-message overhead."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List

CSV_COLUMNS = ("time", "delay", "throughput", "messages")


@dataclass
class Sample:
    time: float
    delay: float  # running mean end-to-end delay of delivered packets (s)
    throughput: float  # bytes delivered during the sample interval, per second
    messages: int  # cumulative control transmissions


@dataclass
class MetricsRecord:
    duration: float
    active_time: float
    samples: List[Sample] = field(default_factory=list)
    generated: int = 0
    delivered: int = 0
    bytes_delivered: int = 0
    delay_sum: float = 0.0
    dropped: Counter = field(default_factory=Counter)
    in_flight: int = 0
    total_messages: int = 0
    messages_by_type: Counter = field(default_factory=Counter)
    data_transmissions: int = 0

    @property
    def avg_delay(self) -> float:
        return self.delay_sum / self.delivered if self.delivered else 0.0

    @property
    def throughput(self) -> float:
        """Mean delivered bytes per second while traffic was active."""
        return self.bytes_delivered / self.active_time if self.active_time > 0 else 0.0

    @property
    def delivery_ratio(self) -> float:
        return self.delivered / self.generated if self.generated else 0.0

    @property
    def total_dropped(self) -> int:
        return sum(self.dropped.values())

    def conserved(self) -> bool:
        return self.generated == self.delivered + self.total_dropped + self.in_flight

    def summary(self) -> Dict[str, float]:
        out = {
            "avg_delay": self.avg_delay,
            "throughput": self.throughput,
            "total_messages": self.total_messages,
            "generated": self.generated,
            "delivered": self.delivered,
            "dropped": self.total_dropped,
            "in_flight": self.in_flight,
            "delivery_ratio": self.delivery_ratio,
        }
        for reason, n in sorted(self.dropped.items()):
            out[f"dropped_{reason}"] = n
        for kind, n in sorted(self.messages_by_type.items()):
            out[f"messages_{kind}"] = n
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for s in self.samples:
            w.writerow([f"{s.time:g}", repr(s.delay), repr(s.throughput), s.messages])
        return buf.getvalue()


def read_samples_csv(text: str) -> List[Sample]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [Sample(float(r["time"]), float(r["delay"]), float(r["throughput"]), int(r["messages"])) for r in rows]
