"""Named random streams derived from one scenario seed."""

from __future__ import annotations

import hashlib
import random

LABELS = ("mobility", "channel", "mac", "adversary", "traffic", "jitter")


def derive_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def stream(seed: int, label: str) -> random.Random:
    """Independent generator for one subsystem; same (seed, label) gives the same draws."""
    return random.Random(derive_seed(seed, label))
