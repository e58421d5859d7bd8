"""Random-waypoint mobility advanced in fixed ticks."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import List, Sequence, Tuple


@dataclass
class Walker:
    x: float
    y: float
    tx: float
    ty: float
    speed: float
    pause_left: float = 0.0
    static: bool = False


class RandomWaypoint:
    def __init__(
        self,
        n: int,
        area: Tuple[float, float],
        speed_min: float,
        speed_max: float,
        pause: float,
        rng: random.Random,
        static: Sequence[int] = (),
        fixed: dict | None = None,
    ):
        self.area = (float(area[0]), float(area[1]))
        self.speed_min = speed_min
        self.speed_max = speed_max
        self.pause = pause
        self.rng = rng
        fixed = fixed or {}
        self.walkers: List[Walker] = []
        for i in range(n):
            if i in fixed:
                x, y = fixed[i]
            else:
                x, y = self._point()
            w = Walker(x, y, x, y, 0.0, static=i in static or i in fixed)
            if not w.static:
                self._new_leg(w)
            self.walkers.append(w)

    def _point(self) -> Tuple[float, float]:
        return self.rng.uniform(0, self.area[0]), self.rng.uniform(0, self.area[1])

    def _new_leg(self, w: Walker) -> None:
        w.tx, w.ty = self._point()
        w.speed = self.rng.uniform(self.speed_min, self.speed_max)

    def step(self, dt: float) -> None:
        for w in self.walkers:
            if w.static or w.speed <= 0:
                continue
            budget = dt
            while budget > 1e-12:
                if w.pause_left > 0:
                    used = min(w.pause_left, budget)
                    w.pause_left -= used
                    budget -= used
                    if w.pause_left <= 0:
                        self._new_leg(w)
                    continue
                dx, dy = w.tx - w.x, w.ty - w.y
                dist = math.hypot(dx, dy)
                reach = w.speed * budget
                if reach >= dist:
                    w.x, w.y = w.tx, w.ty
                    budget -= dist / w.speed if w.speed > 0 else budget
                    w.pause_left = self.pause
                    if self.pause <= 0:
                        self._new_leg(w)
                        if w.speed <= 0:
                            break
                else:
                    w.x += dx / dist * reach
                    w.y += dy / dist * reach
                    budget = 0.0
            w.x = min(max(w.x, 0.0), self.area[0])
            w.y = min(max(w.y, 0.0), self.area[1])

    def positions(self) -> List[Tuple[float, float]]:
        return [(w.x, w.y) for w in self.walkers]
