from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ValidationError

INTEGER = "integer"
RELAXED = "relaxed"


@dataclass
class Design:
    """Charger counts ``x`` and prices ``y`` per node.

    Nodes missing from either mapping are read as 0.
    """

    x: dict[int, float] = field(default_factory=dict)
    y: dict[int, float] = field(default_factory=dict)
    mode: str = INTEGER

    def __post_init__(self):
        if self.mode not in (INTEGER, RELAXED):
            raise ValidationError(f"unknown design mode {self.mode!r}", "design_mode")
        self.x = {int(k): float(v) for k, v in self.x.items()}
        self.y = {int(k): float(v) for k, v in self.y.items()}
        for node, v in self.x.items():
            if not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"node {node}: charger count must be >= 0", "x_nonnegative")
            if self.mode == INTEGER and v != int(v):
                raise ValidationError(f"node {node}: integer mode requires whole chargers", "x_integer")
        for node, v in self.y.items():
            if not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"node {node}: price must be >= 0", "y_nonnegative")

    @classmethod
    def empty(cls, mode: str = INTEGER) -> "Design":
        return cls({}, {}, mode)

    @classmethod
    def from_arrays(cls, nodes, x: np.ndarray, y: np.ndarray, mode: str) -> "Design":
        xs = {n: float(v) for n, v in zip(nodes, x) if v > 0}
        ys = {n: float(y[i]) for i, n in enumerate(nodes) if x[i] > 0}
        return cls(xs, ys, mode)

    def arrays(self, nodes) -> tuple[np.ndarray, np.ndarray]:
        x = np.array([self.x.get(n, 0.0) for n in nodes], dtype=float)
        y = np.array([self.y.get(n, 0.0) for n in nodes], dtype=float)
        return x, y

    def total_chargers(self) -> float:
        return math.fsum(self.x.values())

    def open_nodes(self) -> list[int]:
        return sorted(n for n, v in self.x.items() if v > 0)

    def is_integral(self) -> bool:
        return all(v == int(v) for v in self.x.values())

    def normalized(self) -> "Design":
        """Drop closed stations and their prices."""
        xs = {n: v for n, v in sorted(self.x.items()) if v > 0}
        ys = {n: self.y.get(n, 0.0) for n in xs}
        return Design(xs, ys, self.mode)

    def stations_label(self) -> str:
        return ";".join(f"{n}:{_num(self.x[n])}:{self.y.get(n, 0.0):.4f}" for n in self.open_nodes())


def _num(v: float) -> str:
    return str(int(v)) if v == int(v) else f"{v:.4f}"
