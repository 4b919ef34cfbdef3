from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from .errors import BudgetViolation, ValidationError


def integer_adjust(x_relaxed, budget: float | None = None, *, with_info: bool = False):
    """Budget-preserving rounding of relaxed charger counts.

    Floors every entry, then hands ``delta = round(sum(x) - sum(floor(x)))``
    remaining units (round half up) to the entries with the largest
    fractional parts; ties go to the lowest index, i.e. the lowest node id
    for node-sorted input. The total becomes ``round(sum(x))`` and no entry
    moves by a full unit.

    Accepts a sequence/array or a ``{node: value}`` mapping (returned in the
    same shape). ``with_info=True`` also returns ``(s_initial, delta)``.
    """
    keys = None
    if isinstance(x_relaxed, Mapping):
        keys = sorted(x_relaxed)
        values = np.array([x_relaxed[k] for k in keys], dtype=float)
    else:
        values = np.asarray(x_relaxed, dtype=float)
    if np.any(~np.isfinite(values)) or np.any(values < 0):
        raise ValidationError("relaxed placements must be finite and non-negative", "x_nonnegative")

    floors = np.floor(values)
    frac = values - floors
    s_initial = int(floors.sum())
    # Round half up so that s_initial + delta == round(sum(x)) for any s_initial.
    delta = int(math.floor(math.fsum(values) + 0.5)) - s_initial
    delta = max(0, min(delta, len(values)))
    # Stable sort keeps the lowest index first among equal fractions; the
    # rounding to 12 places makes 2.3 - 2 tie with 0.3.
    order = np.argsort(-np.round(frac, 12), kind="stable")
    out = floors.copy()
    out[order[:delta]] += 1.0
    total = int(out.sum())
    if budget is not None and total > budget:
        raise BudgetViolation(f"rounded total {total} exceeds budget {budget}")

    if keys is not None:
        result = {k: int(v) for k, v in zip(keys, out)}
    else:
        result = out.astype(int)
    if with_info:
        return result, s_initial, delta
    return result
