"""Linear assignment with gating and a rejection threshold."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class CostMatrix:
    values: np.ndarray
    gated: np.ndarray = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            v = v.reshape(0, 0) if v.size == 0 else v.reshape(1, -1)
        g = np.zeros(v.shape, dtype=bool) if self.gated is None else np.asarray(self.gated, dtype=bool)
        if g.shape != v.shape:
            raise ValueError(f"gate shape {g.shape} != cost shape {v.shape}")
        if np.any(v < 0) or np.any(np.isnan(v)):
            raise ValueError("costs must be nonnegative numbers")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "gated", g)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass
class Assignment:
    matches: list = field(default_factory=list)
    unmatched_rows: list = field(default_factory=list)
    unmatched_cols: list = field(default_factory=list)


def hungarian_assign(c: CostMatrix, reject_above: float = np.inf) -> Assignment:
    """Minimum-cost one-to-one assignment over admissible entries.

    Entries that are gated or cost more than ``reject_above`` are
    inadmissible. Among assignments with the most admissible pairs, the one of
    least total cost is returned; inadmissible pairs are never emitted.
    """
    n_rows, n_cols = c.shape
    if n_rows == 0 or n_cols == 0:
        return Assignment([], list(range(n_rows)), list(range(n_cols)))
    forbidden = c.gated | (c.values > reject_above) | ~np.isfinite(c.values)
    allowed_vals = c.values[~forbidden]
    # any single admissible pair must outweigh the sum of all admissible costs
    big = (allowed_vals.sum() + 1.0) * (min(n_rows, n_cols) + 1) if allowed_vals.size else 1.0
    work = np.where(forbidden, big, c.values)
    rows, cols = linear_sum_assignment(work)
    matches = [(int(r), int(k)) for r, k in zip(rows, cols) if not forbidden[r, k]]
    used_r = {r for r, _ in matches}
    used_c = {k for _, k in matches}
    return Assignment(
        matches,
        [r for r in range(n_rows) if r not in used_r],
        [k for k in range(n_cols) if k not in used_c],
    )
