"""Discretized bid spaces.

Bids live on a finite grid of values in [0, 1]. Everything downstream
identifies a bid by its integer grid index, so equality and ordering are
exact integer comparisons; the float values are only consulted when
computing utilities.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Slack used when comparing float bid values against float valuations.
VALUE_EPS = 1e-12


@dataclass(frozen=True)
class BidGrid:
    """Strictly increasing grid of allowed bid values spanning [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("bid grid needs at least two values")
        if np.any(np.diff(values) <= 0):
            raise ValueError("bid grid values must be strictly increasing")
        if values[0] != 0.0 or values[-1] != 1.0:
            raise ValueError("bid grid must start at 0 and end at 1")

    @property
    def count(self) -> int:
        return int(self.values.size)

    def index_of(self, value: float) -> int:
        """Exact grid index of `value`; raises if not a grid point."""
        idx = int(np.argmin(np.abs(self.values - value)))
        if abs(self.values[idx] - value) > VALUE_EPS:
            raise ValueError(f"{value} is not a grid value")
        return idx

    def indices_of(self, values) -> np.ndarray:
        return np.array([self.index_of(v) for v in np.asarray(values, dtype=float)], dtype=np.int64)

    def __len__(self) -> int:
        return self.count


def make_even_grid(count: int) -> BidGrid:
    """Evenly spaced grid {i/(count-1)} for i = 0..count-1."""
    if count < 2:
        raise ValueError("grid size must be at least 2")
    return BidGrid(np.linspace(0.0, 1.0, count))
