"""Tagged partitions of [0, 1], piecewise-constant fields and Riemann sums."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kernels import METRICS


@dataclass(frozen=True)
class TaggedPartition:
    """Cells [a_i, a_{i+1}) of [0, 1] with tags x_i; the last cell is closed at 1."""

    breakpoints: np.ndarray
    tags: np.ndarray
    c_omega: float = 1.0
    metric: str = "interval"

    def __post_init__(self):
        a = np.asarray(self.breakpoints, dtype=float)
        x = np.asarray(self.tags, dtype=float)
        object.__setattr__(self, "breakpoints", a)
        object.__setattr__(self, "tags", x)
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if a.ndim != 1 or a.size < 2 or a[0] != 0.0 or a[-1] != 1.0:
            raise ValueError("breakpoints must run from 0 to 1")
        if np.any(np.diff(a) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if x.shape != (a.size - 1,):
            raise ValueError("one tag per cell required")
        last_ok = x[-1] <= a[-1]
        if np.any(x < a[:-1]) or np.any(x[:-1] >= a[1:-1]) or not last_ok:
            raise ValueError("each tag must lie in its own cell")
        if np.any(np.diff(x) <= 0):
            raise ValueError("tags must be strictly increasing")
        if np.any(np.diff(a) > self.c_omega / self.N + 1e-15):
            raise ValueError("cell diameter exceeds C_Omega / N")

    @property
    def N(self) -> int:
        return self.tags.size

    @property
    def uniform(self) -> bool:
        return bool(np.allclose(np.diff(self.breakpoints), 1.0 / self.N, rtol=0, atol=1e-15))

    def cell_of(self, x) -> np.ndarray:
        """Index of the cell containing each x (half-open cells, last closed)."""
        x = np.asarray(x, dtype=float)
        if np.any((x < 0.0) | (x > 1.0)):
            raise ValueError("points must lie in [0, 1]")
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        return np.minimum(idx, self.N - 1)


def uniform_partition(N: int, tag_rule: str = "midpoint", metric: str = "interval") -> TaggedPartition:
    """a_i = (i-1)/N with left or midpoint tags, C_Omega = 1."""
    if int(N) != N or N < 1:
        raise ValueError("N must be a positive integer")
    N = int(N)
    a = np.arange(N + 1) / N
    if tag_rule == "left":
        x = np.arange(N) / N
    elif tag_rule == "midpoint":
        x = (np.arange(N) + 0.5) / N
    else:
        raise ValueError("tag_rule must be 'left' or 'midpoint'")
    return TaggedPartition(a, x, 1.0, metric)


@dataclass(frozen=True)
class PartitionField:
    """Piecewise-constant field y(x) = xi_i on cell i."""

    partition: TaggedPartition
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != self.partition.N:
            raise ValueError(f"expected {self.partition.N} rows, got shape {np.shape(self.values)}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __call__(self, x) -> np.ndarray:
        return self.values[self.partition.cell_of(x)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x_i"] + [f"xi_{k + 1}" for k in range(self.dim)])
        for x, row in zip(self.partition.tags, self.values):
            w.writerow([repr(float(x))] + [repr(float(v)) for v in row])
        return buf.getvalue()


def field_from_states(p: TaggedPartition, states) -> PartitionField:
    s = np.asarray(states, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if s.shape[0] != p.N:
        raise ValueError(f"state rows {s.shape[0]} do not match N={p.N}")
    return PartitionField(p, s)


def sup_distance(f: PartitionField, g: PartitionField) -> float:
    """Exact sup-norm distance of two piecewise-constant fields."""
    if f.dim != g.dim:
        raise ValueError("fields have different state dimensions")
    grid = np.union1d(f.partition.breakpoints, g.partition.breakpoints)
    # one probe per union cell: its left end lies in exactly one cell of each field
    probes = grid[:-1]
    diff = f(probes) - g(probes)
    return float(np.max(np.linalg.norm(diff, axis=1)))


def riemann_quadrature(p: TaggedPartition, f: Callable) -> float:
    """(1/N) sum_i f(x_i)."""
    vals = np.asarray(f(p.tags), dtype=float)
    return float(np.sum(vals) / p.N)
