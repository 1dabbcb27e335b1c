"""Finite particle systems xi_i' = (1/M) sum_j G(t, x_i, x_j, xi_i, xi_j)."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .kernels import InteractionKernel
from .partition import TaggedPartition

BLOWUP_THRESHOLD = 1e12
_ROW_BLOCK = 256


class BlowUpError(RuntimeError):
    """Raised when a trajectory leaves the configured bound (no blow-up hypothesis violated)."""


@dataclass(frozen=True)
class ParticleState:
    """Tags x (repetition allowed for clouds), states xi (M x d), site index per particle."""

    x: np.ndarray
    xi: np.ndarray
    site_index: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        xi = np.asarray(self.xi, dtype=float)
        if xi.ndim == 1:
            xi = xi[:, None]
        if xi.ndim != 2 or xi.shape[0] != x.size:
            raise ValueError(f"{x.size} tags but states of shape {np.shape(self.xi)}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi))):
            raise ValueError("particle state must be finite")
        site = np.arange(x.size) if self.site_index is None else np.asarray(self.site_index, dtype=int)
        if site.shape != x.shape:
            raise ValueError("site_index must have one entry per particle")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "site_index", site)

    @property
    def M(self) -> int:
        return self.x.size

    @property
    def dim(self) -> int:
        return self.xi.shape[1]

    def with_states(self, xi) -> "ParticleState":
        return ParticleState(self.x, xi, self.site_index)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    x: np.ndarray
    dt: float
    scheme: str
    site_index: Optional[np.ndarray] = None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def state_at(self, k: int = -1) -> ParticleState:
        return ParticleState(self.x, self.states[k], self.site_index)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.states.shape[2]
        w.writerow(["t", "i", "x_i"] + [f"xi_{k + 1}" for k in range(d)])
        for t, S in zip(self.times, self.states):
            for i, (x, row) in enumerate(zip(self.x, S)):
                w.writerow([repr(float(t)), i, repr(float(x))] + [repr(float(v)) for v in row])
        return buf.getvalue()


def ordered_row_sum(G: np.ndarray) -> np.ndarray:
    """Sum over the first axis in strictly ascending order.

    A first-axis reduction of a C-contiguous array adds whole rows one after
    another (no pairwise splitting), so it equals the sequential accumulation
    bit for bit; tests pin this against np.add.accumulate.
    """
    return np.add.reduce(np.ascontiguousarray(G), axis=0)


def _rhs_block(k: InteractionKernel, t: float, x: np.ndarray, xi: np.ndarray, rows: range) -> np.ndarray:
    r0, r1 = rows.start, rows.stop
    # G laid out as (j, i, d) so that the j-sum is a sequential first-axis accumulation
    G = k.eval(t, x[r0:r1][None, :], x[:, None], xi[r0:r1][None, :, :], xi[:, None, :])
    G = np.array(G, dtype=float)
    if k.diag is not None:
        i = np.arange(r0, r1)
        G[i, i - r0] += k.diag(t, x[i], x[i], xi[i], xi[i])
    bad = ~np.isfinite(G)
    if bad.any():
        j, i, _ = np.argwhere(bad)[0]
        raise FloatingPointError(f"non-finite kernel output at pair (i={i + r0}, j={j})")
    return ordered_row_sum(G) / x.size


def particle_rhs(k: InteractionKernel, t: float, s: ParticleState, threads: int = 1) -> np.ndarray:
    """Y_i = (1/M) sum_j G(t, x_i, x_j, xi_i, xi_j), j = i included, j ascending."""
    if k.state_dim != s.dim:
        raise ValueError(f"kernel state_dim {k.state_dim} != state dimension {s.dim}")
    blocks = [range(a, min(a + _ROW_BLOCK, s.M)) for a in range(0, s.M, _ROW_BLOCK)]
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda r: _rhs_block(k, t, s.x, s.xi, r), blocks))
    else:
        parts = [_rhs_block(k, t, s.x, s.xi, r) for r in blocks]
    return np.concatenate(parts, axis=0)


def _step(rhs, t, y, h, scheme):
    if scheme == "euler":
        return y + h * rhs(t, y)
    k1 = rhs(t, y)
    k2 = rhs(t + h / 2, y + (h / 2) * k1)
    k3 = rhs(t + h / 2, y + (h / 2) * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def time_grid(t_end: float, dt: float) -> np.ndarray:
    """Uniform grid of step dt from 0; the last step is shortened to land on t_end."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    n = math.ceil(t_end / dt - 1e-9) if t_end > 0 else 0
    ts = np.arange(n + 1) * dt
    if n:
        ts[-1] = t_end
    return ts


def integrate_rhs(rhs: Callable[[float, np.ndarray], np.ndarray], y0: np.ndarray, t_end: float, dt: float,
                  scheme: str = "rk4", blowup: float = BLOWUP_THRESHOLD, stride: int = 1):
    """Fixed-step explicit integration of y' = rhs(t, y); returns (times, states)."""
    if scheme not in ("euler", "rk4"):
        raise ValueError("scheme must be 'euler' or 'rk4'")
    ts = time_grid(t_end, dt)
    y = np.array(y0, dtype=float)
    keep_t, keep_y = [ts[0]], [y.copy()]
    for n in range(1, ts.size):
        y = _step(rhs, ts[n - 1], y, ts[n] - ts[n - 1], scheme)
        m = np.max(np.abs(y)) if y.size else 0.0
        if not np.isfinite(m) or m > blowup:
            raise BlowUpError(
                f"state exceeded {blowup:g} at t={ts[n]:.6g}; the no blow-up hypothesis fails for this kernel")
        if n % stride == 0 or n == ts.size - 1:
            keep_t.append(ts[n])
            keep_y.append(y.copy())
    return np.array(keep_t), np.array(keep_y)


def integrate(k: InteractionKernel, s0: ParticleState, t_end: float, dt: float, scheme: str = "rk4",
              threads: int = 1, blowup: float = BLOWUP_THRESHOLD, stride: int = 1) -> Trajectory:
    """Explicit Euler or RK4 with a fixed step."""
    rhs = lambda t, y: particle_rhs(k, t, s0.with_states(y), threads)
    ts, ys = integrate_rhs(rhs, s0.xi, t_end, dt, scheme, blowup, stride)
    return Trajectory(ts, ys, s0.x, float(dt), scheme, s0.site_index)


def cloud_state(p: TaggedPartition, samples: Sequence[Sequence]) -> ParticleState:
    """K samples per site; tag x_i repeated K times, site index recorded."""
    if len(samples) != p.N:
        raise ValueError(f"expected sample lists for {p.N} sites, got {len(samples)}")
    arrs = [np.asarray(s, dtype=float) for s in samples]
    arrs = [a[:, None] if a.ndim == 1 else a for a in arrs]
    K = arrs[0].shape[0]
    if K < 1:
        raise ValueError("at least one sample per site")
    if any(a.shape != arrs[0].shape for a in arrs):
        raise ValueError("ragged per-site sample lists")
    xi = np.concatenate(arrs, axis=0)
    x = np.repeat(p.tags, K)
    return ParticleState(x, xi, np.repeat(np.arange(p.N), K))


def plain_state(p: TaggedPartition, xi) -> ParticleState:
    return ParticleState(p.tags, xi)
