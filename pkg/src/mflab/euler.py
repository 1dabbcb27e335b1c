"""Graph-limit (Euler) equation y_t(x) = int G(t, x, x', y(x), y(x')) dnu(x') and its convergence experiments."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .kernels import BoundBox, InteractionKernel, lipschitz_estimate
from .partition import PartitionField, TaggedPartition, field_from_states, uniform_partition
from .particles import ParticleState, integrate, particle_rhs
from .fitting import RateFit, fit_rate

CONSTANT_SLACK = 1.05


@dataclass(frozen=True)
class EulerProblem:
    kernel: InteractionKernel
    partition: TaggedPartition
    y0: Union[Callable, PartitionField]

    def initial_values(self) -> np.ndarray:
        v = np.asarray(self.y0(self.partition.tags), dtype=float)
        v = v[:, None] if v.ndim == 1 else v
        if not np.all(np.isfinite(v)):
            raise ValueError("initial field must be finite on the tags")
        return v


def euler_rhs(p: EulerProblem, t: float, y, threads: int = 1) -> np.ndarray:
    """(A y)(x_i) = (1/M) sum_j G(t, x_i, x_j, y_i, y_j); the particle right-hand side on the tags."""
    y = np.asarray(y, dtype=float)
    y = y[:, None] if y.ndim == 1 else y
    if y.shape[0] != p.partition.N:
        raise ValueError("field size does not match the quadrature partition")
    return particle_rhs(p.kernel, t, ParticleState(p.partition.tags, y), threads)


def reference_solution(p: EulerProblem, t_end: float, dt: float, scheme: str = "rk4",
                       threads: int = 1) -> PartitionField:
    """Fine-grid surrogate of y(t_end, .): the M-tag system integrated with a fixed step."""
    traj = integrate(p.kernel, ParticleState(p.partition.tags, p.initial_values()), t_end, dt, scheme,
                     threads, stride=10 ** 9)
    return field_from_states(p.partition, traj.final)


def opinion_constant_closed_form(c: float, y0: Callable, mean: Optional[float] = None,
                                 quad_nodes: int = 1 << 16) -> Callable[[float, np.ndarray], np.ndarray]:
    """y(t, x) = m + (y0(x) - m) e^{-c t} for sigma = c, m the nu-mean of y0.

    The mean is taken from a midpoint rule on ``quad_nodes`` cells unless supplied.
    """
    if mean is None:
        xq = (np.arange(quad_nodes) + 0.5) / quad_nodes
        mean = float(np.mean(np.asarray(y0(xq), dtype=float)))

    def y(t, x):
        return mean + (np.asarray(y0(x), dtype=float) - mean) * math.exp(-c * t)

    return y


def holder_estimate(f: Callable, alpha: float = 1.0, nodes: int = 4097) -> float:
    """Sampled Holder constant of f on [0, 1] from neighbouring grid points."""
    x = np.linspace(0.0, 1.0, nodes)
    v = np.asarray(f(x), dtype=float)
    v = v[:, None] if v.ndim == 1 else v
    return float(np.max(np.linalg.norm(np.diff(v, axis=0), axis=1) / np.diff(x) ** alpha))


@dataclass(frozen=True)
class GraphLimitTable:
    N: np.ndarray
    error: np.ndarray
    bound: np.ndarray
    fit: Optional[RateFit]
    L_hat: float
    estimated: bool

    def bound_ok(self, slack: float = CONSTANT_SLACK) -> np.ndarray:
        return self.error <= self.bound * slack

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "error", "bound"])
        for n, e, b in zip(self.N, self.error, self.bound):
            w.writerow([int(n), repr(float(e)), repr(float(b))])
        if self.fit is not None:
            w.writerow(["# slope", repr(float(self.fit.slope)), f"R2={self.fit.r2!r}"])
        return buf.getvalue()


def _reference_lookup(reference, t_end: float):
    if isinstance(reference, PartitionField):
        return lambda x: reference(x)
    return lambda x: np.asarray(reference(t_end, x), dtype=float).reshape(len(x), -1)


def _estimate_L(k: InteractionKernel, states: np.ndarray, t_end: float, samples: int, seed: int) -> float:
    box = BoundBox.hull(states, time=(0.0, t_end), pad=1e-6)
    if k.lipschitz_bound is not None:
        return float(k.lipschitz_bound(box))
    return max(lipschitz_estimate(k, box, samples, seed, "all"), lipschitz_estimate(k, box, samples, seed, "xi"))


def graph_limit_experiment(k: InteractionKernel, y0: Callable, N_list: Sequence[int], t_end: float, dt: float,
                           reference: Union[int, Callable, PartitionField] = 2048, tag_rule: str = "left",
                           scheme: str = "rk4", y0_holder: Optional[float] = None, samples: int = 256,
                           seed: int = 0, threads: int = 1) -> GraphLimitTable:
    """max_i |y(t, x_i) - xi_i(t)| for each N against the Euler reference.

    ``reference`` is either a fine tag count M (integrated here, M >= 4 max N),
    a closed form y(t, x), or a precomputed fine field. The bound is
    (C^alpha / N^alpha)(1 + Hol(y0)) e^{2 t L} with L estimated on the hull.
    """
    N_list = [int(n) for n in N_list]
    if N_list != sorted(N_list):
        raise ValueError("N_list must be ascending")
    if isinstance(reference, (int, np.integer)):
        M = int(reference)
        if M < 4 * max(N_list):
            raise ValueError(f"reference M={M} is too small; need M >= 4 * max(N) = {4 * max(N_list)}")
        fine = uniform_partition(M, tag_rule, k.metric)
        reference = reference_solution(EulerProblem(k, fine, y0), t_end, dt, scheme, threads)
    look = _reference_lookup(reference, t_end)
    alpha = k.holder_alpha
    hol = holder_estimate(y0, alpha) if y0_holder is None else float(y0_holder)
    errors, hulls = [], []
    for N in N_list:
        part = uniform_partition(N, tag_rule, k.metric)
        v0 = np.asarray(y0(part.tags), dtype=float)
        traj = integrate(k, ParticleState(part.tags, v0), t_end, dt, scheme, threads)
        ref = look(part.tags)
        errors.append(float(np.max(np.linalg.norm(traj.final - ref, axis=1))))
        hulls.append(traj.states.reshape(-1, k.state_dim))
    L = _estimate_L(k, np.concatenate(hulls), t_end, samples, seed)
    N_arr = np.array(N_list)
    c_omega = 1.0
    bound = (c_omega ** alpha / N_arr ** alpha) * (1.0 + hol) * math.exp(2.0 * t_end * L)
    err = np.array(errors)
    fit = fit_rate(list(zip(N_arr, err))) if np.count_nonzero(err > 0) >= 3 else None
    return GraphLimitTable(N_arr, err, bound, fit, L, k.lipschitz_bound is None)


def lift_to_fine(coarse: TaggedPartition, values: np.ndarray, fine: TaggedPartition) -> np.ndarray:
    """Values of the piecewise-constant coarse field at the fine tags."""
    return np.asarray(values, dtype=float)[coarse.cell_of(fine.tags)]


def graph_limit_experiment_2(k: InteractionKernel, xi0: Callable[[TaggedPartition], np.ndarray],
                             N_list: Sequence[int], t_end: float, dt: float, M: int = 2048,
                             tag_rule: str = "left", scheme: str = "rk4", samples: int = 256, seed: int = 0,
                             threads: int = 1) -> GraphLimitTable:
    """Particle solution against the Euler solution started from the lifted y_{Xi_0}.

    For each N the reference is integrated on M fine tags from the
    piecewise-constant initial field; the bound is 2 (C^alpha / N^alpha) e^{2 t L}.
    With M = N the two systems coincide.
    """
    N_list = [int(n) for n in N_list]
    if N_list != sorted(N_list):
        raise ValueError("N_list must be ascending")
    errors, hulls = [], []
    for N in N_list:
        part = uniform_partition(N, tag_rule, k.metric)
        v0 = np.asarray(xi0(part), dtype=float)
        v0 = v0[:, None] if v0.ndim == 1 else v0
        traj = integrate(k, ParticleState(part.tags, v0), t_end, dt, scheme, threads)
        if M == N:
            fine = part
        else:
            if M < 4 * N:
                raise ValueError(f"reference M={M} is too small; need M >= 4 * N = {4 * N}")
            fine = uniform_partition(M, tag_rule, k.metric)
        y_fine0 = lift_to_fine(part, v0, fine)
        rtraj = integrate(k, ParticleState(fine.tags, y_fine0), t_end, dt, scheme, threads, stride=10 ** 9)
        ref = field_from_states(fine, rtraj.final)(part.tags)
        errors.append(float(np.max(np.linalg.norm(traj.final - ref, axis=1))))
        hulls.append(traj.states.reshape(-1, k.state_dim))
    L = _estimate_L(k, np.concatenate(hulls), t_end, samples, seed)
    N_arr = np.array(N_list)
    bound = 2.0 * (1.0 / N_arr ** k.holder_alpha) * math.exp(2.0 * t_end * L)
    err = np.array(errors)
    fit = fit_rate(list(zip(N_arr, err))) if np.count_nonzero(err > 0) >= 3 else None
    return GraphLimitTable(N_arr, err, bound, fit, L, k.lipschitz_bound is None)
