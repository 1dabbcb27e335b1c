"""Exact Wasserstein-1 distances between discrete measures.

W_p for p > 1 is out of scope; recall only that W_1 <= W_p for probability
measures, so every W_1 bound here is implied by the corresponding W_p bound.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction

import networkx as nx
import numpy as np

from .measures import ConditionalFamily, DiscreteMeasure

LP_ATOM_CAP = 512
_DENOM_LIMIT = 10 ** 6
_COST_SCALE = 2.0 ** 50
_GRID_FALLBACK = 10 ** 12


@dataclass(frozen=True)
class TransportPlan:
    source: np.ndarray
    target: np.ndarray
    mass: np.ndarray
    distance: np.ndarray
    cost: float
    exact_grid: bool = True

    def marginals(self, n1: int, n2: int) -> tuple[np.ndarray, np.ndarray]:
        r = np.bincount(self.source, weights=self.mass, minlength=n1)
        c = np.bincount(self.target, weights=self.mass, minlength=n2)
        return r, c

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["a", "b", "mass", "distance"])
        for a, b, m, d in zip(self.source, self.target, self.mass, self.distance):
            w.writerow([int(a), int(b), repr(float(m)), repr(float(d))])
        return buf.getvalue()


def w1_line(pos1, w1, pos2, w2) -> float:
    """Exact W1 on the real line: integral of |F1 - F2| over the merged grid."""
    pos1, pos2 = np.asarray(pos1, dtype=float).reshape(-1), np.asarray(pos2, dtype=float).reshape(-1)
    w1, w2 = np.asarray(w1, dtype=float).reshape(-1), np.asarray(w2, dtype=float).reshape(-1)
    if pos1.size == 0 or pos2.size == 0:
        raise ValueError("empty measure")
    if pos1.shape != w1.shape or pos2.shape != w2.shape:
        raise ValueError("positions and weights disagree")
    for w in (w1, w2):
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and normalized")
    grid = np.union1d(pos1, pos2)
    F1 = np.cumsum(np.bincount(np.searchsorted(grid, pos1), weights=w1, minlength=grid.size))
    F2 = np.cumsum(np.bincount(np.searchsorted(grid, pos2), weights=w2, minlength=grid.size))
    return float(np.sum(np.abs(F1 - F2)[:-1] * np.diff(grid)))


def ground_distance(mu1: DiscreteMeasure, mu2: DiscreteMeasure, metric: str = "interval") -> np.ndarray:
    """sqrt(sum over blocks of d_Omega(x, x')^2 + |xi - xi'|^2), all atom pairs."""
    if mu1.order != mu2.order or mu1.dim != mu2.dim:
        raise ValueError("measures live on different spaces")
    dx = np.abs(mu1.x[:, None, :] - mu2.x[None, :, :])
    if metric == "torus":
        dx = np.minimum(dx, 1.0 - dx)
    elif metric != "interval":
        raise ValueError(f"unknown metric {metric!r}")
    dxi = mu1.xi[:, None, :, :] - mu2.xi[None, :, :, :]
    return np.sqrt(np.sum(dx ** 2, axis=2) + np.sum(dxi ** 2, axis=(2, 3)))


def integer_masses(w1: np.ndarray, w2: np.ndarray) -> tuple[list[int], list[int], int, bool]:
    """Put both weight vectors on a common integer grid with equal totals.

    Weights are rationalized with denominators up to 1e6 and scaled by the LCM.
    If the LCM is too large, a fixed 1e12 grid is used instead. Any rounding
    residue goes to the largest atom of each side.
    """
    fr1 = [Fraction(float(w)).limit_denominator(_DENOM_LIMIT) for w in w1]
    fr2 = [Fraction(float(w)).limit_denominator(_DENOM_LIMIT) for w in w2]
    L = 1
    for f in fr1 + fr2:
        L = L * f.denominator // math.gcd(L, f.denominator)
        if L > _GRID_FALLBACK:
            break
    exact = L <= _GRID_FALLBACK
    if exact:
        a = [int(f * L) for f in fr1]
        b = [int(f * L) for f in fr2]
    else:
        L = _GRID_FALLBACK
        a = [int(round(float(w) * L)) for w in w1]
        b = [int(round(float(w) * L)) for w in w2]
    for v in (a, b):
        v[int(np.argmax(v))] += L - sum(v)
        if min(v) < 0:
            raise ValueError("weights too small for the integer grid")
    exact = exact and sum(fr1) == 1 and sum(fr2) == 1
    return a, b, L, exact


def w1_lp(mu1: DiscreteMeasure, mu2: DiscreteMeasure, metric: str = "interval") -> tuple[float, TransportPlan]:
    """Exact transportation LP by network simplex on integer masses."""
    if mu1.size > LP_ATOM_CAP or mu2.size > LP_ATOM_CAP:
        raise ValueError(
            f"exact LP is capped at {LP_ATOM_CAP} atoms per side (got {mu1.size}, {mu2.size}); "
            "use w1_line for measures on a line or subsample")
    D = ground_distance(mu1, mu2, metric)
    a, b, L, exact = integer_masses(mu1.weights, mu2.weights)
    dmax = float(D.max())
    scale = _COST_SCALE / dmax if dmax > 0 else 0.0
    C = np.rint(D * scale).astype(np.int64)
    n1, n2 = mu1.size, mu2.size
    G = nx.DiGraph()
    G.add_nodes_from((i, {"demand": -a[i]}) for i in range(n1))
    G.add_nodes_from((n1 + j, {"demand": b[j]}) for j in range(n2))
    G.add_edges_from((i, n1 + j, {"weight": int(C[i, j])}) for i in range(n1) for j in range(n2))
    _, flow = nx.network_simplex(G)
    src, tgt, mass = [], [], []
    for i in range(n1):
        for node, f in flow[i].items():
            if f > 0:
                src.append(i)
                tgt.append(node - n1)
                mass.append(Fraction(f, L))
    src, tgt = np.array(src, dtype=int), np.array(tgt, dtype=int)
    m = np.array([float(v) for v in mass])
    dist = D[src, tgt]
    cost = float(np.sum(m * dist))
    return cost, TransportPlan(src, tgt, m, dist, cost, exact)


def w1(mu1: DiscreteMeasure, mu2: DiscreteMeasure, metric: str = "interval") -> float:
    return w1_lp(mu1, mu2, metric)[0]


def _same_marginal(f1: ConditionalFamily, f2: ConditionalFamily) -> bool:
    return (f1.N == f2.N and np.array_equal(f1.sites, f2.sites)
            and np.max(np.abs(f1.site_weights - f2.site_weights)) <= 1e-12)


def l1nu_w1(f1: ConditionalFamily, f2: ConditionalFamily, metric: str = "interval") -> float:
    """sum_i nu_i W1(mu1_{x_i}, mu2_{x_i}) for families having the same marginal nu."""
    if not _same_marginal(f1, f2):
        raise ValueError("L1_nu W1 is only defined for families having the same marginal ν")
    total = 0.0
    for i in range(f1.N):
        if f1.dim == 1:
            di = w1_line(f1.atoms[i][:, 0], f1.cond_weights[i], f2.atoms[i][:, 0], f2.cond_weights[i])
        else:
            m1 = DiscreteMeasure(np.zeros(f1.atoms[i].shape[0]), f1.atoms[i], f1.cond_weights[i])
            m2 = DiscreteMeasure(np.zeros(f2.atoms[i].shape[0]), f2.atoms[i], f2.cond_weights[i])
            di = w1_lp(m1, m2, metric)[0]
        total += f1.site_weights[i] * di
    return float(total)


def support_norm(mu: DiscreteMeasure) -> float:
    return mu.support_norm()
