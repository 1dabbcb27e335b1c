"""Discrete measures on Omega x R^d, their canonical constructions and moments."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .kernels import InteractionKernel
from .partition import PartitionField, TaggedPartition
from .particles import ParticleState, ordered_row_sum

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted atoms on (Omega x R^d)^n.

    ``x`` has shape (A, n) and ``xi`` shape (A, n, d); order n = 1 is the
    plain case on Omega x R^d. One-dimensional inputs are promoted. Atoms are
    never merged.
    """

    x: np.ndarray
    xi: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float)
        xi = np.asarray(self.xi, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
            xi = xi.reshape(x.shape[0], 1, -1) if xi.ndim <= 2 else xi
        if xi.ndim == 2:
            xi = xi[:, :, None]
        if w.size == 0:
            raise ValueError("empty measure")
        if x.shape[0] != w.size or xi.shape[:2] != x.shape:
            raise ValueError(f"inconsistent atom shapes x{x.shape} xi{xi.shape} w{w.shape}")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi))):
            raise ValueError("atoms must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def order(self) -> int:
        return self.x.shape[1]

    @property
    def dim(self) -> int:
        return self.xi.shape[2]

    def tensor(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        """Product measure; atoms ordered with the left factor varying slowest."""
        a, b = self.size, other.size
        x = np.concatenate([np.repeat(self.x, b, axis=0), np.tile(other.x, (a, 1))], axis=1)
        xi = np.concatenate([np.repeat(self.xi, b, axis=0), np.tile(other.xi, (a, 1, 1))], axis=1)
        w = np.outer(self.weights, other.weights).reshape(-1)
        return DiscreteMeasure(x, xi, w / w.sum())

    def power(self, n: int) -> "DiscreteMeasure":
        if n < 1:
            raise ValueError("tensor power needs n >= 1")
        out = self
        for _ in range(n - 1):
            out = out.tensor(self)
        return out

    def marginal(self, blocks: Sequence[int]) -> "DiscreteMeasure":
        """Image under projection on the listed blocks (no merging)."""
        blocks = list(blocks)
        return DiscreteMeasure(self.x[:, blocks], self.xi[:, blocks], self.weights)

    def permuted(self, perm: Sequence[int]) -> "DiscreteMeasure":
        return self.marginal(perm)

    def symmetrized(self) -> "DiscreteMeasure":
        """Average of the images under all block permutations."""
        perms = list(itertools.permutations(range(self.order)))
        x = np.concatenate([self.x[:, list(p)] for p in perms], axis=0)
        xi = np.concatenate([self.xi[:, list(p)] for p in perms], axis=0)
        w = np.tile(self.weights, len(perms)) / len(perms)
        return DiscreteMeasure(x, xi, w)

    def support_norm(self) -> float:
        """Conservative sup norm of the support: max over atoms of |x| + |xi|."""
        xs = np.linalg.norm(self.x, axis=1)
        ks = np.linalg.norm(self.xi.reshape(self.size, -1), axis=1)
        return float(np.max(xs + ks))

    def to_csv(self) -> str:
        if self.order != 1:
            raise ValueError("CSV export is defined for order-1 measures")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["weight", "x"] + [f"xi_{k + 1}" for k in range(self.dim)])
        for wt, x, row in zip(self.weights, self.x[:, 0], self.xi[:, 0]):
            w.writerow([repr(float(wt)), repr(float(x))] + [repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DiscreteMeasure":
        rows = list(csv.reader(io.StringIO(text)))
        head, body = rows[0], [r for r in rows[1:] if r]
        if head[:2] != ["weight", "x"]:
            raise ValueError("measure CSV must start with columns weight,x")
        data = np.array([[float(v) for v in r] for r in body], dtype=float)
        w = data[:, 0]
        return cls(data[:, 1], data[:, 2:], w / w.sum())


@dataclass(frozen=True)
class ConditionalFamily:
    """Sites x_i with weights nu_i and per-site conditional atom lists."""

    sites: np.ndarray
    site_weights: np.ndarray
    atoms: tuple
    cond_weights: tuple

    def __post_init__(self):
        s = np.asarray(self.sites, dtype=float).reshape(-1)
        nu = np.asarray(self.site_weights, dtype=float).reshape(-1)
        if s.shape != nu.shape or len(self.atoms) != s.size or len(self.cond_weights) != s.size:
            raise ValueError("one atom list and weight list per site required")
        if abs(nu.sum() - 1.0) > WEIGHT_TOL or np.any(nu <= 0):
            raise ValueError("site weights must be positive and sum to 1")
        atoms, cw = [], []
        for a, w in zip(self.atoms, self.cond_weights):
            a = np.asarray(a, dtype=float)
            a = a[:, None] if a.ndim == 1 else a
            w = np.asarray(w, dtype=float).reshape(-1)
            if a.shape[0] != w.size or w.size == 0:
                raise ValueError("conditional atoms and weights disagree")
            if abs(w.sum() - 1.0) > WEIGHT_TOL or np.any(w <= 0):
                raise ValueError("conditional weights must be positive and sum to 1 per site")
            atoms.append(a)
            cw.append(w)
        if len({a.shape[1] for a in atoms}) != 1:
            raise ValueError("all sites must share the state dimension")
        object.__setattr__(self, "sites", s)
        object.__setattr__(self, "site_weights", nu)
        object.__setattr__(self, "atoms", tuple(atoms))
        object.__setattr__(self, "cond_weights", tuple(cw))

    @property
    def N(self) -> int:
        return self.sites.size

    @property
    def dim(self) -> int:
        return self.atoms[0].shape[1]

    def to_measure(self) -> DiscreteMeasure:
        x = np.concatenate([np.full(a.shape[0], s) for s, a in zip(self.sites, self.atoms)])
        xi = np.concatenate(self.atoms, axis=0)
        w = np.concatenate([nu * w for nu, w in zip(self.site_weights, self.cond_weights)])
        return DiscreteMeasure(x, xi, w)

    @classmethod
    def from_measure(cls, mu: DiscreteMeasure) -> "ConditionalFamily":
        """Disintegration by exact grouping: atoms share a site iff tags are bit-identical."""
        if mu.order != 1:
            raise ValueError("disintegration is defined for order-1 measures")
        x = mu.x[:, 0]
        sites, inverse = np.unique(x, return_inverse=True)
        atoms, cw, nu = [], [], []
        for k in range(sites.size):
            m = inverse == k
            w = mu.weights[m]
            nu.append(w.sum())
            atoms.append(mu.xi[m, 0])
            cw.append(w / w.sum())
        nu = np.array(nu)
        return cls(sites, nu / nu.sum(), tuple(atoms), tuple(cw))

    @classmethod
    def from_state(cls, s: ParticleState) -> "ConditionalFamily":
        """Group particles by site index; site weights proportional to particle counts."""
        sites, atoms, cw, nu = [], [], [], []
        for k in np.unique(s.site_index):
            m = s.site_index == k
            xs = np.unique(s.x[m])
            if xs.size != 1:
                raise ValueError(f"site {k} carries several tags")
            sites.append(xs[0])
            atoms.append(s.xi[m])
            cw.append(np.full(m.sum(), 1.0 / m.sum()))
            nu.append(m.sum() / s.M)
        return cls(np.array(sites), np.array(nu), tuple(atoms), tuple(cw))


@dataclass(frozen=True)
class MomentReport:
    sites: np.ndarray
    mean: np.ndarray
    temperature: np.ndarray
    central: dict = field(default_factory=dict)
    site_rate: Optional[np.ndarray] = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.mean.shape[1]
        ks = sorted(k for k in self.central if k >= 2)
        w.writerow(["site", "x_i"] + [f"y_{c + 1}" for c in range(d)] + ["T"] + [f"y{k}" for k in ks])
        for i in range(self.sites.size):
            w.writerow([i, repr(float(self.sites[i]))] + [repr(float(v)) for v in self.mean[i]]
                       + [repr(float(self.temperature[i]))] + [repr(float(self.central[k][i])) for k in ks])
        return buf.getvalue()


def empirical(s: ParticleState) -> DiscreteMeasure:
    """M atoms (x_i, xi_i) of weight 1/M."""
    return DiscreteMeasure(s.x, s.xi, np.full(s.M, 1.0 / s.M))


def monokinetic(p: TaggedPartition, y: PartitionField) -> DiscreteMeasure:
    """(1/N) sum_i delta_{x_i} x delta_{y(x_i)}."""
    if y.partition.N != p.N or not np.array_equal(y.partition.tags, p.tags):
        raise ValueError("field and partition do not match")
    return DiscreteMeasure(p.tags, y(p.tags), np.full(p.N, 1.0 / p.N))


def semi_empirical(f: ConditionalFamily, p: Optional[TaggedPartition] = None) -> DiscreteMeasure:
    """(1/N) sum_i delta_{x_i} x mu_{x_i}; sites must carry uniform weights 1/N."""
    if np.max(np.abs(f.site_weights - 1.0 / f.N)) > WEIGHT_TOL:
        raise ValueError("semi-empirical measures need uniform site weights 1/N (tagged partition)")
    if p is not None and not np.array_equal(np.sort(f.sites), p.tags):
        raise ValueError("family sites must be the partition tags")
    return f.to_measure()


def mean_field(k: InteractionKernel, mu: DiscreteMeasure, t: float, x: float, xi,
               self_atom: Optional[int] = None) -> np.ndarray:
    """sum_a w_a G(t, x, x_a, xi, xi_a), atoms in stored order.

    ``self_atom`` marks the atom that is the evaluating particle itself, so
    that kernels with a self-pair term reproduce the particle right-hand side.
    """
    if mu.order != 1:
        raise ValueError("mean field is defined for order-1 measures")
    if mu.dim != k.state_dim:
        raise ValueError("kernel and measure dimensions differ")
    xi = np.asarray(xi, dtype=float).reshape(1, -1)
    G = np.array(k.eval(t, np.full(mu.size, float(x)), mu.x[:, 0], np.repeat(xi, mu.size, axis=0), mu.xi[:, 0]))
    if self_atom is not None and k.diag is not None:
        a = self_atom
        G[a] += k.diag(t, np.array(float(x)), mu.x[a, 0], xi[0], mu.xi[a, 0])
    G = G * mu.weights[:, None]
    if not np.all(np.isfinite(G)):
        a = int(np.argwhere(~np.isfinite(G))[0, 0])
        raise FloatingPointError(f"non-finite kernel output at atom {a}")
    return ordered_row_sum(G)


def moments(f: ConditionalFamily, k_max: int = 2) -> MomentReport:
    """Per-site mean, temperature (1/d) E|xi - y|^2 and central moments up to k_max."""
    if k_max < 2:
        raise ValueError("k_max must be at least 2")
    d = f.dim
    if k_max >= 3 and d > 1:
        raise ValueError("central moments of order >= 3 are defined for d = 1 only")
    mean = np.array([w @ a for a, w in zip(f.atoms, f.cond_weights)])
    dev = [a - y for a, y in zip(f.atoms, mean)]
    sq = np.array([w @ np.sum(e ** 2, axis=1) for e, w in zip(dev, f.cond_weights)])
    temp = sq / d
    central = {1: np.array([np.linalg.norm(w @ e) for e, w in zip(dev, f.cond_weights)]), 2: sq}
    for k in range(3, k_max + 1):
        central[k] = np.array([w @ e[:, 0] ** k for e, w in zip(dev, f.cond_weights)])
    return MomentReport(f.sites, mean, temp, central)


def site_rate(sigma: Callable, p: TaggedPartition) -> np.ndarray:
    """S_i = (1/N) sum_j sigma(x_i, x_j)."""
    x = p.tags
    if callable(sigma):
        S = np.broadcast_to(np.asarray(sigma(x[:, None], x[None, :]), dtype=float), (p.N, p.N))
    else:
        S = np.full((p.N, p.N), float(sigma))
    if np.any(S < 0):
        i, j = np.argwhere(S < 0)[0]
        raise ValueError(f"negative interaction weight sigma(x_{i}, x_{j}) = {S[i, j]!r}")
    return ordered_row_sum(S.T) / p.N
