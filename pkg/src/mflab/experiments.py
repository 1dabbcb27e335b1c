"""Desk-scale experiments shared by the harness and the acceptance suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .euler import EulerProblem, euler_rhs
from .kernels import InteractionKernel, cucker_smale_kernel, opinion_kernel
from .marginals import ChaosCertificate, chaos_certificate, epsilon_bound, moment_measure_first, vlasov_constant
from .measures import ConditionalFamily, DiscreteMeasure, empirical, mean_field, moments, site_rate
from .partition import uniform_partition
from .particles import ParticleState, cloud_state, integrate, integrate_rhs, plain_state
from .wasserstein import l1nu_w1, w1_line, w1_lp

TOL = 1e-9


def rng_for(seed: int) -> np.random.Generator:
    """Counter-based stream: Philox keyed by the 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) & (2 ** 64 - 1)))


# empirical measure rate ---------------------------------------------------

def lebesgue_surrogate(atoms: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    return (np.arange(atoms) + 0.5) / atoms, np.full(atoms, 1.0 / atoms)


def empirical_rate(N_list: Sequence[int], atoms: int = 4096) -> list[tuple[int, float]]:
    """Exact W1 on [0, 1] between the Lebesgue surrogate and the N midpoint tags."""
    pos, w = lebesgue_surrogate(atoms)
    out = []
    for N in N_list:
        tags = uniform_partition(N, "midpoint").tags
        out.append((int(N), w1_line(pos, w, tags, np.full(N, 1.0 / N))))
    return out


# W1 lemma suite -----------------------------------------------------------

LEMMAS = ("symmetry", "triangle", "tensor_lower_2", "tensor_upper_2", "tensor_lower_3", "tensor_upper_3",
          "marginal", "symmetrization", "common_factor", "support", "domination")


def random_measure(rng: np.random.Generator, atoms: int, d: int, order: int = 1, scale: float = 0.5) -> DiscreteMeasure:
    """Atoms in [0, scale]^(order) x [0, scale]^(order d), weights from small integer counts."""
    counts = rng.integers(1, 7, size=atoms).astype(float)
    return DiscreteMeasure(rng.random((atoms, order)) * scale, rng.random((atoms, order, d)) * scale,
                           counts / counts.sum())


def _family(rng, sites, nu, d, scale):
    atoms, cw = [], []
    for _ in sites:
        k = int(rng.integers(1, 4))
        c = rng.integers(1, 7, size=k).astype(float)
        atoms.append(rng.random((k, d)) * scale)
        cw.append(c / c.sum())
    return ConditionalFamily(sites, nu, tuple(atoms), tuple(cw))


@dataclass(frozen=True)
class LemmaResult:
    instance: int
    lemma: str
    lhs: float
    rhs: float
    passed: bool


def lemma_instance(rng: np.random.Generator, idx: int, max_atoms: int = 4, max_dim: int = 2,
                   scale: float = 0.5) -> list[LemmaResult]:
    """One randomized instance of every W1 property; lhs <= rhs (+ slack) is the claim.

    ``scale`` keeps the ground diameter below 1, where W1^n <= W1 holds; the
    lower tensor bound fails for distances above 1.
    """
    d = int(rng.integers(1, max_dim + 1))
    a1, a2, a3 = (int(rng.integers(1, max_atoms + 1)) for _ in range(3))
    m1, m2, m3 = (random_measure(rng, a, d, 1, scale) for a in (a1, a2, a3))
    out = []

    def rec(name, lhs, rhs, tol=TOL):
        out.append(LemmaResult(idx, name, float(lhs), float(rhs), bool(lhs <= rhs + tol)))

    w12 = w1_lp(m1, m2)[0]
    w21 = w1_lp(m2, m1)[0]
    rec("symmetry", abs(w12 - w21), 0.0, 1e-10)
    rec("triangle", w1_lp(m1, m3)[0], w12 + w1_lp(m2, m3)[0])
    for n in (2, 3):
        wt = w1_lp(m1.power(n), m2.power(n))[0]
        rec(f"tensor_lower_{n}", w12 ** n, wt)
        rec(f"tensor_upper_{n}", wt, n * w12)
    j1, j2 = random_measure(rng, a1, d, 2, scale), random_measure(rng, a2, d, 2, scale)
    wj = w1_lp(j1, j2)[0]
    rec("marginal", w1_lp(j1.marginal([0]), j2.marginal([0]))[0], wj)
    rec("symmetrization", w1_lp(j1.symmetrized(), j2.symmetrized())[0], wj)
    mp = random_measure(rng, int(rng.integers(1, max_atoms + 1)), d, 1, scale)
    wc = w1_lp(m1.tensor(mp), m2.tensor(mp))[0]
    rec("common_factor", abs(wc - w12), 0.0)
    rec("support", w12, m1.support_norm() + m2.support_norm())
    ns = int(rng.integers(1, 4))
    sites = np.sort(rng.choice(np.arange(1, 16), size=ns, replace=False) / 16.0)
    c = rng.integers(1, 7, size=ns).astype(float)
    f1, f2 = _family(rng, sites, c / c.sum(), d, scale), _family(rng, sites, c / c.sum(), d, scale)
    rec("domination", w1_lp(f1.to_measure(), f2.to_measure())[0], l1nu_w1(f1, f2))
    return out


def lemma_suite(instances: int = 200, seed: int = 0, max_atoms: int = 4, max_dim: int = 2) -> list[LemmaResult]:
    rng = rng_for(seed)
    out = []
    for i in range(instances):
        out.extend(lemma_instance(rng, i, max_atoms, max_dim))
    return out


def tensor_lower_counterexample() -> tuple[float, float]:
    """delta_0 vs delta_2 on the line: W1 = 2 but W1 of the squares is 2 sqrt(2) < 4."""
    a = DiscreteMeasure(np.zeros(1), np.zeros((1, 1, 1)), np.ones(1))
    b = DiscreteMeasure(np.zeros(1), np.full((1, 1, 1), 2.0), np.ones(1))
    return w1_lp(a, b)[0] ** 2, w1_lp(a.power(2), b.power(2))[0]


# chaos certificates ----------------------------------------------------------

def dirac_state(N: int, y0: Callable, tag_rule: str = "midpoint") -> ParticleState:
    p = uniform_partition(N, tag_rule)
    return plain_state(p, np.asarray(y0(p.tags), dtype=float).reshape(N, -1))


def chaos_suite(k: InteractionKernel, y0: Callable, N_list: Sequence[int], n: int = 2, t_list=(0.0, 1.0),
                reference_M: int = 16, dt: float = 1e-3, samples: int = 256, seed: int = 0) -> list[ChaosCertificate]:
    """Certificates at each (N, t); at t = 0 the reference is the initial empirical measure itself."""
    out = []
    for N in N_list:
        s0 = dirac_state(N, y0)
        for t in t_list:
            ref = s0 if t == 0 else dirac_state(reference_M, y0)
            out.append(chaos_certificate(k, s0, ref, n, t, dt, samples=samples, seed=seed))
    return out


# consensus -------------------------------------------------------------------

@dataclass(frozen=True)
class ConsensusResult:
    sites: np.ndarray
    S: np.ndarray
    temperature_ratio: np.ndarray
    predicted_ratio: np.ndarray
    max_rel_error: float
    rates: dict = field(default_factory=dict)  # k -> measured per-site rate of y_k
    winner: dict = field(default_factory=dict)  # k -> "k*S" | "S"

    def to_csv(self) -> str:
        import csv
        import io
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        ks = sorted(self.rates)
        w.writerow(["site", "x_i", "S_i", "T_ratio", "exp(-2 S t)"] + [f"rate_y{k}" for k in ks])
        for i in range(self.sites.size):
            w.writerow([i, repr(float(self.sites[i])), repr(float(self.S[i])), repr(float(self.temperature_ratio[i])),
                        repr(float(self.predicted_ratio[i]))] + [repr(float(self.rates[k][i])) for k in ks])
        return buf.getvalue()


def consensus_experiment(sigma: Callable, N: int = 8, K: int = 16, t_end: float = 1.0, dt: float = 1e-3,
                         seed: int = 0, k_list=(3, 4)) -> ConsensusResult:
    """Cloud system with K samples per site; temperature decay and central-moment rates.

    Samples are skewed (exponential quantiles plus a site offset) so that odd
    central moments do not vanish.
    """
    p = uniform_partition(N, "midpoint")
    rng = rng_for(seed)
    u = (np.arange(K) + 0.5) / K
    base = -np.log1p(-u)
    samples = [base * (0.5 + rng.random()) + rng.normal() for _ in range(N)]
    s0 = cloud_state(p, samples)
    k = opinion_kernel(sigma)
    traj = integrate(k, s0, t_end, dt)
    kmax = max(k_list)
    m0 = moments(ConditionalFamily.from_state(s0), kmax)
    m1 = moments(ConditionalFamily.from_state(traj.state_at(-1)), kmax)
    S = site_rate(sigma, p)
    ratio = m1.temperature / m0.temperature
    pred = np.exp(-2.0 * S * t_end)
    rel = float(np.max(np.abs(ratio - pred) / pred))
    rates, winner = {}, {}
    for kk in k_list:
        r = -np.log(np.abs(m1.central[kk] / m0.central[kk])) / t_end
        rates[kk] = r
        winner[kk] = "k*S" if np.max(np.abs(r - kk * S)) < np.max(np.abs(r - S)) else "S"
    return ConsensusResult(p.tags, S, ratio, pred, rel, rates, winner)


# Vlasov stability -----------------------------------------------------------

@dataclass(frozen=True)
class StabilityRow:
    t: float
    w1_t: float
    w1_0: float
    C_hat: float
    passed: bool


def vlasov_stability(a: Callable = lambda r: 1.0 / (1.0 + r * r), N: int = 16, t_list=(0.5, 1.0),
                     perturbation: float = 0.05, dt: float = 1e-3, seed: int = 0, slack: float = 1.05,
                     samples: int = 256) -> list[StabilityRow]:
    """W1 between two perturbed empirical initial data under Cucker-Smale, against exp(2 t max(sup, Lip)) W1(0)."""
    k = cucker_smale_kernel(a)
    rng = rng_for(seed)
    p = uniform_partition(N, "midpoint")
    base = np.column_stack([rng.random(N), rng.normal(size=N) * 0.5])
    s1 = plain_state(p, base)
    s2 = plain_state(p, base + perturbation * rng.normal(size=base.shape))
    w0 = w1_lp(empirical(s1), empirical(s2))[0]
    rows = []
    for t in t_list:
        t1 = integrate(k, s1, t, dt)
        t2 = integrate(k, s2, t, dt)
        wt = w1_lp(empirical(t1.state_at(-1)), empirical(t2.state_at(-1)))[0]
        hull = np.concatenate([t1.states.reshape(-1, 2), t2.states.reshape(-1, 2)])
        C, _ = vlasov_constant(k, hull, t, samples=samples, seed=seed)
        rows.append(StabilityRow(float(t), wt, w0, C, bool(wt <= C * w0 * slack)))
    return rows


# round trips --------------------------------------------------------------------

@dataclass(frozen=True)
class RoundTrip:
    vlasov: float
    euler: float
    moment: float


def round_trips(k: InteractionKernel, s0: ParticleState, t_end: float = 0.5, dt: float = 1e-3) -> RoundTrip:
    """Max deviation of three routes from the particle trajectory.

    vlasov: characteristics of the empirical measure, dxi_i/dt = mean field at (x_i, xi_i);
    euler:  Euler right-hand side on the partition whose tags are the particle tags (M = N);
    moment: rho_1^N of the Dirac data against xi_i(t).
    """
    traj = integrate(k, s0, t_end, dt)

    def vl(t, y):
        mu = empirical(s0.with_states(y))
        return np.stack([mean_field(k, mu, t, s0.x[i], y[i], self_atom=i) for i in range(s0.M)])

    _, yv = integrate_rhs(vl, s0.xi, t_end, dt, stride=10 ** 9)
    p = _partition_with_tags(s0.x)
    prob = EulerProblem(k, p, lambda x: s0.xi)
    _, ye = integrate_rhs(lambda t, y: euler_rhs(prob, t, y), s0.xi, t_end, dt, stride=10 ** 9)
    rho = moment_measure_first(traj.state_at(-1), p)
    return RoundTrip(float(np.max(np.abs(yv[-1] - traj.final))), float(np.max(np.abs(ye[-1] - traj.final))),
                     float(np.max(np.abs(rho.values - traj.final))))


def _partition_with_tags(x: np.ndarray):
    N = x.size
    for rule in ("midpoint", "left"):
        p = uniform_partition(N, rule)
        if np.array_equal(p.tags, x):
            return p
    raise ValueError("round trips need uniform-partition tags")
