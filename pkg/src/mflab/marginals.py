"""Symmetrized marginals of Dirac and product-cloud Liouville data, chaos certificates."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .kernels import BoundBox, InteractionKernel, lipschitz_estimate, sup_estimate
from .measures import DiscreteMeasure, empirical
from .partition import PartitionField, TaggedPartition, uniform_partition
from .particles import ParticleState, integrate
from .wasserstein import w1_lp

MAX_N = 8
MAX_ORDER = 3
MAX_ATOMS = 4096
CONSTANT_SLACK = 1.05


def epsilon_n(N: int, n: int) -> float:
    """N^n (N-n)! / N! - 1, from exact integer arithmetic and one division."""
    if not 1 <= n <= N:
        raise ValueError(f"need 1 <= n <= N, got n={n}, N={N}")
    num = N ** n * math.factorial(N - n)
    den = math.factorial(N)
    return float(Fraction(num - den, den))


def epsilon_bound(N: int, n: int) -> float:
    """e^{n^2 / 2N} - 1.

    Not an upper bound for eps_n in general: it fails from n = N = 3 on and,
    for N = 64, from n = 14. It holds for n = 2 at every N.
    """
    return math.expm1(n * n / (2.0 * N))


def _sites(s: ParticleState):
    """Per-site tag and sample block, sites in ascending index order."""
    out = []
    for k in np.unique(s.site_index):
        m = s.site_index == k
        xs = np.unique(s.x[m])
        if xs.size != 1:
            raise ValueError(f"site {k} carries several tags")
        out.append((xs[0], s.xi[m]))
    tags = np.array([t for t, _ in out])
    if np.unique(tags).size != tags.size:
        raise ValueError("symmetrized marginals need distinct tags per site")
    Ks = {blk.shape[0] for _, blk in out}
    if len(Ks) != 1:
        raise ValueError("product-cloud data needs the same sample count per site")
    return out, Ks.pop()


@dataclass(frozen=True)
class SymmetrizedMarginal:
    measure: DiscreteMeasure
    n: int
    N: int
    t: float = 0.0
    provenance: str = ""


def _tuple_measure(sites, tuples, weight_of) -> DiscreteMeasure:
    K = sites[0][1].shape[0]
    d = sites[0][1].shape[1]
    xs, xis, ws = [], [], []
    for tup in tuples:
        w0 = weight_of(tup)
        if w0 == 0:
            continue
        tags = [sites[i][0] for i in tup]
        for choice in itertools.product(range(K), repeat=len(tup)):
            xs.append(tags)
            xis.append([sites[i][1][c] for i, c in zip(tup, choice)])
            ws.append(w0 / K ** len(tup))
    w = np.array(ws, dtype=float)
    return DiscreteMeasure(np.array(xs), np.array(xis).reshape(len(xs), len(tuples[0]), d), w / w.sum())


def symmetrized_marginal(s: ParticleState, n: int, t: float = 0.0) -> SymmetrizedMarginal:
    """Order-n marginal of the symmetrized Dirac (K = 1) or product-cloud law.

    Weight (N-n)!/N! on every tuple of distinct sites, times 1/K^n per sample choice.
    """
    sites, K = _sites(s)
    N = len(sites)
    if not 1 <= n <= N:
        raise ValueError(f"need 1 <= n <= N, got n={n}, N={N}")
    count = math.perm(N, n) * K ** n
    if N > MAX_N or n > MAX_ORDER or count > MAX_ATOMS:
        raise ValueError(
            f"symmetrized marginal capped at N <= {MAX_N}, n <= {MAX_ORDER}, {MAX_ATOMS} atoms; "
            f"atom count N!/(N-n)! * K^n = {count}")
    w = 1.0 / math.perm(N, n)
    tuples = list(itertools.permutations(range(N), n))
    mu = _tuple_measure(sites, tuples, lambda tup: w)
    return SymmetrizedMarginal(mu, n, N, t, "dirac" if K == 1 else f"cloud K={K}")


def first_marginal(s: ParticleState) -> DiscreteMeasure:
    """rho^s_{N:1}: average of the site laws."""
    return symmetrized_marginal(s, 1).measure


def beta_n(s: ParticleState, n: int) -> DiscreteMeasure:
    """Normalized law over index tuples with at least two equal entries."""
    sites, _ = _sites(s)
    N = len(sites)
    eps = epsilon_n(N, n)
    if eps == 0:
        raise ValueError("beta_n is undefined for n = 1")
    tuples = list(itertools.product(range(N), repeat=n))
    c = math.factorial(N - n) / math.factorial(N) / eps
    return _tuple_measure(sites, tuples, lambda tup: c if len(set(tup)) < n else 0.0)


def decomposition_weights(s: ParticleState, n: int) -> tuple[list, np.ndarray]:
    """(1 + eps_n) w_tensor - eps_n w_beta on every index tuple (Dirac data)."""
    sites, K = _sites(s)
    if K != 1:
        raise ValueError("decomposition weights are tabulated for Dirac data")
    N = len(sites)
    eps = epsilon_n(N, n)
    c = math.factorial(N - n) / math.factorial(N) / eps if eps else 0.0
    tuples = list(itertools.product(range(N), repeat=n))
    w = np.array([(1 + eps) / N ** n - eps * (c if len(set(tup)) < n else 0.0) for tup in tuples])
    return tuples, w


@dataclass(frozen=True)
class ChaosCertificate:
    n: int
    N: int
    t: float
    measured: float
    bound: float
    support_norm: float
    c_mu: float
    w1_initial: float
    estimated: bool
    verdict: str
    constants: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def csv_row(self) -> list:
        return [self.N, self.n, repr(float(self.t)), repr(float(self.measured)), repr(float(self.bound)),
                repr(float(self.c_mu)), repr(float(self.support_norm)), "estimated" if self.estimated else "exact",
                self.verdict]


CERTIFICATE_HEADER = ["N", "n", "t", "measured", "bound", "C_mu", "supp_norm", "constants", "verdict"]


def certificates_csv(certs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CERTIFICATE_HEADER)
    for c in certs:
        w.writerow(c.csv_row())
    return buf.getvalue()


def vlasov_constant(k: InteractionKernel, hull: np.ndarray, t: float, omega=(0.0, 1.0), samples: int = 256,
                    seed: int = 0) -> tuple[float, dict]:
    """exp(2 t max(sup |G|, Lip G)) on the box hull of the supplied states.

    The sup and Lipschitz constants are sampled estimates over the hull, held
    constant in time, so the value is flagged as estimated.
    """
    if t == 0:
        return 1.0, {"sup": 0.0, "lip": 0.0}
    box = BoundBox.hull(hull, omega=omega, time=(0.0, t), pad=1e-6)
    sup = k.sup_bound(box) if k.sup_bound else sup_estimate(k, box, samples, seed)
    lip = k.lipschitz_bound(box) if k.lipschitz_bound else lipschitz_estimate(k, box, samples, seed)
    return math.exp(2.0 * t * max(sup, lip)), {"sup": sup, "lip": lip}


def chaos_certificate(k: InteractionKernel, s0: ParticleState, reference: ParticleState, n: int, t: float,
                      dt: float = 1e-3, scheme: str = "rk4", slack: float = CONSTANT_SLACK,
                      samples: int = 256, seed: int = 0) -> ChaosCertificate:
    """Measured W1(rho(t)^s_{N:n}, mu(t)^{(x)n}) against the chaos bound.

    ``reference`` is a fine particle discretization of mu_0; mu(t) is its
    empirical measure pushed by the same particle flow. The Dirac data s0 is
    propagated by the particle flow as well.
    """
    if t > 0:
        traj = integrate(k, s0, t, dt, scheme)
        rtraj = integrate(k, reference, t, dt, scheme)
        st, rt = traj.state_at(-1), rtraj.state_at(-1)
        hull = np.concatenate([traj.states.reshape(-1, s0.dim), rtraj.states.reshape(-1, s0.dim)])
    else:
        st, rt = s0, reference
        hull = np.concatenate([s0.xi, reference.xi])
    rho = symmetrized_marginal(st, n, t).measure
    mu_t = empirical(rt)
    measured = w1_lp(rho, mu_t.power(n), k.metric)[0] if n > 1 else w1_lp(rho, mu_t, k.metric)[0]
    w1_0 = w1_lp(empirical(s0), empirical(reference), k.metric)[0]
    supp = mu_t.support_norm()
    N = np.unique(s0.site_index).size
    # the closed-form bound undercuts the exact eps_n once n is large against sqrt(N)
    eps_term = 2.0 * max(epsilon_bound(N, n), epsilon_n(N, n)) * max(1.0, supp)
    if w1_0 == 0.0:
        c_mu, consts, estimated = 1.0, {"sup": 0.0, "lip": 0.0}, False
    else:
        c_mu, consts = vlasov_constant(k, hull, t, samples=samples, seed=seed)
        estimated = t > 0
    bound = eps_term + n * c_mu * w1_0
    if estimated:
        # constants are sampled lower estimates: a miss beyond the slack is not a refutation
        verdict = "pass" if measured <= bound * slack else "inconclusive"
    else:
        verdict = "pass" if measured <= bound + 1e-12 else "fail"
    return ChaosCertificate(n, N, t, measured, bound, supp, c_mu, w1_0, estimated, verdict, consts)


def moment_measure_first(s: ParticleState, p: Optional[TaggedPartition] = None) -> PartitionField:
    """rho_1^N: per-site mean of the states, as a field on the partition."""
    sites, _ = _sites(s)
    tags = np.array([x for x, _ in sites])
    means = np.array([blk.mean(axis=0) if blk.shape[0] > 1 else blk[0] for _, blk in sites])
    if p is None:
        for rule in ("midpoint", "left"):
            cand = uniform_partition(len(sites), rule)
            if np.array_equal(cand.tags, tags):
                p = cand
                break
        else:
            raise ValueError("tags are not a uniform partition; pass the partition explicitly")
    if not np.array_equal(tags, p.tags):
        raise ValueError("particle tags do not align with the partition tags")
    return PartitionField(p, means)
