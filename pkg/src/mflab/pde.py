"""Mollified-kernel particle approximation of 1-D quasilinear PDEs.

dt y = sum_l a_l(t, x, y) dx^l y is replaced by the particle system

    xi_i' = (1/N) sum_j sigma_eps(x_i, x_j) xi_j,
    sigma_eps(x, x') = sum_l int eta_eps(x - z) a_l(z) (D^l eta_eps)(z - x') dz,

with eta the polynomial mollifier c_q (1 - x^2)^q. Quasilinear or
time-dependent coefficients are pulled out of the integral and evaluated at
(t, x_i, xi_i), so sigma_eps = sum_l a_l(t, x_i, xi_i) K_l(x_i, x_j).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg
from numpy.polynomial import Polynomial
from numpy.polynomial import hermite as H
from scipy.special import gammaln

from .dsl import PdeSpec, free_variables, parse_pde
from .kernels import InteractionKernel
from .partition import PartitionField, TaggedPartition, uniform_partition
from .particles import integrate_rhs, ordered_row_sum

GAUSS_NODES = 32
MIN_NODES_PER_EPS = 16
EPS_MAX_TORUS = 0.25
REFERENCE_GRID = 4096

# one-time calibration of the schedule constant (torus, y0 = sin(2 pi x), t = 0.25, N = 64..512),
# reproduced by calibration_scan. Heat: the mollification error is ~35 eps^2, so 5% needs eps(512) < 0.037,
# while N = 64 aliases below eps ~ 0.033; C in [5.05e-6, 6.5e-6] keeps the errors decreasing, the middle is used.
# Transport: ~7 eps^2, no aliasing trouble; eps(512) = 0.06.
CALIBRATED_C = {"heat": 5.75e-6, "transport": 1.35e-3}


@dataclass(frozen=True)
class Mollifier:
    """eta(u) = c_q (1 - u^2)^q on [-1, 1], eta_eps(u) = eta(u / eps) / eps."""

    q: int
    c_q: float
    polys: tuple = field(repr=False)  # derivatives of order 0..q-1 on [-1, 1]

    def derivative(self, u, order: int = 0, eps: float = 1.0) -> np.ndarray:
        """eta_eps^{(order)}(u) = eps^{-1-order} eta^{(order)}(u / eps), zero off the support."""
        if not 0 <= order < len(self.polys):
            raise ValueError(f"derivative order {order} unavailable for q={self.q} (max {self.q - 1})")
        s = np.asarray(u, dtype=float) / eps
        inside = np.abs(s) < 1.0
        v = np.where(inside, self.polys[order](np.where(inside, s, 0.0)), 0.0)
        return v / eps ** (1 + order)

    def __call__(self, u, eps: float = 1.0) -> np.ndarray:
        return self.derivative(u, 0, eps)

    def mass(self, nodes: int = 64) -> float:
        z, w = np.polynomial.legendre.leggauss(nodes)
        return float(np.sum(w * self.polys[0](z)))


def polynomial_mollifier(q: int) -> Mollifier:
    if int(q) != q or q < 1:
        raise ValueError("mollifier exponent q must be a positive integer")
    q = int(q)
    c = math.exp(gammaln(q + 1.5) - gammaln(q + 1.0)) / math.sqrt(math.pi)
    base = c * Polynomial([1.0, 0.0, -1.0]) ** q
    polys = [base]
    for _ in range(1, q):
        polys.append(polys[-1].deriv())
    return Mollifier(q, c, tuple(polys))


def mollifier_for(spec: PdeSpec) -> Mollifier:
    """q = p + 2, so derivatives up to order p + 1 are continuous."""
    return polynomial_mollifier(spec.order + 2)


def _check_eps(spec: PdeSpec, m: Mollifier, eps: float) -> None:
    if not eps > 0:
        raise ValueError("eps must be positive")
    if spec.order >= m.q:
        raise ValueError(f"mollifier q={m.q} too rough for order {spec.order}; need q >= p + 1")
    if spec.domain == "torus" and eps > EPS_MAX_TORUS:
        raise ValueError(f"eps={eps:g} exceeds {EPS_MAX_TORUS} on the torus: the mollified support wraps onto itself")
    if spec.domain == "interval" and eps > 0.5:
        raise ValueError(f"eps={eps:g}: mollifier support wider than the interval")


def _wrap(d):
    return (np.asarray(d, dtype=float) + 0.5) % 1.0 - 0.5


def _z_windows(x, xp, eps: float, domain: str):
    """Offsets s = z - x of the support intersection, x' shifted to its nearest image on the torus."""
    x, xp = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(xp, dtype=float))
    delta = _wrap(xp - x) if domain == "torus" else xp - x
    lo = np.maximum(-eps, delta - eps)
    hi = np.minimum(eps, delta + eps)
    if domain == "interval":
        lo = np.maximum(lo, -x)
        hi = np.minimum(hi, 1.0 - x)
    return x, delta, lo, hi


def _gauss_integrate(x, xp, eps, domain, integrand):
    """sum over Gauss nodes of integrand(z, s, delta) on each (x, x') window."""
    x, delta, lo, hi = _z_windows(x, xp, eps, domain)
    nodes, weights = np.polynomial.legendre.leggauss(GAUSS_NODES)
    half = np.maximum(hi - lo, 0.0) / 2.0
    mid = (hi + lo) / 2.0
    s = mid[..., None] + half[..., None] * nodes
    z = x[..., None] + s
    if domain == "torus":
        z = z % 1.0
    vals = integrand(z, s, delta[..., None])
    return np.sum(vals * weights, axis=-1) * half


def kernel_factor(m: Mollifier, eps: float, l: int, x, xp, domain: str = "torus",
                  a: Optional[Callable] = None) -> np.ndarray:
    """int eta_eps(x - z) a(z) (D^l eta_eps)(z - x') dz, a = 1 when omitted."""

    def f(z, s, delta):
        v = m(-s, eps) * m.derivative(s - delta, l, eps)
        return v if a is None else v * a(z)

    return _gauss_integrate(x, xp, eps, domain, f)


def sigma_eps(spec: PdeSpec, m: Mollifier, eps: float, t: float = 0.0, xi=0.0) -> Callable:
    """sigma_eps(x, x') at time t and state xi (xi broadcasts against x)."""
    _check_eps(spec, m, eps)
    k = MollifiedKernel(spec, m, float(eps))
    return lambda x, xp: k.sigma(t, x, xp, xi)


@dataclass(frozen=True)
class MollifiedKernel:
    """G_eps(t, x, x', xi, xi') = sigma_eps(t, x, x', xi) xi'."""

    spec: PdeSpec
    mollifier: Optional[Mollifier]
    eps: float
    nodes: int = GAUSS_NODES
    variant: str = "polynomial"

    def sigma(self, t, x, xp, xi) -> np.ndarray:
        if self.variant == "gaussian":
            return _gaussian_sigma(self.spec, self.eps, t, x, xp, xi)
        x, xp = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(xp, dtype=float))
        xi = np.broadcast_to(np.asarray(xi, dtype=float), x.shape)
        out = np.zeros(x.shape)
        for l in range(self.spec.order + 1):
            if self.spec.coefficients[l] == ("num", 0.0):
                continue
            a = self.spec.coefficient(l)
            if self.spec.quasilinear or not self.spec.autonomous:
                out += a(np.full(x.shape, float(t)), x, xi) * kernel_factor(
                    self.mollifier, self.eps, l, x, xp, self.spec.domain)
            else:
                af = lambda z, a=a: a(np.zeros_like(z), z, np.zeros_like(z))
                out += kernel_factor(self.mollifier, self.eps, l, x, xp, self.spec.domain, af)
        return out

    def as_interaction_kernel(self) -> InteractionKernel:
        def g(t, x, xp, xi, xip):
            return self.sigma(t, x, xp, xi[..., 0])[..., None] * xip

        name = "gaussian_pde" if self.variant == "gaussian" else "mollified_pde"
        metric = "torus" if self.spec.domain == "torus" else "interval"
        return InteractionKernel(1, g, name=name, metric=metric, params={"eps": self.eps, "spec": self.spec.text})


def mollified_kernel(spec: PdeSpec, eps: float, m: Optional[Mollifier] = None) -> MollifiedKernel:
    m = mollifier_for(spec) if m is None else m
    _check_eps(spec, m, eps)
    return MollifiedKernel(spec, m, float(eps))


def gaussian_derivative(u, l: int, eps: float) -> np.ndarray:
    """d^l/dx'^l of exp(-(x - x')^2 / 2 eps) / (pi eps)^{1/2}, u = x - x'.

    Each x' derivative is -d/du; with s = u / sqrt(2 eps) this gives
    (2 eps)^{-l/2} H_l(s) exp(-s^2) / (pi eps)^{1/2} (physicists' Hermite).
    The prefactor is kept as written, so the kernel has mass sqrt(2), not 1.
    """
    u = np.asarray(u, dtype=float)
    s = u / math.sqrt(2.0 * eps)
    c = np.zeros(l + 1)
    c[l] = 1.0
    return (2.0 * eps) ** (-l / 2.0) * H.hermval(s, c) * np.exp(-s * s) / math.sqrt(math.pi * eps)


def _gaussian_sigma(spec: PdeSpec, eps: float, t, x, xp, xi) -> np.ndarray:
    x, xp = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(xp, dtype=float))
    xi = np.broadcast_to(np.asarray(xi, dtype=float), x.shape)
    out = np.zeros(x.shape)
    for l in range(spec.order + 1):
        if spec.coefficients[l] == ("num", 0.0):
            continue
        out += spec.coefficient(l)(np.full(x.shape, float(t)), x, xi) * gaussian_derivative(x - xp, l, eps)
    return out


def gaussian_pde_kernel(spec: PdeSpec, eps: float) -> MollifiedKernel:
    """Gaussian variant on [0, 1]; tails are kept, no support truncation."""
    if spec.domain != "interval":
        raise ValueError("the Gaussian kernel variant is defined on the interval domain")
    if not eps > 0:
        raise ValueError("eps must be positive")
    return MollifiedKernel(spec, None, float(eps), 0, "gaussian")


# grid operators ------------------------------------------------------------

def _grid_kernel_fft(m: Mollifier, eps: float, n: int, order: int = 0) -> np.ndarray:
    """FFT of h * eta_eps^{(order)} sampled at the periodic offsets j h."""
    u = _wrap(np.arange(n) / n)
    return np.fft.fft(m.derivative(u, order, eps) / n)


def spectral_derivative(f: np.ndarray, l: int) -> np.ndarray:
    n = f.size
    k = np.fft.fftfreq(n, 1.0 / n)
    mult = (2j * np.pi * k) ** l
    if l % 2 == 1 and n % 2 == 0:
        mult[n // 2] = 0.0
    return np.real(np.fft.ifft(mult * np.fft.fft(f)))


def apply_A(spec: PdeSpec, f: np.ndarray, t: float = 0.0) -> np.ndarray:
    """A f on the uniform periodic grid j / n, derivatives by FFT."""
    if spec.quasilinear:
        raise ValueError("grid operator A is defined for linear specs")
    f = np.asarray(f, dtype=float)
    x = np.arange(f.size) / f.size
    out = np.zeros_like(f)
    for l in range(spec.order + 1):
        if spec.coefficients[l] == ("num", 0.0):
            continue
        a = spec.coefficient(l)(np.full_like(x, t), x, np.zeros_like(x))
        out += a * spectral_derivative(f, l)
    return out


def apply_A_eps(spec: PdeSpec, m: Mollifier, eps: float, f: np.ndarray, t: float = 0.0) -> np.ndarray:
    """eta_eps * A (eta_eps * f) on the periodic grid j / n, n = f.size."""
    if spec.domain != "torus":
        raise ValueError("grid operator consistency is implemented on the torus")
    _check_eps(spec, m, eps)
    f = np.asarray(f, dtype=float)
    n = f.size
    if n * eps < MIN_NODES_PER_EPS:
        raise ValueError(f"grid of {n} nodes does not resolve eps={eps:g}; need n * eps >= {MIN_NODES_PER_EPS}")
    E = _grid_kernel_fft(m, eps, n)
    g = np.real(np.fft.ifft(E * np.fft.fft(f)))
    return np.real(np.fft.ifft(E * np.fft.fft(apply_A(spec, g, t))))


# particle solve ------------------------------------------------------------

def _factor_matrices(spec: PdeSpec, m: Mollifier, eps: float, x: np.ndarray, inside_a: bool) -> list:
    mats = []
    for l in range(spec.order + 1):
        if spec.coefficients[l] == ("num", 0.0):
            mats.append(None)
            continue
        af = None
        if inside_a:
            a = spec.coefficient(l)
            af = lambda z, a=a: a(np.zeros_like(z), z, np.zeros_like(z))
        mats.append(kernel_factor(m, eps, l, x[:, None], x[None, :], spec.domain, af))
    return mats


RK4_STABLE = 2.5  # below the real-axis RK4 stability limit 2.785


class PdeSystem:
    """(t, xi) -> (1/N) sum_j sigma_eps(x_i, x_j) xi_j with K_l tabulated once on the tag grid."""

    def __init__(self, spec: PdeSpec, m: Mollifier, eps: float, p: TaggedPartition):
        _check_eps(spec, m, eps)
        self.spec, self.p, self.x, self.N = spec, p, p.tags, p.N
        self.frozen = not spec.quasilinear and spec.autonomous
        mats = _factor_matrices(spec, m, eps, self.x, self.frozen)
        self.coeffs = [spec.coefficient(l) for l in range(spec.order + 1)]
        # transposed so the j-sum runs over the first axis in ascending order
        self.KT = [None if M is None else np.ascontiguousarray(M.T) for M in mats]
        if self.frozen:
            S = sum(M for M in self.KT if M is not None)
            self.ST = np.zeros((self.N, self.N)) if isinstance(S, int) else S

    def __call__(self, t, y):
        v = y[:, 0]
        if self.frozen:
            return ordered_row_sum(self.ST * v[:, None])[:, None] / self.N
        out = np.zeros(self.N)
        for a, K in zip(self.coeffs, self.KT):
            if K is not None:
                out += a(np.full(self.N, float(t)), self.x, v) * ordered_row_sum(K * v[:, None])
        return out[:, None] / self.N

    def radius(self, y, t: float = 0.0) -> float:
        """Gershgorin bound on the spectral radius of the linearized right-hand side at y."""
        if self.frozen:
            return float(np.max(np.sum(np.abs(self.ST), axis=0)) / self.N)
        v = y[:, 0]
        r = np.zeros(self.N)
        for a, K in zip(self.coeffs, self.KT):
            if K is not None:
                r += np.abs(a(np.full(self.N, float(t)), self.x, v)) * np.sum(np.abs(K), axis=0)
        return float(np.max(r) / self.N)


def pde_rhs(spec: PdeSpec, m: Mollifier, eps: float, p: TaggedPartition) -> Callable:
    return PdeSystem(spec, m, eps, p)


def stable_step(dt: float, radius: float, t_end: float) -> float:
    """dt, or the largest step t_end / n with step * radius <= RK4_STABLE if dt is unstable."""
    if radius * dt <= RK4_STABLE or t_end <= 0:
        return dt
    return t_end / math.ceil(t_end * radius / RK4_STABLE)


def particle_pde_solve(spec: PdeSpec, m: Optional[Mollifier], eps: float, N: int, y0: Callable, t_end: float,
                       dt: float = 1e-3, tag_rule: str = "midpoint", scheme: str = "rk4") -> PartitionField:
    """y_eps^N(t_end) as a piecewise-constant field on the uniform N-cell partition.

    The mollified operator is stiff (spectral radius ~ eps^{-p}); an rk4 step
    beyond the stability interval is shortened to t_end / n (see stable_step).
    """
    m = mollifier_for(spec) if m is None else m
    metric = "torus" if spec.domain == "torus" else "interval"
    p = uniform_partition(N, tag_rule, metric)
    y = np.asarray(y0(p.tags), dtype=float).reshape(N, 1)
    if spec.is_zero():
        return PartitionField(p, y)
    sys = PdeSystem(spec, m, eps, p)
    if scheme == "rk4":
        dt = stable_step(dt, sys.radius(y), t_end)
    _, ys = integrate_rhs(sys, y, t_end, dt, scheme, stride=10 ** 9)
    return PartitionField(p, ys[-1])


# reference solutions ---------------------------------------------------------

@dataclass(frozen=True)
class SpectralSolution:
    """Truncated Fourier series y(x) = sum_k c_k e^{2 pi i k x}, k = -K..K."""

    k: np.ndarray
    coeffs: np.ndarray

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ph = np.exp(2j * np.pi * np.multiply.outer(x, self.k))
        return np.real(ph @ self.coeffs)

    def grid(self, n: int = REFERENCE_GRID) -> np.ndarray:
        return self(np.arange(n) / n)


def _fourier_coeffs(f: Callable, K: int, n: int = REFERENCE_GRID) -> tuple[np.ndarray, np.ndarray]:
    x = np.arange(n) / n
    c = np.fft.fft(np.asarray(f(x), dtype=float)) / n
    k = np.arange(-K, K + 1)
    return k, c[k % n]


def reference_pde_solve(spec: PdeSpec, y0: Callable, t_end: float, modes: int = 64,
                        n: int = REFERENCE_GRID) -> SpectralSolution:
    """Exact Fourier multiplier for constant coefficients, Galerkin exponential otherwise."""
    if spec.quasilinear:
        raise ValueError("no reference solver for quasilinear specs; use an analytic case")
    if not spec.autonomous:
        raise ValueError("reference solver needs time-independent coefficients")
    if spec.domain != "torus":
        raise ValueError("reference solver is spectral and needs the torus domain")
    consts = [None] * (spec.order + 1)
    for l in range(spec.order + 1):
        if not free_variables(spec.coefficients[l]):
            consts[l] = float(spec.coefficient(l)(0.0, 0.0, 0.0))
    if all(c is not None for c in consts):
        K = n // 2 - 1
        k, c0 = _fourier_coeffs(y0, K, n)
        mult = sum(a * (2j * np.pi * k) ** l for l, a in enumerate(consts))
        return SpectralSolution(k, c0 * np.exp(t_end * mult))
    k, c0 = _fourier_coeffs(y0, modes, n)
    x = np.arange(n) / n
    L = np.zeros((k.size, k.size), dtype=complex)
    diff = k[:, None] - k[None, :]
    for l in range(spec.order + 1):
        a = np.asarray(spec.coefficient(l)(np.zeros(n), x, np.zeros(n)), dtype=float)
        ah = np.fft.fft(a) / n
        L += ah[diff % n] * ((2j * np.pi * k[None, :]) ** l)
    return SpectralSolution(k, scipy.linalg.expm(t_end * L) @ c0)


def l2_error(field: PartitionField, exact: Callable) -> float:
    """Partition-quadrature L2 norm of field - exact at the tags."""
    p = field.partition
    d = field.values[:, 0] - np.asarray(exact(p.tags), dtype=float)
    return float(np.sqrt(np.sum(d * d * np.diff(p.breakpoints))))


def l2_norm(p: TaggedPartition, f: Callable) -> float:
    v = np.asarray(f(p.tags), dtype=float)
    return float(np.sqrt(np.sum(v * v * np.diff(p.breakpoints))))


def scaling_schedule(N: int, C: float, p: int) -> float:
    """eps_N = (C / ln N)^{1 / (p + 2)}, clamped to (0, 1/4]."""
    if N < 3:
        raise ValueError("schedule needs N >= 3")
    if not C > 0:
        raise ValueError("schedule constant must be positive")
    eps = (C / math.log(N)) ** (1.0 / (p + 2))
    if eps > EPS_MAX_TORUS:
        warnings.warn(f"schedule eps={eps:.4g} for N={N} clamped to {EPS_MAX_TORUS}", stacklevel=2)
        eps = EPS_MAX_TORUS
    return eps


@dataclass(frozen=True)
class ScheduleRow:
    N: int
    eps: float
    error: float
    relative: float


def schedule_experiment(spec: PdeSpec, y0: Callable, N_list, C: float, t_end: float = 0.25, dt: float = 1e-3,
                        exact: Optional[Callable] = None) -> list[ScheduleRow]:
    """L2 error of the particle solution along (N, eps_N) against the reference."""
    ref = exact if exact is not None else reference_pde_solve(spec, y0, t_end)
    rows = []
    for N in N_list:
        eps = scaling_schedule(N, C, spec.order)
        f = particle_pde_solve(spec, None, eps, N, y0, t_end, dt)
        err = l2_error(f, ref)
        rows.append(ScheduleRow(int(N), eps, err, err / l2_norm(f.partition, ref)))
    return rows


def calibration_scan(spec: PdeSpec, C_values, N_list=(64, 128, 256, 512), t_end: float = 0.25,
                     tag_rule: str = "midpoint") -> list[tuple[float, list[float]]]:
    """Relative error at t_end of the semi-discrete scheme for y0 = sin(2 pi x), per C.

    Uniform torus tags make the system circulant with e^{2 pi i x} as an
    eigenvector, so the error is |exp(t lambda_1) - exp(t s_1)| / |exp(t s_1)|
    with s_1 the exact symbol; no time stepping is needed. Constant coefficients only.
    """
    if spec.domain != "torus" or spec.depends_on("x") or spec.quasilinear or not spec.autonomous:
        raise ValueError("calibration scan needs constant coefficients on the torus")
    m = mollifier_for(spec)
    a = [float(spec.coefficient(l)(0.0, 0.0, 0.0)) for l in range(spec.order + 1)]
    symbol = sum(al * (2j * np.pi) ** l for l, al in enumerate(a))
    out = []
    for C in C_values:
        errs = []
        for N in N_list:
            eps = scaling_schedule(N, C, spec.order)
            x = uniform_partition(N, tag_rule, "torus").tags
            row = sum(al * kernel_factor(m, eps, l, x[0], x, "torus") for l, al in enumerate(a) if al != 0.0) / N
            lam = np.sum(row * np.exp(2j * np.pi * (x - x[0])))
            errs.append(float(abs(np.exp(t_end * lam) - np.exp(t_end * symbol)) / abs(np.exp(t_end * symbol))))
        out.append((float(C), errs))
    return out


HEAT = "dt y = dx^2 y"
TRANSPORT = "dt y = -1 * dx^1 y"


def builtin_spec(name: str) -> PdeSpec:
    return parse_pde({"heat": HEAT, "transport": TRANSPORT}[name])
