"""Interaction kernels G(t, x, x', xi, xi') and sampled regularity constants.

Every kernel is evaluated in vectorized form: ``x`` and ``xp`` broadcast
against each other, ``xi`` and ``xip`` carry the state on their last axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

METRICS = ("interval", "torus")

KernelFunc = Callable[[float, np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def domain_distance(x, xp, metric: str = "interval") -> np.ndarray:
    """Distance on [0, 1] or on the unit torus."""
    d = np.abs(np.asarray(x, dtype=float) - np.asarray(xp, dtype=float))
    if metric == "torus":
        d = np.minimum(d, 1.0 - d)
    elif metric != "interval":
        raise ValueError(f"unknown metric {metric!r}, expected one of {METRICS}")
    return d


@dataclass(frozen=True)
class BoundBox:
    """Box on which sup and Lipschitz constants are estimated.

    The same Omega interval is used for x and x', the same xi box for xi and xi'.
    """

    omega: tuple[float, float]
    xi: tuple[tuple[float, float], ...]
    time: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(v) for v in self.omega))
        object.__setattr__(self, "xi", tuple(tuple(float(v) for v in iv) for iv in self.xi))
        object.__setattr__(self, "time", tuple(float(v) for v in self.time))
        bounds = [self.omega, *self.xi, self.time]
        if not all(np.isfinite(b).all() for b in bounds):
            raise ValueError("bound box must be finite")
        if self.time[1] < self.time[0]:
            raise ValueError("empty time interval")

    @property
    def dim(self) -> int:
        return len(self.xi)

    def is_degenerate(self) -> bool:
        return self.omega[1] <= self.omega[0] or any(hi <= lo for lo, hi in self.xi)

    @classmethod
    def hull(cls, states: np.ndarray, omega=(0.0, 1.0), time=(0.0, 0.0), pad: float = 1e-9) -> "BoundBox":
        """Smallest box containing every row of ``states`` (last axis = d)."""
        s = np.asarray(states, dtype=float).reshape(-1, np.shape(states)[-1])
        lo, hi = s.min(axis=0) - pad, s.max(axis=0) + pad
        return cls(omega=omega, xi=tuple(zip(lo, hi)), time=time)


@dataclass(frozen=True)
class InteractionKernel:
    """G(t, x, x', xi, xi') with regularity metadata.

    ``diag`` is an optional extra term added only for the self pair j = i
    (compared by particle index, never by tag value).
    """

    state_dim: int
    func: KernelFunc
    name: str = "custom"
    metric: str = "interval"
    holder_alpha: float = 1.0
    xi_lipschitz: bool = True
    indistinguishable: bool = False
    diag: Optional[KernelFunc] = None
    lipschitz_bound: Optional[Callable[[BoundBox], float]] = None
    sup_bound: Optional[Callable[[BoundBox], float]] = None
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.state_dim < 1:
            raise ValueError("state_dim must be positive")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if not 0.0 < self.holder_alpha <= 1.0:
            raise ValueError("holder exponent must lie in (0, 1]")

    def eval(self, t, x, xp, xi, xip, same_index: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xp = np.asarray(xp, dtype=float)
        xi = np.asarray(xi, dtype=float)
        xip = np.asarray(xip, dtype=float)
        out = self.func(t, x, xp, xi, xip)
        if same_index and self.diag is not None:
            out = out + self.diag(t, x, xp, xi, xip)
        shape = np.broadcast_shapes(x.shape, xp.shape, xi.shape[:-1], xip.shape[:-1]) + (self.state_dim,)
        return np.broadcast_to(np.asarray(out, dtype=float), shape)


def _as_func(f, nargs: int):
    if callable(f):
        return f
    c = float(f)
    return lambda *args: np.full(np.broadcast_shapes(*(np.shape(a) for a in args[:nargs])), c)


def opinion_kernel(sigma, state_dim: int = 1, metric: str = "interval") -> InteractionKernel:
    """G = sigma(x, x') (xi' - xi). ``sigma`` is a vectorized callable or a constant."""
    s = _as_func(sigma, 2)

    def g(t, x, xp, xi, xip):
        return s(x, xp)[..., None] * (xip - xi)

    if not callable(sigma):
        c0 = float(sigma)
        g = lambda t, x, xp, xi, xip: c0 * (xip - xi)

    lip = None
    if not callable(sigma):
        c = abs(float(sigma))
        # linear map (xi, xi') -> c (xi' - xi) has operator norm c*sqrt(2)
        lip = lambda box: c * np.sqrt(2.0)
    return InteractionKernel(state_dim, g, name="opinion", metric=metric, lipschitz_bound=lip,
                             indistinguishable=not callable(sigma), params={"sigma": sigma})


def cucker_smale_kernel(a, r: int = 1, metric: str = "interval") -> InteractionKernel:
    """xi = (q, p) in R^r x R^r, G = (p, a(|q - q'|) (p' - p))."""
    a = _as_func(a, 1)

    def g(t, x, xp, xi, xip):
        q, p = xi[..., :r], xi[..., r:]
        qp, pp = xip[..., :r], xip[..., r:]
        w = a(np.linalg.norm(q - qp, axis=-1))[..., None]
        p_b, dp = np.broadcast_arrays(p, w * (pp - p))
        return np.concatenate([p_b, dp], axis=-1)

    return InteractionKernel(2 * r, g, name="cucker_smale", metric=metric, indistinguishable=True,
                             params={"r": r})


def hamiltonian_pair_kernel(grad_single, grad_pair, r: int = 1, metric: str = "interval") -> InteractionKernel:
    """Kernel of a single + pairwise Hamiltonian system, xi = (q, p).

    grad_single(q, p) -> (dh/dq, dh/dp).
    grad_pair(q, p, q', p') -> (d1, d2, d3, d4), partials of h_pair in its four slots.

    For the pair (i, j) the partner terms are the slot-3/4 partials of the
    partner Hamiltonian h(q_j, p_j, q_i, p_i), i.e. derivatives with respect to
    particle i's own variables. The slot-1/2 partials of h(q_i, p_i, q_j, p_j)
    enter only on the self pair j = i.
    """

    def split(xi):
        return xi[..., :r], xi[..., r:]

    def g(t, x, xp, xi, xip):
        q, p = split(xi)
        qp, pp = split(xip)
        dq, dp = grad_single(q, p)
        _, _, d3, d4 = grad_pair(qp, pp, q, p)
        vq = np.asarray(dp, dtype=float) + d4
        vp = -np.asarray(dq, dtype=float) - d3
        vq, vp = np.broadcast_arrays(vq, vp)
        return np.concatenate([vq, vp], axis=-1)

    def diag(t, x, xp, xi, xip):
        q, p = split(xi)
        qp, pp = split(xip)
        d1, d2, _, _ = grad_pair(q, p, qp, pp)
        d1, d2 = np.broadcast_arrays(np.asarray(d1, dtype=float), np.asarray(d2, dtype=float))
        return np.concatenate([d2, -d1], axis=-1)

    return InteractionKernel(2 * r, g, name="hamiltonian", metric=metric, diag=diag,
                             indistinguishable=True, params={"r": r})


def zero_kernel(state_dim: int = 1, metric: str = "interval") -> InteractionKernel:
    def g(t, x, xp, xi, xip):
        shape = np.broadcast_shapes(np.shape(x), np.shape(xp), xi.shape[:-1], xip.shape[:-1])
        return np.zeros(shape + (state_dim,))

    return InteractionKernel(state_dim, g, name="zero", metric=metric, indistinguishable=True,
                             lipschitz_bound=lambda box: 0.0, sup_bound=lambda box: 0.0)


# ---------------------------------------------------------------- estimation

def _box_points(box: BoundBox, samples: int, seed: int) -> np.ndarray:
    """Corners, centre and seeded interior points of the (t, x, x', xi, xi') box.

    Columns: t, x, x', xi (d), xi' (d).
    """
    lo = np.array([box.time[0], box.omega[0], box.omega[0], *[iv[0] for iv in box.xi] * 2])
    hi = np.array([box.time[1], box.omega[1], box.omega[1], *[iv[1] for iv in box.xi] * 2])
    D = lo.size
    pts = [0.5 * (lo + hi)[None, :]]
    spatial = np.arange(1, D)
    if len(spatial) <= 12:
        corners = (np.arange(2 ** len(spatial))[:, None] >> np.arange(len(spatial))) & 1
        c = np.tile(0.5 * (lo + hi), (corners.shape[0], 1))
        c[:, spatial] = np.where(corners, hi[spatial], lo[spatial])
        pts.append(c)
    rng = np.random.Generator(np.random.Philox(seed))
    u = rng.random((samples, D))
    pts.append(lo + u * (hi - lo))
    return np.concatenate(pts, axis=0), lo, hi


def _eval_rows(k: InteractionKernel, z: np.ndarray) -> np.ndarray:
    d = k.state_dim
    t = z[:, 0]
    out = np.empty((z.shape[0], d))
    # t may vary per row; kernels are autonomous in practice but respect t anyway
    for tv in np.unique(t):
        m = t == tv
        zz = z[m]
        out[m] = k.eval(float(tv), zz[:, 1], zz[:, 2], zz[:, 3:3 + d], zz[:, 3 + d:3 + 2 * d])
    return out


def _jacobian_norms(k: InteractionKernel, z: np.ndarray, cols: np.ndarray, lo, hi) -> np.ndarray:
    """Spectral norm of the central finite-difference Jacobian in the given columns."""
    width = hi - lo
    h = 1e-6 * np.maximum(width, 1e-3)
    n, d = z.shape[0], k.state_dim
    J = np.empty((n, d, cols.size))
    for c_idx, c in enumerate(cols):
        zp, zm = z.copy(), z.copy()
        zp[:, c] = np.minimum(z[:, c] + h[c], hi[c])
        zm[:, c] = np.maximum(z[:, c] - h[c], lo[c])
        step = zp[:, c] - zm[:, c]
        J[:, :, c_idx] = (_eval_rows(k, zp) - _eval_rows(k, zm)) / step[:, None]
    return np.linalg.norm(J, ord=2, axis=(1, 2))


def lipschitz_estimate(k: InteractionKernel, box: BoundBox, samples: int = 256, seed: int = 0,
                       wrt: str = "all") -> float:
    """Sampled estimate of the Lipschitz constant of G on ``box``.

    Max of the finite-difference Jacobian spectral norm over the box corners,
    centre and ``samples`` seeded interior points. This is a lower estimate of
    the true constant; bound reports built on it are flagged as estimated.
    ``wrt`` selects the variables: "all" for (x, x', xi, xi'), "xi" for (xi, xi').
    """
    if samples < 2:
        raise ValueError("lipschitz_estimate needs at least 2 samples")
    if box.dim != k.state_dim:
        raise ValueError(f"box dimension {box.dim} does not match kernel state_dim {k.state_dim}")
    if box.is_degenerate():
        raise ValueError("degenerate bound box (zero volume)")
    z, lo, hi = _box_points(box, samples, seed)
    d = k.state_dim
    if wrt == "all":
        cols = np.arange(1, 3 + 2 * d)
    elif wrt == "xi":
        cols = np.arange(3, 3 + 2 * d)
    else:
        raise ValueError("wrt must be 'all' or 'xi'")
    norms = _jacobian_norms(k, z, cols, lo, hi)
    return float(np.max(norms))


def sup_estimate(k: InteractionKernel, box: BoundBox, samples: int = 256, seed: int = 0) -> float:
    """Sampled max of |G| over the box (corners, centre, seeded interior)."""
    if box.dim != k.state_dim:
        raise ValueError(f"box dimension {box.dim} does not match kernel state_dim {k.state_dim}")
    z, _, _ = _box_points(box, samples, seed)
    return float(np.max(np.linalg.norm(_eval_rows(k, z), axis=1)))


def check_indistinguishable(k: InteractionKernel, samples: int = 64, seed: int = 0, tol: float = 0.0) -> bool:
    """Sampled check that eval does not depend on (x, x')."""
    rng = np.random.Generator(np.random.Philox(seed))
    d = k.state_dim
    xi = rng.normal(size=(samples, d))
    xip = rng.normal(size=(samples, d))
    a = k.eval(0.0, rng.random(samples), rng.random(samples), xi, xip)
    b = k.eval(0.0, rng.random(samples), rng.random(samples), xi, xip)
    return bool(np.max(np.abs(a - b)) <= tol)


def sample_box(box: BoundBox, samples: int, seed: int = 0) -> np.ndarray:
    """Seeded interior points of the box, columns as in the estimators."""
    return _box_points(box, samples, seed)[0]


BUILTIN_NAMES: Sequence[str] = ("opinion", "cucker_smale", "hamiltonian", "mollified_pde", "gaussian_pde")
