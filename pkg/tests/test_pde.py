import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mflab.dsl import parse_pde
from mflab.pde import (CALIBRATED_C, HEAT, TRANSPORT, apply_A, apply_A_eps, builtin_spec, calibration_scan,
                       gaussian_derivative, gaussian_pde_kernel, l2_error, l2_norm, mollified_kernel,
                       mollifier_for, particle_pde_solve, polynomial_mollifier, reference_pde_solve,
                       scaling_schedule, sigma_eps, stable_step)
from mflab.particles import integrate, plain_state
from mflab.partition import uniform_partition

SIN = lambda x: np.sin(2 * np.pi * np.asarray(x, dtype=float))


def test_mollifier_examples():
    m = polynomial_mollifier(1)
    assert m.c_q == pytest.approx(0.75, rel=1e-15) and m(0.0) == pytest.approx(0.75, rel=1e-15)
    for q in (1, 2, 3, 4, 6):
        mq = polynomial_mollifier(q)
        assert abs(mq.mass() - 1.0) <= 1e-10
        if q > 1:
            assert mq.derivative(0.0, 1) == 0.0
        u = np.linspace(-1.2, 1.2, 41)
        assert np.array_equal(mq(u), mq(-u))
        assert np.all(mq(np.array([-1.0, 1.0, 1.5])) == 0)
    with pytest.raises(ValueError):
        polynomial_mollifier(0)


@pytest.mark.parametrize("q", [2, 3, 4])
def test_mollifier_derivatives_vs_finite_differences(q):
    m = polynomial_mollifier(q)
    h = 1e-5
    u = np.linspace(-0.9, 0.9, 37)
    for order in range(1, q):
        fd = (m.derivative(u + h, order - 1) - m.derivative(u - h, order - 1)) / (2 * h)
        exact = m.derivative(u, order)
        scale = np.max(np.abs(exact))
        assert np.max(np.abs(fd - exact)) <= 1e-6 * scale


def test_mollifier_scaling():
    m = polynomial_mollifier(3)
    assert m(0.01, 0.1) == pytest.approx(m(0.1) / 0.1, rel=1e-14)
    assert m.derivative(0.03, 2, 0.1) == pytest.approx(m.derivative(0.3, 2) / 0.1 ** 3, rel=1e-14)


def test_sigma_self_convolution():
    spec = parse_pde("dt y = dx^0 y")
    m = mollifier_for(spec)
    eps = 0.1
    s = sigma_eps(spec, m, eps)
    u = np.linspace(-eps, eps, 200001)
    du = u[1] - u[0]
    e = m(u, eps)
    assert s(0.3, 0.3) == pytest.approx(np.sum(e * e) * du, rel=1e-8)
    assert s(0.3, 0.3) > 0
    d = 0.07
    conv = np.sum(m(u, eps) * m(d - u, eps)) * du
    assert s(0.3, 0.3 + d) == pytest.approx(conv, rel=1e-8)
    # wraps across the torus seam
    assert s(0.99, 0.02) == pytest.approx(np.sum(m(u, eps) * m(0.03 - u, eps)) * du, rel=1e-8)


def test_sigma_antisymmetric_odd_order():
    spec = parse_pde("dt y = 0.7 * dx^1 y")
    s = sigma_eps(spec, mollifier_for(spec), 0.08)
    rng = np.random.default_rng(0)
    x, xp = rng.random(50), rng.random(50)
    np.testing.assert_allclose(s(x, xp), -s(xp, x), atol=1e-9)


def test_sigma_disjoint_supports_zero():
    spec = parse_pde("dt y = dx^2 y + cos(x) * dx^1 y")
    s = sigma_eps(spec, mollifier_for(spec), 0.1)
    assert s(0.1, 0.31) == 0.0
    assert s(0.95, 0.5) == 0.0
    assert s(0.05, 0.96) != 0.0  # torus distance 0.09


def test_sigma_eps_bounds():
    spec = builtin_spec("heat")
    with pytest.raises(ValueError, match="wraps"):
        sigma_eps(spec, mollifier_for(spec), 0.3)
    with pytest.raises(ValueError, match="too rough"):
        sigma_eps(spec, polynomial_mollifier(2), 0.1)


def test_mollified_kernel_contract():
    spec = parse_pde("dt y = (1 + y*y) * dx^2 y")
    k = mollified_kernel(spec, 0.05).as_interaction_kernel()
    rng = np.random.default_rng(1)
    x, xp, xi, xip = rng.random(9), rng.random(9), rng.normal(size=(9, 1)), rng.normal(size=(9, 1))
    g = k.eval(0.0, x, xp, xi, xip)
    assert g.shape == (9, 1) and np.all(np.isfinite(g))
    s = sigma_eps(spec, mollifier_for(spec), 0.05, xi=xi[:, 0])
    np.testing.assert_allclose(g[:, 0], s(x, xp) * xip[:, 0], rtol=1e-14)


def test_apply_A_eps_examples():
    spec = builtin_spec("heat")
    m = mollifier_for(spec)
    n = 2048
    x = np.arange(n) / n
    assert np.max(np.abs(apply_A_eps(spec, m, 0.05, np.full(n, 3.0)))) <= 1e-8
    with pytest.raises(ValueError, match="resolve"):
        apply_A_eps(spec, m, 0.01, np.zeros(512))
    rng = np.random.default_rng(2)
    for _ in range(10):
        c = rng.normal(size=(2, 8))
        f = sum(c[0, k] * np.cos(2 * np.pi * (k + 1) * x) + c[1, k] * np.sin(2 * np.pi * (k + 1) * x) for k in range(8))
        assert np.mean(apply_A_eps(spec, m, 0.05, f) * f) <= 1e-8


@pytest.mark.parametrize("text", [HEAT, TRANSPORT, "dt y = 0.3 * dx^2 y + -2 * dx^1 y + 1.5 * y"])
@pytest.mark.parametrize("freq", [1, 2])
def test_operator_consistency(text, freq):
    spec = parse_pde(text)
    m = mollifier_for(spec)
    n = 4096
    f = np.sin(2 * np.pi * freq * np.arange(n) / n)
    Af = apply_A(spec, f)
    ratios = [np.max(np.abs(apply_A_eps(spec, m, e, f) - Af)) / e for e in (0.2, 0.1, 0.05, 0.025)]
    assert max(ratios[1:]) <= 1.1 * ratios[0]


def test_particle_solve_growth():
    spec = parse_pde("dt y = dx^0 y")
    f = particle_pde_solve(spec, None, 0.05, 256, SIN, 0.5)
    exact = lambda x: math.exp(0.5) * SIN(x)
    assert l2_error(f, exact) / l2_norm(f.partition, exact) <= 0.05


def test_particle_solve_frozen():
    f = particle_pde_solve(parse_pde("dt y = 0 * dx^2 y"), None, 0.1, 32, SIN, 1.0)
    assert np.array_equal(f.values[:, 0], SIN(f.partition.tags))


def test_particle_solve_transport():
    spec = builtin_spec("transport")
    f = particle_pde_solve(spec, None, 0.05, 256, SIN, 0.25)
    shifted = lambda x: SIN(np.asarray(x) - 0.25)
    assert l2_error(f, shifted) / l2_norm(f.partition, shifted) <= 0.05


def test_particle_solve_quasilinear():
    # dt y = y * y with constant data: y(t) = y0 / (1 - y0 t) away from mollification effects
    spec = parse_pde("dt y = (y) * dx^0 y")
    f = particle_pde_solve(spec, None, 0.1, 128, lambda x: np.full_like(x, 0.5), 0.5)
    np.testing.assert_allclose(f.values[:, 0], 0.5 / (1 - 0.25), rtol=1e-3)


def test_particle_solve_matches_generic_integrator():
    spec = parse_pde("dt y = 0.01 * dx^2 y + sin(2*pi*x) * dx^1 y")
    eps, N = 0.1, 32
    f = particle_pde_solve(spec, None, eps, N, SIN, 0.1, dt=1e-3)
    k = mollified_kernel(spec, eps).as_interaction_kernel()
    p = uniform_partition(N, "midpoint", "torus")
    tr = integrate(k, plain_state(p, SIN(p.tags)), 0.1, 1e-3)
    np.testing.assert_allclose(f.values, tr.final, atol=1e-10)


def test_stable_step():
    assert stable_step(1e-3, 100.0, 0.25) == 1e-3
    h = stable_step(1e-3, 4326.0, 0.25)
    assert h * 4326.0 <= 2.5 and 0.25 / h == pytest.approx(round(0.25 / h))


def test_reference_examples():
    t = 0.1
    x = np.linspace(0, 1, 33)
    heat = reference_pde_solve(builtin_spec("heat"), SIN, t)
    np.testing.assert_allclose(heat(x), math.exp(-4 * math.pi ** 2 * t) * SIN(x), atol=1e-13)
    tr = reference_pde_solve(builtin_spec("transport"), SIN, t)
    np.testing.assert_allclose(tr(x), SIN(x - t), atol=1e-13)
    var = parse_pde("dt y = sin(2*pi*x) * dx^1 y")
    a = reference_pde_solve(var, SIN, 0.05, modes=64)
    b = reference_pde_solve(var, SIN, 0.05, modes=128)
    assert np.max(np.abs(a.grid(1024) - b.grid(1024))) <= 1e-6
    with pytest.raises(ValueError, match="quasilinear"):
        reference_pde_solve(parse_pde("dt y = (y) * dx^1 y"), SIN, 0.1)


def test_schedule_examples():
    with pytest.warns(UserWarning, match="clamped"):
        assert scaling_schedule(20, math.log(20), 1) == 0.25
    with pytest.warns(UserWarning):
        assert scaling_schedule(10 ** 6, 1.0, 2) == 0.25
    assert (1 / math.log(10 ** 6)) ** 0.25 == pytest.approx(0.5187, abs=1e-4)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        vals = [scaling_schedule(N, CALIBRATED_C["heat"], 2) for N in (3, 10, 64, 512, 10 ** 5)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        scaling_schedule(2, 1.0, 1)


def test_calibration_scan_matches_solver():
    spec = builtin_spec("transport")
    C = CALIBRATED_C["transport"]
    (_, errs), = calibration_scan(spec, [C], [64])
    f = particle_pde_solve(spec, None, scaling_schedule(64, C, 1), 64, SIN, 0.25)
    ref = lambda x: SIN(np.asarray(x) - 0.25)
    assert l2_error(f, ref) / l2_norm(f.partition, ref) == pytest.approx(errs[0], rel=1e-3)


def test_gaussian_examples():
    eps = 0.01
    spec = parse_pde("dt y = x*(1-x) * dx^0 y", domain="interval")
    k = gaussian_pde_kernel(spec, eps)
    assert k.sigma(0, 0.4, 0.4, 0.0) == pytest.approx(0.24 / math.sqrt(math.pi * eps), rel=1e-14)
    u = np.linspace(0.01, 0.3, 20)
    np.testing.assert_allclose(gaussian_derivative(u, 1, eps), -gaussian_derivative(-u, 1, eps), rtol=1e-14)
    uu = np.linspace(-1, 1, 200001)
    assert np.sum(gaussian_derivative(uu, 0, eps)) * (uu[1] - uu[0]) == pytest.approx(math.sqrt(2), rel=1e-9)
    with pytest.raises(ValueError):
        gaussian_pde_kernel(builtin_spec("heat"), eps)


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.3, 0.3), st.integers(1, 3))
def test_gaussian_derivatives_vs_finite_differences(u, l):
    eps, h = 0.02, 1e-6
    # d/dx' = -d/du
    fd = -(gaussian_derivative(u + h, l - 1, eps) - gaussian_derivative(u - h, l - 1, eps)) / (2 * h)
    exact = gaussian_derivative(u, l, eps)
    assert exact == pytest.approx(fd, rel=1e-4, abs=1e-4 * eps ** (-l / 2 - 0.5))
