import math

import numpy as np
import pytest

from mflab.euler import (EulerProblem, euler_rhs, graph_limit_experiment, graph_limit_experiment_2, holder_estimate,
                         opinion_constant_closed_form, reference_solution)
from mflab.kernels import opinion_kernel, zero_kernel
from mflab.measures import empirical, monokinetic
from mflab.particles import ParticleState, integrate, particle_rhs
from mflab.partition import PartitionField, uniform_partition

ID = lambda x: np.asarray(x, dtype=float)


def test_euler_rhs_examples():
    p = uniform_partition(2)
    prob = EulerProblem(opinion_kernel(1.0), p, ID)
    assert euler_rhs(prob, 0, np.array([0.0, 2.0]))[:, 0].tolist() == [1.0, -1.0]
    assert np.all(euler_rhs(prob, 0, np.full(2, 3.0)) == 0)
    rng = np.random.default_rng(0)
    p9 = uniform_partition(9)
    k = opinion_kernel(lambda x, xp: np.exp(x - xp))
    y = rng.normal(size=(9, 1))
    assert np.array_equal(euler_rhs(EulerProblem(k, p9, ID), 0.2, y), particle_rhs(k, 0.2, ParticleState(p9.tags, y)))
    with pytest.raises(ValueError):
        euler_rhs(prob, 0, np.zeros(3))


def test_reference_solution_examples():
    prob = EulerProblem(opinion_kernel(1.0), uniform_partition(1024), ID)
    ref = reference_solution(prob, 1.0, 1e-3)
    exact = opinion_constant_closed_form(1.0, ID, mean=0.5)
    last = prob.partition.tags[-1]
    assert ref(np.array([last]))[0, 0] == pytest.approx(exact(1.0, last), abs=1e-12)
    # x = 1 reads the last cell: off by at most the cell width times e^{-t}
    assert abs(ref(np.array([1.0]))[0, 0] - (0.5 + 0.5 * math.exp(-1))) <= math.exp(-1) / 1024 + 1e-12
    z = reference_solution(EulerProblem(zero_kernel(), uniform_partition(16), ID), 1.0, 0.1)
    assert np.array_equal(z.values[:, 0], uniform_partition(16).tags)
    sym = opinion_kernel(lambda x, xp: 1 + x * xp)
    r = reference_solution(EulerProblem(sym, uniform_partition(64), lambda x: np.sin(5 * x)), 1.0, 1e-2)
    assert r.values.mean() == pytest.approx(np.mean(np.sin(5 * uniform_partition(64).tags)), abs=1e-12)


def test_closed_form_matches_formula():
    y = opinion_constant_closed_form(1.0, ID)
    assert y(1.0, np.array([1.0]))[0] == pytest.approx(0.5 + 0.5 * math.exp(-1), abs=1e-12)


def test_graph_limit_zero_kernel():
    t = graph_limit_experiment(zero_kernel(), ID, [4, 8, 16], 1.0, 0.1, reference=64)
    assert np.all(t.error == 0) and t.fit is None
    t2 = graph_limit_experiment_2(zero_kernel(), lambda p: p.tags, [4, 8], 1.0, 0.1, M=64)
    assert np.all(t2.error == 0)


def test_graph_limit_small_reference_error():
    with pytest.raises(ValueError, match="too small"):
        graph_limit_experiment(opinion_kernel(1.0), ID, [16, 32], 1.0, 0.1, reference=64)
    with pytest.raises(ValueError, match="ascending"):
        graph_limit_experiment(opinion_kernel(1.0), ID, [32, 16], 1.0, 0.1)


def test_graph_limit_2_decay_and_identity():
    k = opinion_kernel(1.0)
    # constant sigma: the lifted fine system reproduces the coarse one exactly
    t = graph_limit_experiment_2(k, lambda p: p.tags, [8, 16, 32, 64], 1.0, 1e-2, M=1024)
    assert np.all(t.error <= 1e-12)
    t = graph_limit_experiment_2(opinion_kernel(lambda x, xp: 1 + x * xp), lambda p: p.tags, [8, 16, 32, 64],
                                 1.0, 1e-2, M=1024)
    assert -1.15 <= t.fit.slope <= -0.85
    assert np.all(t.bound_ok())
    same = graph_limit_experiment_2(k, lambda p: p.tags, [8], 1.0, 1e-2, M=8)
    assert same.error[0] <= 1e-8


def test_particle_euler_round_trip():
    k = opinion_kernel(lambda x, xp: 1 + x * xp)
    p = uniform_partition(8)
    y0 = lambda x: np.cos(3 * x)
    ref = reference_solution(EulerProblem(k, p, y0), 1.0, 1e-3)
    tr = integrate(k, ParticleState(p.tags, y0(p.tags)), 1.0, 1e-3)
    mono, emp = monokinetic(p, ref), empirical(tr.state_at(-1))
    assert np.max(np.abs(mono.xi - emp.xi)) <= 1e-10 and np.array_equal(mono.x, emp.x)


def test_opinion_linearity():
    rng = np.random.default_rng(1)
    prob = EulerProblem(opinion_kernel(lambda x, xp: 1 + np.cos(x * xp)), uniform_partition(20), ID)
    a, b = rng.normal(size=(20, 1)), rng.normal(size=(20, 1))
    np.testing.assert_allclose(euler_rhs(prob, 0, a + b), euler_rhs(prob, 0, a) + euler_rhs(prob, 0, b), atol=1e-12)
    np.testing.assert_allclose(euler_rhs(prob, 0, 2.5 * a), 2.5 * euler_rhs(prob, 0, a), atol=1e-12)


def test_holder_estimate():
    assert holder_estimate(ID) == pytest.approx(1.0)
    assert holder_estimate(lambda x: np.sqrt(x), 0.5) <= 1.0 + 1e-12


def test_table_csv():
    t = graph_limit_experiment(zero_kernel(), ID, [4, 8, 16], 0.5, 0.1, reference=64)
    assert t.to_csv().splitlines()[0] == "N,error,bound"
