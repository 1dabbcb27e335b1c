import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mflab.measures import ConditionalFamily, DiscreteMeasure
from mflab.wasserstein import LP_ATOM_CAP, integer_masses, l1nu_w1, w1, w1_line, w1_lp


def dm(x, xi, w=None):
    x = np.asarray(x, float)
    w = np.full(x.size, 1 / x.size) if w is None else np.asarray(w, float)
    return DiscreteMeasure(x, np.asarray(xi, float), w)


def test_w1_line_examples():
    assert w1_line([0.0], [1.0], [1.0], [1.0]) == 1.0
    assert w1_line([0.2, 0.7], [0.5, 0.5], [0.2, 0.7], [0.5, 0.5]) == 0.0
    pos = (np.arange(4096) + 0.5) / 4096
    for N in (2, 4, 8):
        t = (np.arange(N) + 0.5) / N
        assert abs(w1_line(pos, np.full(4096, 1 / 4096), t, np.full(N, 1 / N)) - 1 / (4 * N)) <= 2e-4
    with pytest.raises(ValueError):
        w1_line([], [], [0.0], [1.0])


def test_w1_lp_examples():
    a = dm([0.0, 1.0], [[0.0], [0.0]])
    b = dm([0.0, 1.0], [[1.0], [1.0]])
    assert w1(a, b) == pytest.approx(1.0, abs=1e-12)
    c, plan = w1_lp(a, a)
    assert c == 0.0
    assert sorted(zip(plan.source.tolist(), plan.target.tolist())) == [(0, 0), (1, 1)]


def test_w1_lp_cap():
    n = LP_ATOM_CAP + 1
    big = dm(np.zeros(n), np.zeros((n, 1)))
    with pytest.raises(ValueError, match="w1_line"):
        w1_lp(big, dm([0.0], [[0.0]]))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=5), st.lists(st.floats(-3, 3), min_size=1, max_size=5),
       st.integers(0, 10 ** 6))
def test_lp_matches_line(a, b, seed):
    rng = np.random.default_rng(seed)
    wa = rng.integers(1, 5, len(a)).astype(float)
    wb = rng.integers(1, 5, len(b)).astype(float)
    wa, wb = wa / wa.sum(), wb / wb.sum()
    mu1 = DiscreteMeasure(np.zeros(len(a)), np.array(a)[:, None], wa)
    mu2 = DiscreteMeasure(np.zeros(len(b)), np.array(b)[:, None], wb)
    assert w1(mu1, mu2) == pytest.approx(w1_line(a, wa, b, wb), abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_plan_marginals_and_cost(seed):
    rng = np.random.default_rng(seed)
    n1, n2 = rng.integers(1, 6, 2)
    w1v, w2v = rng.integers(1, 7, n1).astype(float), rng.integers(1, 7, n2).astype(float)
    mu1 = dm(rng.random(n1), rng.normal(size=(n1, 2)), w1v / w1v.sum())
    mu2 = dm(rng.random(n2), rng.normal(size=(n2, 2)), w2v / w2v.sum())
    cost, plan = w1_lp(mu1, mu2, "torus")
    r, c = plan.marginals(n1, n2)
    np.testing.assert_allclose(r, mu1.weights, atol=1e-10)
    np.testing.assert_allclose(c, mu2.weights, atol=1e-10)
    assert cost == pytest.approx(float(np.sum(plan.mass * plan.distance)), abs=1e-12)
    assert plan.exact_grid
    assert w1_lp(mu2, mu1, "torus")[0] == pytest.approx(cost, abs=1e-10)


def test_lp_optimal_against_scipy():
    from scipy.optimize import linprog
    rng = np.random.default_rng(9)
    for _ in range(10):
        mu1 = dm(rng.random(4), rng.normal(size=(4, 1)), np.array([1, 2, 3, 4]) / 10)
        mu2 = dm(rng.random(3), rng.normal(size=(3, 1)), np.array([1, 1, 1]) / 3)
        D = np.sqrt((mu1.x[:, 0, None] - mu2.x[None, :, 0]) ** 2 + (mu1.xi[:, 0, 0, None] - mu2.xi[None, :, 0, 0]) ** 2)
        A = np.vstack([np.kron(np.eye(4), np.ones(3)), np.kron(np.ones(4), np.eye(3))])
        res = linprog(D.reshape(-1), A_eq=A, b_eq=np.concatenate([mu1.weights, mu2.weights]), method="highs")
        assert w1(mu1, mu2) == pytest.approx(res.fun, abs=1e-9)


def test_integer_masses():
    a, b, L, exact = integer_masses(np.array([1 / 3, 2 / 3]), np.array([0.5, 0.5]))
    assert L == 6 and a == [2, 4] and b == [3, 3] and exact


def test_l1nu_examples():
    def fam(atoms):
        n = len(atoms)
        return ConditionalFamily(np.arange(n) / n + 0.1, np.full(n, 1 / n),
                                 tuple(np.asarray(a, float).reshape(-1, 1) for a in atoms),
                                 tuple(np.full(len(a), 1 / len(a)) for a in atoms))
    f = fam([[0.0, 1.0], [2.0]])
    assert l1nu_w1(f, f) == 0
    assert l1nu_w1(fam([[0.0]]), fam([[2.5]])) == 2.5
    assert l1nu_w1(fam([[0.0], [0.0]]), fam([[1.0], [3.0]])) == 2.0
    with pytest.raises(ValueError, match="same marginal"):
        l1nu_w1(fam([[0.0]]), fam([[0.0], [1.0]]))
