import numpy as np
import pytest

from mflab.experiments import (LEMMAS, chaos_suite, consensus_experiment, dirac_state, empirical_rate,
                               lemma_instance, lemma_suite, rng_for, round_trips, tensor_lower_counterexample,
                               vlasov_stability)
from mflab.kernels import cucker_smale_kernel, hamiltonian_pair_kernel, opinion_kernel


def test_rng_reproducible():
    assert np.array_equal(rng_for(7).random(5), rng_for(7).random(5))
    assert not np.array_equal(rng_for(7).random(5), rng_for(8).random(5))
    rng_for(2 ** 64 - 1).random()


def test_empirical_rate_values():
    for N, w in empirical_rate([2, 4, 8, 16, 32]):
        assert abs(w - 1 / (4 * N)) <= 2e-4 and w <= 1 / N


def test_lemma_instance_covers_all_lemmas():
    res = lemma_instance(rng_for(0), 0)
    assert sorted(r.lemma for r in res) == sorted(LEMMAS)
    assert all(r.passed for r in res)


def test_lemma_suite_small():
    res = lemma_suite(20, seed=3)
    assert len(res) == 20 * len(LEMMAS) and all(r.passed for r in res)


def test_tensor_lower_needs_unit_diameter():
    lhs, rhs = tensor_lower_counterexample()
    assert lhs == pytest.approx(4.0) and rhs == pytest.approx(2 * np.sqrt(2)) and lhs > rhs


def test_chaos_suite_verdicts():
    certs = chaos_suite(opinion_kernel(1.0), lambda x: x, [3, 4], t_list=(0.0, 0.5), reference_M=8, dt=1e-2)
    assert [c.verdict for c in certs if c.t == 0] == ["pass", "pass"]
    assert all(c.verdict in ("pass", "inconclusive") for c in certs)
    assert all(not c.estimated for c in certs if c.t == 0)


def test_consensus_small():
    r = consensus_experiment(lambda x, xp: 1 + x * xp, N=3, K=6, t_end=0.5, dt=1e-3)
    assert r.max_rel_error <= 1e-5
    assert r.winner == {3: "k*S", 4: "k*S"}
    np.testing.assert_allclose(r.rates[3], 3 * r.S, rtol=1e-6)
    assert r.to_csv().splitlines()[0].startswith("site,x_i,S_i,T_ratio")


def test_vlasov_stability_small():
    rows = vlasov_stability(N=6, t_list=(0.5,), dt=1e-2)
    assert all(r.passed for r in rows) and rows[0].C_hat >= 1


@pytest.mark.parametrize("kernel,y0", [
    (opinion_kernel(lambda x, xp: 1 + x * xp), lambda x: np.cos(3 * x)),
    (cucker_smale_kernel(lambda r: 1 / (1 + r * r)), lambda x: np.column_stack([x, np.sin(4 * x)])),
    (hamiltonian_pair_kernel(lambda q, p: (q, p), lambda q, p, qq, pp: (q - qq, 0 * p, qq - q, 0 * pp)),
     lambda x: np.column_stack([x, 1 - x])),
])
def test_round_trips(kernel, y0):
    rt = round_trips(kernel, dirac_state(6, y0), t_end=0.3, dt=1e-2)
    assert rt.vlasov <= 1e-10 and rt.euler <= 1e-10 and rt.moment == 0.0
