import csv
from pathlib import Path

import numpy as np
import pytest

from ioprops.errors import BudgetExhausted, DimensionError
from ioprops.gain import grad_rho1, rho1
from ioprops.lti import ImpulseResponse, MimoPlant, random_mimo_plant, random_stable_plant
from ioprops.probe import NoiseModel, ProbeSession, reverse
from ioprops.spectra import dense_operator

GOLDEN = Path(__file__).parent / "golden"


def unit(n, k):
    e = np.zeros(n)
    e[k] = 1.0
    return e


def identity(n):
    return ImpulseResponse(unit(n, 0))


def test_identity_evaluate():
    u = np.random.default_rng(0).standard_normal(6)
    s = ProbeSession(identity(6))
    np.testing.assert_array_equal(s.evaluate(u), u)
    assert s.samples_used == 1


def test_zero_sigma_behaves_as_noiseless():
    h = random_stable_plant(0, 4, 32)
    u = np.random.default_rng(1).standard_normal(32)
    quiet = ProbeSession(h, NoiseModel("additive_gaussian", sigma=0.0, seed=3))
    np.testing.assert_array_equal(quiet.evaluate(u), ProbeSession(h).evaluate(u))
    assert not quiet.is_noisy


def test_multiplicative_noise_matches_golden_stream():
    with open(GOLDEN / "noise_stream.csv") as fh:
        rows = list(csv.DictReader(fh))
    n = 1 + max(int(r["t"]) for r in rows)
    evals = 1 + max(int(r["evaluation"]) for r in rows)
    expected = np.array([float(r["value"]) for r in rows]).reshape(evals, n)
    s = ProbeSession(identity(n), NoiseModel("multiplicative_uniform", epsilon_bar=0.5, seed=7))
    got = np.array([s.evaluate(np.ones(n)) for _ in range(evals)])
    np.testing.assert_array_equal(got, expected)


def test_noise_parameters_validated():
    with pytest.raises(ValueError):
        NoiseModel("pink")
    with pytest.raises(ValueError):
        NoiseModel("additive_gaussian", sigma=-1.0)


def test_reverse_examples():
    np.testing.assert_array_equal(reverse([1.0, 2.0, 3.0]), [3.0, 2.0, 1.0])
    pal = np.array([1.0, 4.0, 2.0, 4.0, 1.0])
    np.testing.assert_array_equal(reverse(pal), pal)
    u = np.random.default_rng(2).standard_normal((3, 9))
    np.testing.assert_array_equal(reverse(reverse(u)), u)


def test_adjoint_identity_plant():
    y = np.random.default_rng(3).standard_normal(5)
    np.testing.assert_array_equal(ProbeSession(identity(5)).adjoint_apply(y), y)


def test_adjoint_of_delay_is_backward_shift():
    s = ProbeSession(ImpulseResponse(unit(5, 1)))
    np.testing.assert_array_equal(s.adjoint_apply(unit(5, 1)), unit(5, 0))
    assert s.samples_used == 1


def test_adjoint_matches_dense_transpose():
    h = random_stable_plant(2, 6, 40)
    y = np.random.default_rng(4).standard_normal(40)
    G = dense_operator(h)
    np.testing.assert_allclose(ProbeSession(h).adjoint_apply(y), G.T @ y, atol=1e-10)


def test_adjoint_inner_product_identity():
    h = random_stable_plant(5, 8, 64)
    s = ProbeSession(h)
    rng = np.random.default_rng(5)
    for _ in range(100):
        u, v = rng.standard_normal(64), rng.standard_normal(64)
        lhs = s.evaluate(u) @ v
        rhs = u @ s.adjoint_apply(v)
        assert abs(lhs - rhs) <= 1e-12 * np.linalg.norm(u) * np.linalg.norm(v)


def test_gram_identity_and_delay():
    u = np.random.default_rng(6).standard_normal(4)
    y, g = ProbeSession(identity(4)).gram_apply(u)
    np.testing.assert_array_equal(y, u)
    np.testing.assert_array_equal(g, u)
    s = ProbeSession(ImpulseResponse(unit(4, 1)))
    y, g = s.gram_apply(unit(4, 0))
    np.testing.assert_array_equal(y, unit(4, 1))
    np.testing.assert_array_equal(g, unit(4, 0))
    assert s.samples_used == 2


def test_gram_matches_dense():
    h = random_stable_plant(3, 10, 50)
    u = np.random.default_rng(7).standard_normal(50)
    G = dense_operator(h)
    _, g = ProbeSession(h).gram_apply(u)
    np.testing.assert_allclose(g, G.T @ G @ u, atol=1e-10 * np.linalg.norm(G.T @ G @ u))


def test_sym_probe_cost_and_values():
    h = random_stable_plant(4, 6, 30)
    G = dense_operator(h)
    u = np.random.default_rng(8).standard_normal(30)
    s = ProbeSession(h)
    y, gt_u, gram_u = s.sym_probe(u)
    assert s.samples_used == 3
    np.testing.assert_allclose(y, G @ u, atol=1e-10)
    np.testing.assert_allclose(gt_u, G.T @ u, atol=1e-10)
    np.testing.assert_allclose(gram_u, G.T @ G @ u, atol=1e-9)


def test_mimo_adjoint_m1_equals_siso():
    h = random_stable_plant(1, 4, 12)
    y = np.random.default_rng(9).standard_normal(12)
    s = ProbeSession(h)
    np.testing.assert_array_equal(s.mimo_adjoint_apply(y), ProbeSession(h).adjoint_apply(y))
    assert s.samples_used == 1


def test_mimo_block_diagonal_is_channelwise():
    a, b = random_stable_plant(1, 3, 10), random_stable_plant(2, 3, 10)
    taps = np.zeros((2, 2, 10))
    taps[0, 0], taps[1, 1] = a.taps, b.taps
    Y = np.random.default_rng(10).standard_normal((2, 10))
    out = ProbeSession(MimoPlant(taps)).mimo_adjoint_apply(Y)
    np.testing.assert_allclose(out[0], ProbeSession(a).adjoint_apply(Y[0]), atol=1e-14)
    np.testing.assert_allclose(out[1], ProbeSession(b).adjoint_apply(Y[1]), atol=1e-14)


@pytest.mark.parametrize("m", [2, 3])
def test_mimo_adjoint_matches_dense(m):
    p = random_mimo_plant(4, m, 4, 15)
    Y = np.random.default_rng(m).standard_normal((m, 15))
    s = ProbeSession(p)
    out = s.mimo_adjoint_apply(Y)
    assert s.samples_used == m * m
    np.testing.assert_allclose(out.ravel(), dense_operator(p).T @ Y.ravel(), atol=1e-10)
    s.gram_apply(Y)
    assert s.samples_used == 2 * m * m + 1


def test_sym_probe_rejects_mimo():
    with pytest.raises(DimensionError):
        ProbeSession(random_mimo_plant(0, 2, 2, 5)).sym_probe(np.ones((2, 5)))


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        ProbeSession(identity(4)).evaluate(np.ones(5))


def test_budget_is_hard_and_counts_nothing_on_failure():
    s = ProbeSession(identity(4), budget=4)
    s.sym_probe(np.ones(4))
    with pytest.raises(BudgetExhausted) as info:
        s.gram_apply(np.ones(4))
    assert s.samples_used == 3
    assert info.value.samples_used == 3 and info.value.budget == 4
    s.evaluate(np.ones(4))
    with pytest.raises(BudgetExhausted):
        s.evaluate(np.ones(4))
    assert s.samples_used == 4


def test_determinism_same_seed_same_outputs():
    h = random_stable_plant(6, 5, 20)
    u = np.random.default_rng(11).standard_normal(20)
    noise = NoiseModel("additive_gaussian", sigma=0.3, seed=42)
    a, b = ProbeSession(h, noise), ProbeSession(h, noise)
    for _ in range(3):
        np.testing.assert_array_equal(a.gram_apply(u)[1], b.gram_apply(u)[1])


def test_noisy_gradient_unbiased_small():
    h = random_stable_plant(1, 6, 32)
    u = np.sin(np.arange(1, 33.0))
    u /= np.linalg.norm(u)
    value, _, w = rho1(ProbeSession(h), u)
    clean = grad_rho1(u, w, value)
    s = ProbeSession(h, NoiseModel("multiplicative_uniform", epsilon_bar=0.5, seed=3))
    draws = []
    for _ in range(2000):
        v, _, w = rho1(s, u)
        draws.append(grad_rho1(u, w, v))
    draws = np.array(draws)
    se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - clean) <= 4 * se + 1e-12)
