import numpy as np
import pytest

from ioprops.errors import DegenerateInputError, SingularOperatorError
from ioprops.estimator import EstimatorConfig, normalize
from ioprops.lti import ImpulseResponse, oscillator, random_stable_plant, zoh_discretize
from ioprops.passivity import estimate_passivity, exact_line_search, grad_rho2, retract, rho2
from ioprops.probe import ProbeSession
from ioprops.spectra import dense_operator, passivity_summary, true_passivity

FIXTURE = (1, 20, 200)
SMALL = (2, 4, 16)


def static(beta, n=8):
    taps = np.zeros(n)
    taps[0] = beta
    return ImpulseResponse(taps)


def tangent(rng, u):
    d = rng.standard_normal(u.shape)
    d -= (d @ u) * u
    return d / np.linalg.norm(d)


def oscillator_plant():
    return zoh_discretize(oscillator(), 0.01, 1000)


def test_rho2_identity():
    u = normalize(np.random.default_rng(0).standard_normal(8))
    s = ProbeSession(static(1.0))
    assert rho2(s, u)[0] == pytest.approx(1.0, abs=1e-15)
    assert s.samples_used == 3


def test_rho2_two_by_two_closed_form():
    eps = 0.01
    a, b = 0.6, -0.8
    # G = [[eps, 0], [1, eps]]: u^T sym(G) u = eps a^2 + a b + eps b^2, |Gu|^2 = (eps a)^2 + (a + eps b)^2
    expected = (eps * a * a + a * b + eps * b * b) / ((eps * a) ** 2 + (a + eps * b) ** 2)
    value = rho2(ProbeSession(ImpulseResponse([eps, 1.0])), np.array([a, b]))[0]
    assert value == pytest.approx(expected, rel=1e-13)


def test_rho2_oscillator_constant_input():
    h = oscillator_plant()
    value = rho2(ProbeSession(h), normalize(np.ones(1000)))[0]
    assert value == pytest.approx(0.5631, abs=1e-4)


def test_rho2_singular_and_degenerate():
    with pytest.raises(SingularOperatorError):
        rho2(ProbeSession(static(0.0)), normalize(np.ones(8)))
    with pytest.raises(DegenerateInputError):
        rho2(ProbeSession(static(1.0)), np.zeros(8))


def test_grad_rho2_finite_differences_and_tangency():
    h = random_stable_plant(3, 8, 64)
    rng = np.random.default_rng(1)
    s = ProbeSession(h)
    u = normalize(rng.standard_normal(64))
    value, sym_u, gram_u = rho2(s, u)
    g = grad_rho2(u, sym_u, gram_u, value)
    assert abs(g @ u) <= 1e-10 * max(1.0, np.linalg.norm(g))
    eps = 1e-5
    for _ in range(5):
        d = tangent(rng, u)
        fd = (rho2(s, u + eps * d)[0] - rho2(s, u - eps * d)[0]) / (2 * eps)
        assert fd == pytest.approx(g @ d, rel=1e-6)


def test_grad_rho2_zero_at_generalized_eigenvector_and_identity():
    h = random_stable_plant(*SMALL)
    v = normalize(passivity_summary(h).eigenvectors[:, -1])
    value, sym_u, gram_u = rho2(ProbeSession(h), v)
    assert np.linalg.norm(grad_rho2(v, sym_u, gram_u, value)) <= 1e-9
    u = normalize(np.ones(8))
    value, sym_u, gram_u = rho2(ProbeSession(static(1.0)), u)
    np.testing.assert_allclose(grad_rho2(u, sym_u, gram_u, value), 0.0, atol=1e-15)


def test_line_search_zero_direction_falls_back():
    h = random_stable_plant(*SMALL)
    s = ProbeSession(h)
    u = normalize(np.ones(16))
    _, sym_u, gram_u = rho2(s, u)
    alpha, exact, _ = exact_line_search(s, u, np.zeros(16), {"sym_u": sym_u, "gram_u": gram_u}, 0.05)
    assert not exact and alpha == 0.05
    assert s.samples_used == 6


def test_line_search_two_by_two_closed_form():
    eps = 0.01
    M = np.array([[eps, 0.5], [0.5, eps]])
    N = np.array([[1 + eps ** 2, eps], [eps, eps ** 2]])
    qa = N[0, 0] * N[1, 1] - N[0, 1] ** 2
    qb = -(M[0, 0] * N[1, 1] + M[1, 1] * N[0, 0]) + 2 * M[0, 1] * N[0, 1]
    qc = M[0, 0] * M[1, 1] - M[0, 1] ** 2
    lam = (-qb - np.sqrt(qb * qb - 4 * qa * qc)) / (2 * qa)
    expected = -(M[0, 0] - lam * N[0, 0]) / (M[0, 1] - lam * N[0, 1])
    s = ProbeSession(ImpulseResponse([eps, 1.0]))
    u, p = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    _, sym_u, gram_u = rho2(s, u)
    alpha, exact, _ = exact_line_search(s, u, p, {"sym_u": sym_u, "gram_u": gram_u})
    assert exact
    assert alpha == pytest.approx(expected, rel=1e-9)


def test_line_search_optimal_on_grid():
    h = random_stable_plant(4, 8, 60)
    s = ProbeSession(h)
    u = normalize(np.random.default_rng(2).standard_normal(60))
    value, sym_u, gram_u = rho2(s, u)
    p = -grad_rho2(u, sym_u, gram_u, value)
    alpha, exact, _ = exact_line_search(s, u, p, {"sym_u": sym_u, "gram_u": gram_u})
    assert exact
    best = rho2(s, retract(u, alpha * p))[0]
    for a in np.linspace(-10 * alpha, 10 * alpha, 101):
        assert best <= rho2(s, retract(u, a * p))[0] + 1e-10


def test_retract_examples():
    rng = np.random.default_rng(3)
    u = normalize(rng.standard_normal(10))
    np.testing.assert_array_equal(retract(u, np.zeros(10)), u)
    np.testing.assert_allclose(retract(u, u), u, atol=1e-15)
    for _ in range(10):
        assert np.linalg.norm(retract(u, rng.standard_normal(10))) == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(DegenerateInputError):
        retract(u, -u)


def test_identity_plant_estimates():
    est = estimate_passivity(ProbeSession(static(1.0, 16)),
                             EstimatorConfig("gradient_descent_linesearch", estimate_nu=True))
    assert est.s_hat == pytest.approx(-1.0, abs=1e-14)
    assert est.nu_hat == pytest.approx(1.0, abs=1e-14)
    assert est.trace.rows[0][2] == pytest.approx(-1.0, abs=1e-14)


def test_oscillator_not_passive_after_seven_iterations():
    est = estimate_passivity(ProbeSession(oscillator_plant()),
                             EstimatorConfig("gradient_descent_linesearch", max_iter=7, rel_tol=0.0, grad_tol=0.0))
    positive = [row for row in est.trace.rows if row[2] > 0]
    assert positive and positive[0][0] <= 7 and positive[0][4] <= 24


def test_random_plant_three_thousand_samples():
    h = random_stable_plant(*FIXTURE)
    est = estimate_passivity(ProbeSession(h), EstimatorConfig("gradient_descent_linesearch", max_samples=3000,
                                                              rel_tol=0.0, grad_tol=0.0))
    assert est.s_hat == pytest.approx(true_passivity(h)[0], rel=1e-2)


def test_monotone_descent_and_sample_reuse():
    h = random_stable_plant(*FIXTURE)
    est = estimate_passivity(ProbeSession(h), EstimatorConfig("gradient_descent_linesearch", max_iter=60,
                                                              rel_tol=0.0, grad_tol=0.0))
    rho = est.trace.column("rho")
    assert np.all(np.diff(rho) <= 1e-12)
    k = est.trace.column("k")
    np.testing.assert_array_equal(est.trace.column("samples"), 3 + 3 * k)
    assert abs(np.linalg.norm(est.u_current) - 1) <= 1e-12


def test_cached_vectors_consistent():
    h = random_stable_plant(*FIXTURE)
    G = dense_operator(h)
    est = estimate_passivity(ProbeSession(h), EstimatorConfig("gradient_descent_linesearch", max_iter=20,
                                                              rel_tol=0.0, grad_tol=0.0))
    u = est.u_current
    np.testing.assert_allclose(est.cached["sym_u"], (G + G.T) @ u, atol=1e-10)
    np.testing.assert_allclose(est.cached["gram_u"], G.T @ G @ u, atol=1e-10 * np.linalg.norm(G) ** 2)


def converge(h, **kw):
    # the relative-change rule fires early on slow descents; stop on the gradient instead
    cfg = EstimatorConfig("gradient_descent_linesearch", rel_tol=0.0, max_samples=20_000, **kw)
    return estimate_passivity(ProbeSession(h), cfg)


def test_critical_point_residual_at_convergence():
    h = random_stable_plant(*SMALL)
    est = converge(h)
    assert est.stop_reason == "grad_tol"
    rho = -est.s_hat
    res = 0.5 * est.cached["sym_u"] - rho * est.cached["gram_u"]
    assert np.linalg.norm(res) <= 1e-6
    assert est.s_hat == pytest.approx(true_passivity(h)[0], rel=1e-6)


def test_scaling_plant_scales_quotient():
    h = random_stable_plant(*SMALL)
    beta = 3.0
    a = converge(h)
    b = converge(ImpulseResponse(beta * h.taps))
    assert -b.s_hat == pytest.approx(-a.s_hat / beta, rel=1e-6)


def test_fixed_step_cost():
    h = random_stable_plant(*SMALL)
    est = estimate_passivity(ProbeSession(h), EstimatorConfig("gradient_descent", alpha=0.001, max_iter=5,
                                                              rel_tol=0.0, grad_tol=0.0))
    np.testing.assert_array_equal(est.trace.column("samples"), 3 + 3 * est.trace.column("k"))
    assert est.nu_hat is None


def test_nu_estimate():
    h = random_stable_plant(*SMALL)
    est = converge(h, estimate_nu=True)
    np.testing.assert_array_equal(np.diff(est.nu_trace.column("samples")), 2)
    assert est.samples_used == est.nu_trace.rows[-1][4]
    assert est.nu_hat == pytest.approx(true_passivity(h)[1], rel=1e-6)


def test_unknown_method():
    with pytest.raises(ValueError):
        estimate_passivity(ProbeSession(static(1.0)), EstimatorConfig("newton"))
