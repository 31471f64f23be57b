import csv
from pathlib import Path

import numpy as np
import pytest

from ioprops.errors import SingularOperatorError
from ioprops.lti import ImpulseResponse, oscillator, random_mimo_plant, random_stable_plant, zoh_discretize
from ioprops.spectra import (
    JACOBI_MAX_N,
    cone_matrix,
    conditioning,
    dense_operator,
    gain_summary,
    golden_section,
    jacobi_eigh,
    pencil_eig,
    sym_eig,
    true_cone,
    true_gain,
    true_passivity,
)

GOLDEN = Path(__file__).parent / "golden"


def static(beta, n=6):
    taps = np.zeros(n)
    taps[0] = beta
    return ImpulseResponse(taps)


def reference_values():
    with open(GOLDEN / "reference_values.csv") as fh:
        return {(r["plant_id"], r["property"]): (float(r["value"]), float(r["tolerance"])) for r in csv.DictReader(fh)}


@pytest.mark.parametrize("n", [1, 2, 5, 16, 33])
def test_jacobi_matches_lapack(n):
    rng = np.random.default_rng(n)
    X = rng.standard_normal((n, n))
    M = X + X.T
    w, V = jacobi_eigh(M)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(M), atol=1e-10 * np.linalg.norm(M))
    np.testing.assert_allclose(V.T @ V, np.eye(n), atol=1e-10)


def test_jacobi_handles_repeated_eigenvalues():
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((6, 6)))
    M = Q @ np.diag([3.0, 3.0, 3.0, 1.0, -2.0, -2.0]) @ Q.T
    w, _ = jacobi_eigh(M)
    np.testing.assert_allclose(w, [-2, -2, 1, 3, 3, 3], atol=1e-12)


@pytest.mark.parametrize("method", ["jacobi", "lapack"])
def test_sym_eig_reconstruction_and_residual(method):
    rng = np.random.default_rng(1)
    X = rng.standard_normal((20, 20))
    M = X @ X.T
    summ = sym_eig(M, method)
    w, V = summ.eigenvalues, summ.eigenvectors
    assert np.all(np.diff(w) <= 0)
    np.testing.assert_allclose(V @ np.diag(w) @ V.T, M, atol=1e-8 * np.linalg.norm(M))
    res = np.linalg.norm(M @ V - V * w, axis=0)
    assert np.all(res <= 1e-8 * np.linalg.norm(M))


def test_sym_eig_auto_switches_solver():
    n = JACOBI_MAX_N + 1
    X = np.random.default_rng(2).standard_normal((n, n))
    w = sym_eig(X + X.T).eigenvalues
    np.testing.assert_allclose(w, np.linalg.eigvalsh(X + X.T)[::-1], atol=1e-10 * n)


def test_pencil_residual_and_agreement_with_inverse_solve():
    h = random_stable_plant(3, 8, 120)
    G = dense_operator(h)
    M, N = 0.5 * (G + G.T), G.T @ G
    summ = pencil_eig(M, N)
    w, V = summ.eigenvalues, summ.eigenvectors
    res = np.linalg.norm(M @ V - (N @ V) * w, axis=0)
    assert np.all(res <= 1e-8 * (np.linalg.norm(M) + np.linalg.norm(N)))
    np.testing.assert_allclose(V.T @ N @ V, np.eye(120), atol=1e-8)
    direct = np.sort(np.linalg.eigvals(np.linalg.solve(N, M)).real)[::-1]
    np.testing.assert_allclose(w, direct, atol=1e-8 * np.max(np.abs(w)))


def test_pencil_rejects_indefinite_denominator():
    with pytest.raises(SingularOperatorError):
        pencil_eig(np.eye(2), np.diag([1.0, -1.0]))


def test_gain_identity_and_static():
    assert true_gain(static(1.0))[0] == pytest.approx(1.0, abs=1e-14)
    assert true_gain(static(2.0))[0] == pytest.approx(2.0, abs=1e-14)


def test_gain_vector_sign_and_norm():
    gamma, u = true_gain(random_stable_plant(0, 6, 40))
    assert np.linalg.norm(u) == pytest.approx(1.0, abs=1e-12)
    assert u[np.argmax(np.abs(u))] > 0
    assert gamma == pytest.approx(np.linalg.norm(dense_operator(random_stable_plant(0, 6, 40)), 2), rel=1e-10)


def test_gain_mimo_against_svd():
    p = random_mimo_plant(2, 2, 3, 20)
    gamma, u = true_gain(p)
    assert u.shape == (2, 20)
    assert gamma == pytest.approx(np.linalg.svd(dense_operator(p), compute_uv=False)[0], rel=1e-10)


def test_passivity_identity():
    s, nu = true_passivity(static(1.0))
    assert s == pytest.approx(-1.0, abs=1e-12)
    assert nu == pytest.approx(1.0, abs=1e-12)


def test_passivity_homogeneity():
    h = random_stable_plant(4, 6, 50)
    beta = 2.5
    s1, nu1 = true_passivity(h)
    s2, nu2 = true_passivity(ImpulseResponse(beta * h.taps))
    assert s2 == pytest.approx(s1 / beta, rel=1e-9)
    assert nu2 == pytest.approx(beta * nu1, rel=1e-9)


def test_passivity_zero_leading_tap():
    with pytest.raises(SingularOperatorError):
        true_passivity(ImpulseResponse([0.0, 1.0, 0.5]))


def test_cone_identity_and_static():
    c, r = true_cone(static(1.0))
    assert c == pytest.approx(1.0, abs=1e-9) and r == pytest.approx(0.0, abs=1e-9)
    c, r = true_cone(static(-1.7))
    assert c == pytest.approx(-1.7, abs=1e-9) and r == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_cone_radius_below_gain_and_consistent(seed):
    h = random_stable_plant(seed, 6, 60)
    G = dense_operator(h)
    c, r = true_cone(h)
    assert r <= true_gain(h)[0] + 1e-12
    assert r ** 2 == pytest.approx(np.linalg.eigvalsh(cone_matrix(G, c))[-1], rel=1e-8)


def test_cone_top_eigenvalue_midpoint_convex():
    G = dense_operator(random_stable_plant(5, 8, 40))
    rng = np.random.default_rng(6)
    top = lambda c: np.linalg.eigvalsh(cone_matrix(G, c))[-1]
    for c1, c2 in rng.uniform(-5, 5, size=(50, 2)):
        assert top(0.5 * (c1 + c2)) <= 0.5 * top(c1) + 0.5 * top(c2) + 1e-10


def test_golden_section_quadratic():
    assert golden_section(lambda x: (x - 0.3) ** 2, -2.0, 2.0) == pytest.approx(0.3, abs=1e-9)


def test_conditioning_identity_flags_degenerate():
    rep = conditioning(static(1.0))
    assert rep.concavity_l == 0.0 and not rep.simple and rep.predicted_rate == 1.0


def test_conditioning_three_by_three_hand_values():
    # G = [[2,0,0],[1,2,0],[0,1,2]], G^T G has characteristic polynomial x^3 - 14x^2 + 57x - 64
    rep = conditioning(ImpulseResponse([2.0, 1.0, 0.0]))
    lam = np.sort(np.roots([1.0, -14.0, 57.0, -64.0]).real)[::-1]
    assert rep.concavity_l == pytest.approx(lam[0] - lam[1], rel=1e-12)
    assert rep.lipschitz_L == pytest.approx(lam[0] - lam[2], rel=1e-12)
    assert 0 <= rep.predicted_rate < 1


def test_conditioning_passivity_on_random_plant():
    rep = conditioning(random_stable_plant(1, 6, 40), "passivity")
    assert 0 <= rep.concavity_l <= rep.lipschitz_L
    assert rep.simple and 0 <= rep.predicted_rate < 1


def test_gain_summary_descending():
    w = gain_summary(random_stable_plant(2, 5, 30)).eigenvalues
    assert np.all(np.diff(w) <= 0) and w[-1] > 0


def test_oscillator_reference_values_frozen():
    ref = reference_values()
    h = zoh_discretize(oscillator(), 0.01, 1000)
    pid = "oscillator_dt0.01_n1000"
    s, nu = true_passivity(h)
    assert 0.06 <= s <= 0.08
    for name, value in (("gamma", true_gain(h)[0]), ("s", s), ("nu", nu)):
        expect, tol = ref[(pid, name)]
        assert value == pytest.approx(expect, rel=tol)


def test_random_plant_reference_values_frozen():
    ref = reference_values()
    h = random_stable_plant(1, 20, 200)
    pid = "random_seed1_order20_n200"
    c, r = true_cone(h)
    s, nu = true_passivity(h)
    for name, value in (("gamma", true_gain(h)[0]), ("s", s), ("nu", nu), ("c_star", c), ("r_min", r)):
        expect, tol = ref[(pid, name)]
        assert value == pytest.approx(expect, rel=tol)
