"""White-box ground truth: dense operators and eigen-solvers.

Everything here reads the plant directly. Estimators never import this
module; it exists for validation, tests and the CLI ``truth`` report.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SingularOperatorError
from .lti import ImpulseResponse, MimoPlant

# Dense solves up to this size use the in-house Jacobi solver by default.
JACOBI_MAX_N = 128
JACOBI_TOL = 1e-12
GOLDEN_TOL = 1e-10
_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def dense_toeplitz(taps) -> np.ndarray:
    taps = np.asarray(taps, dtype=float)
    return scipy.linalg.toeplitz(taps, np.zeros_like(taps))


def dense_operator(plant) -> np.ndarray:
    """Materialize the plant as a matrix (block matrix for MIMO)."""
    if isinstance(plant, ImpulseResponse):
        return dense_toeplitz(plant.taps)
    if isinstance(plant, MimoPlant):
        m = plant.channels
        return np.block([[dense_toeplitz(plant.taps[i, j]) for j in range(m)] for i in range(m)])
    raise TypeError(f"unsupported plant type {type(plant).__name__}")


def _round_robin(n):
    # n even; rounds of disjoint pairs covering every pair exactly once per sweep
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        p = np.array(players[:half])
        q = np.array(players[half:][::-1])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(M, tol=JACOBI_TOL, max_sweeps=60):
    """Cyclic Jacobi eigen-decomposition of a symmetric matrix.

    Uses round-robin ordering so each round applies ``n/2`` disjoint rotations
    at once. Stops when the off-diagonal Frobenius norm is at most
    ``tol * ||M||_F``. Returns ascending eigenvalues and orthonormal columns.
    """
    A = np.array(M, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("jacobi_eigh needs a square matrix")
    A = 0.5 * (A + A.T)
    if n == 1:
        return A.diagonal().copy(), np.ones((1, 1))
    size = n + (n % 2)
    if size != n:
        # pad with a decoupled zero row/column
        A = np.pad(A, ((0, 1), (0, 1)))
    V = np.eye(size)
    scale = np.linalg.norm(A)
    rounds = _round_robin(size)
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(A.diagonal()))
        if off <= tol * scale:
            break
        for p, q in rounds:
            apq = A[p, q]
            active = np.abs(apq) > 1e-300
            if not active.any():
                continue
            app, aqq = A[p, p], A[q, q]
            with np.errstate(divide="ignore", invalid="ignore"):
                theta = np.where(active, (aqq - app) / (2.0 * np.where(active, apq, 1.0)), 0.0)
            t = np.where(active, np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0)), 0.0)
            t = np.where(active & (theta == 0.0), 1.0, t)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rp, rq = A[p, :].copy(), A[q, :].copy()
            A[p, :] = c[:, None] * rp - s[:, None] * rq
            A[q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = A[:, p].copy(), A[:, q].copy()
            A[:, p] = cp * c - cq * s
            A[:, q] = cp * s + cq * c
            vp, vq = V[:, p].copy(), V[:, q].copy()
            V[:, p] = vp * c - vq * s
            V[:, q] = vp * s + vq * c
    else:
        raise ArithmeticError("Jacobi sweeps did not converge")
    w = A.diagonal()[:n].copy()
    V = V[:n, :n] if size != n else V
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


@dataclass(frozen=True)
class SpectralSummary:
    """Eigenvalues in descending order with matching eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    problem_kind: str = "symmetric"

    @property
    def is_simple_top(self) -> bool:
        w = self.eigenvalues
        return w.size < 2 or w[0] - w[1] > 1e-10 * max(1.0, abs(w[0]))

    @property
    def is_simple_bottom(self) -> bool:
        w = self.eigenvalues
        return w.size < 2 or w[-2] - w[-1] > 1e-10 * max(1.0, abs(w[-1]))


def _descending(w, V, kind):
    return SpectralSummary(w[::-1].copy(), V[:, ::-1].copy(), kind)


def sym_eig(M, method="auto") -> SpectralSummary:
    """Symmetric eigen-decomposition; Jacobi up to ``JACOBI_MAX_N``, LAPACK above."""
    M = np.asarray(M, dtype=float)
    if method == "auto":
        method = "jacobi" if M.shape[0] <= JACOBI_MAX_N else "lapack"
    if method == "jacobi":
        w, V = jacobi_eigh(M)
    elif method == "lapack":
        w, V = scipy.linalg.eigh(0.5 * (M + M.T))
    else:
        raise ValueError(f"unknown eigen-solver {method!r}")
    return _descending(w, V, "symmetric")


def pencil_eig(M, N, method="auto") -> SpectralSummary:
    """Generalized problem ``M v = lam N v`` with ``N`` positive definite.

    Reduced to a standard problem by the Cholesky factor ``N = R^T R``;
    eigenvectors are returned ``N``-orthonormal.
    """
    M = np.asarray(M, dtype=float)
    N = np.asarray(N, dtype=float)
    try:
        R = scipy.linalg.cholesky(0.5 * (N + N.T), lower=False)
    except np.linalg.LinAlgError as exc:
        raise SingularOperatorError("pencil denominator is not positive definite") from exc
    Rinv_M = scipy.linalg.solve_triangular(R, M, trans="T")
    K = scipy.linalg.solve_triangular(R, Rinv_M.T, trans="T").T
    summary = sym_eig(0.5 * (K + K.T), method=method)
    V = scipy.linalg.solve_triangular(R, summary.eigenvectors)
    return SpectralSummary(summary.eigenvalues, V, "generalized_pencil")


def _fix_sign(v):
    k = int(np.argmax(np.abs(v)))
    return v if v[k] >= 0 else -v


def gain_summary(plant, method="auto") -> SpectralSummary:
    G = dense_operator(plant)
    return sym_eig(G.T @ G, method=method)


def true_gain(plant, method="auto"):
    """``(gamma, u_star)``: largest singular value and its right singular vector."""
    summ = gain_summary(plant, method)
    gamma = float(np.sqrt(max(summ.eigenvalues[0], 0.0)))
    return gamma, _unshape(plant, _fix_sign(summ.eigenvectors[:, 0]))


def _unshape(plant, v):
    if isinstance(plant, MimoPlant):
        return v.reshape(plant.channels, plant.horizon)
    return v


def passivity_summary(plant, method="auto") -> SpectralSummary:
    G = dense_operator(plant)
    if isinstance(plant, ImpulseResponse) and plant.taps[0] == 0.0:
        raise SingularOperatorError("leading tap is zero: the Gram operator is singular")
    return pencil_eig(0.5 * (G + G.T), G.T @ G, method=method)


def true_passivity(plant, method="auto"):
    """``(s, nu)``: shortage of passivity and input-feedforward index."""
    s = -float(passivity_summary(plant, method).eigenvalues[-1])
    G = dense_operator(plant)
    nu = float(sym_eig(0.5 * (G + G.T), method=method).eigenvalues[-1])
    return s, nu


def cone_matrix(G, c) -> np.ndarray:
    """``A(c) = (G - cI)^T (G - cI)``."""
    D = G - c * np.eye(G.shape[0])
    return D.T @ D


def _lambda_max(M):
    n = M.shape[0]
    return float(scipy.linalg.eigh(M, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0])


def golden_section(f, a, b, tol=GOLDEN_TOL):
    """Minimize a unimodal scalar function on ``[a, b]`` to bracket width ``tol``."""
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INVPHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INVPHI * (b - a)
            f2 = f(x2)
    return 0.5 * (a + b)


def true_cone(plant):
    """``(c_star, r_min)`` minimizing the top eigenvalue of ``A(c)`` over ``c``."""
    G = dense_operator(plant)
    gamma = float(np.linalg.norm(G, 2))
    if gamma == 0.0:
        return 0.0, 0.0
    c_star = golden_section(lambda c: _lambda_max(cone_matrix(G, c)), -2 * gamma, 2 * gamma)
    r2 = _lambda_max(cone_matrix(G, c_star))
    return float(c_star), float(np.sqrt(max(r2, 0.0)))


@dataclass(frozen=True)
class ConditioningReport:
    concavity_l: float
    lipschitz_L: float
    predicted_rate: float
    simple: bool


def conditioning(plant, problem="gain") -> ConditioningReport:
    """Local constants of the extremal eigenproblem for ``gain`` or ``passivity``.

    Gain uses the top of the spectrum of ``G^T G``; passivity the bottom of
    the pencil, mirrored so both report ``l >= 0``.
    """
    if problem == "gain":
        w = gain_summary(plant).eigenvalues
        l, L = w[0] - w[1] if w.size > 1 else 0.0, w[0] - w[-1]
    elif problem == "passivity":
        w = passivity_summary(plant).eigenvalues
        l, L = w[-2] - w[-1] if w.size > 1 else 0.0, w[0] - w[-1]
    else:
        raise ValueError(f"unknown problem {problem!r}")
    l, L = float(max(l, 0.0)), float(max(L, 0.0))
    simple = l > 1e-10 * max(1.0, L)
    rate = ((L - l) / (L + l)) ** 2 if simple else 1.0
    return ConditioningReport(l, L, float(rate), bool(simple))


def cone_step_bound(plant, c_star=None):
    """Local step-size bound ``1 / (2 ||S S^T - 2 H||)`` for the saddle iterations.

    ``S`` is the mixed second derivative and ``H`` the Riemannian Hessian of
    the cone quotient in ``u`` at the saddle point, both on the tangent space.
    """
    G = dense_operator(plant)
    if c_star is None:
        c_star, _ = true_cone(plant)
    A = cone_matrix(G, c_star)
    w, V = scipy.linalg.eigh(A)
    u = V[:, -1]
    rho = w[-1]
    S_op = G + G.T
    S = -2.0 * (S_op @ u - (u @ S_op @ u) * u)
    n = G.shape[0]
    proj = np.eye(n) - np.outer(u, u)
    H = proj @ (2.0 * (A - rho * np.eye(n))) @ proj
    K = np.outer(S, S) - 2.0 * H
    return float(1.0 / (2.0 * np.linalg.norm(K, 2)))


def assumption_gap(plant, c_star=None) -> float:
    """``|v1^T (G + G^T) v2|`` for the top two eigenvectors of ``A(c_star)``.

    Nonzero means a double top eigenvalue at the saddle still yields a
    well-posed cone problem.
    """
    G = dense_operator(plant)
    if c_star is None:
        c_star, _ = true_cone(plant)
    w, V = scipy.linalg.eigh(cone_matrix(G, c_star))
    return float(abs(V[:, -1] @ (G + G.T) @ V[:, -2]))
