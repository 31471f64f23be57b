"""Black-box L2-gain estimation.

The squared gain is the largest value of ``rho1(u) = |Gu|^2 / |u|^2``.
Methods: power iteration on ``G^T G`` (2 samples per step), power
iteration on the symmetric ``PG`` (1 sample per step), and projected
gradient ascent with a fixed step or an exact line search that reuses
previous probes (2 samples per step either way).
"""

from dataclasses import dataclass

import numpy as np

from .errors import BudgetExhausted, DegenerateInputError, DimensionError
from .estimator import EstimateTrace, StopRule, flat_dot, initial_input, normalize, retract
from .probe import reverse

GAIN_METHODS = ("power", "pg_power", "gradient_ascent", "gradient_ascent_linesearch", "continuous_flow")


@dataclass
class GainEstimate:
    gamma_hat: float
    u_current: np.ndarray
    trace: EstimateTrace
    converged: bool
    stop_reason: str
    samples_used: int

    @property
    def estimate(self):
        return self.gamma_hat


def rho1(s, u):
    """``(value, Gu, G^T G u)`` for input ``u``; 2 samples."""
    nrm2 = flat_dot(u, u)
    if not nrm2 > 0:
        raise DegenerateInputError("rho1 needs a nonzero input")
    y, gram_u = s.gram_apply(u)
    return flat_dot(u, gram_u) / nrm2, y, gram_u


def grad_rho1(u, gram_u, value):
    """Riemannian gradient ``2 G^T G u - 2 rho1 u`` at a unit-norm ``u``."""
    return 2.0 * gram_u - 2.0 * value * u


def power_step(s, u):
    """One power iteration on ``G^T G``; 2 samples."""
    _, gram_u = s.gram_apply(u)
    return _unit(gram_u)


def pg_power_step(s, u):
    """One power iteration on ``PG``; 1 sample."""
    if s.channels != 1:
        raise DimensionError("pg_power is defined for SISO plants only")
    return _unit(reverse(s.evaluate(u)))


def _unit(v):
    try:
        return normalize(v)
    except DegenerateInputError:
        raise DegenerateInputError("iterate collapsed to zero; restart from another input") from None


def gain_line_search(u, w, p, gram_p, fallback_alpha):
    """Step maximizing ``rho1`` on ``span{u, p}``.

    Solves the 2x2 problem ``M x = lam N x`` with ``M`` the Gram form and
    ``N`` the identity form restricted to the span, and scales the top
    eigenvector so its first entry is one. Returns ``(alpha, exact)``.
    """
    return _pencil_step(
        flat_dot(u, w), 0.5 * (flat_dot(u, gram_p) + flat_dot(p, w)), flat_dot(p, gram_p),
        flat_dot(u, u), flat_dot(u, p), flat_dot(p, p),
        fallback_alpha, largest=True,
    )


def _pencil_step(m11, m12, m22, n11, n12, n22, fallback_alpha, largest):
    M = np.array([[m11, m12], [m12, m22]])
    N = np.array([[n11, n12], [n12, n22]])
    try:
        L = np.linalg.cholesky(N)
    except np.linalg.LinAlgError:
        return fallback_alpha, False
    if not np.all(np.isfinite(L)) or L[1, 1] <= 1e-14 * max(L[0, 0], 1e-300):
        return fallback_alpha, False
    Li = np.linalg.inv(L)
    w, V = np.linalg.eigh(Li @ M @ Li.T)
    x = Li.T @ V[:, -1 if largest else 0]
    if abs(x[0]) < 1e-12 * np.linalg.norm(x):
        return fallback_alpha, False
    return float(x[1] / x[0]), True


def _record(trace, k, rho, alpha, samples):
    trace.append(k, rho, np.sqrt(max(rho, 0.0)), alpha, samples)


def estimate_gain(s, cfg) -> GainEstimate:
    """Run the configured gain estimator on session ``s``."""
    if cfg.method not in GAIN_METHODS:
        raise ValueError(f"unknown gain method {cfg.method!r}; expected one of {GAIN_METHODS}")
    if cfg.method == "continuous_flow":
        from .flows import flow_estimate
        return flow_estimate(s, cfg, "gain_ascent")
    u = initial_input(cfg, s.shape, "sine")
    trace = EstimateTrace()
    stop = StopRule(cfg)
    try:
        if cfg.method == "pg_power":
            u, rho = _run_pg_power(s, u, cfg, trace, stop)
        elif cfg.method == "gradient_ascent_linesearch":
            u, rho = _run_linesearch(s, u, cfg, trace, stop)
        else:
            u, rho = _run_gram_method(s, u, cfg, trace, stop)
    except BudgetExhausted as exc:
        exc.trace = trace
        raise
    return GainEstimate(float(np.sqrt(max(rho, 0.0))), u, trace, stop.converged, stop.reason, s.samples_used)


def _gram_cost(s):
    return 2 if s.channels == 1 else s.channels ** 2 + 1


def _run_gram_method(s, u, cfg, trace, stop):
    cost = _gram_cost(s)
    k = 0
    while True:
        rho, _, w = rho1(s, u)
        g = grad_rho1(u, w, rho)
        alpha = cfg.alpha if cfg.method == "gradient_ascent" else None
        _record(trace, k, rho, alpha, s.samples_used)
        if stop.update(rho, float(np.linalg.norm(g))) or stop.out_of_room(k, s.samples_used, cost):
            return u, rho
        if cfg.method == "power":
            u = _unit(w)
        else:
            u = retract(u, cfg.alpha * g)
        k += 1


def _run_pg_power(s, u, cfg, trace, stop):
    if s.channels != 1:
        raise DimensionError("pg_power is defined for SISO plants only")
    k = 0
    while True:
        y = s.evaluate(u)
        # |PGu| = |Gu| and rho1(u) = |Gu|^2 for unit u
        rho = flat_dot(y, y)
        _record(trace, k, rho, None, s.samples_used)
        if stop.update(rho) or stop.out_of_room(k, s.samples_used, 1):
            return u, rho
        u = _unit(reverse(y))
        k += 1


def _run_linesearch(s, u, cfg, trace, stop):
    cost = _gram_cost(s)
    rho, _, w = rho1(s, u)
    k = 0
    alpha = None
    while True:
        g = grad_rho1(u, w, rho)
        _record(trace, k, rho, alpha, s.samples_used)
        if stop.update(rho, float(np.linalg.norm(g))) or stop.out_of_room(k, s.samples_used, cost):
            return u, rho
        _, gram_p = s.gram_apply(g)
        alpha, _ = gain_line_search(u, w, g, gram_p, cfg.alpha)
        v = u + alpha * g
        nrm = float(np.linalg.norm(v))
        if not nrm > 0:
            raise DegenerateInputError("line search collapsed the iterate")
        # G^T G is linear: the Gram action at the new point needs no new samples
        u, w = v / nrm, (w + alpha * gram_p) / nrm
        rho = flat_dot(u, w)
        k += 1
