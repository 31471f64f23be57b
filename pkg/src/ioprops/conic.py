"""Black-box estimation of the smallest conic sector ``|y - c u| <= r |u|``.

``rho3(c, u) = |Gu - c u|^2 / |u|^2`` is minimized over the center ``c``
and maximized over the input ``u``. Both saddle iterations cost 3 samples
per step: Arrow-Hurwicz moves ``c`` and ``u`` together, Uzawa first sets
``c`` to its exact minimizer for the current ``u``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BudgetExhausted, DegenerateInputError, DivergenceError
from .estimator import EstimateTrace, StopRule, flat_dot, initial_input, retract

CONE_METHODS = ("arrow_hurwicz", "uzawa", "continuous_flow")
DIVERGENCE_FACTOR = 10.0


@dataclass
class ConeEstimate:
    c_hat: float
    r_hat: float
    u_current: np.ndarray
    trace: EstimateTrace
    converged: bool
    stop_reason: str
    samples_used: int

    @property
    def estimate(self):
        return self.r_hat


def rho3(s, c, u):
    """``(value, Gu, (G + G^T) u, G^T G u)``; 3 samples."""
    nrm2 = flat_dot(u, u)
    if not nrm2 > 0:
        raise DegenerateInputError("rho3 needs a nonzero input")
    y, gt_u, gram_u = s.sym_probe(u)
    sym_u = y + gt_u
    value = (flat_dot(u, gram_u) - c * flat_dot(u, sym_u)) / nrm2 + c * c
    return value, y, sym_u, gram_u


def grad_c_rho3(c, u, sym_u):
    """``2c - u^T (G + G^T) u`` at a unit-norm ``u``."""
    return 2.0 * c - flat_dot(u, sym_u)


def grad_u_rho3(c, u, sym_u, gram_u, value):
    """``2 (A(c) u - rho3 u)`` at a unit-norm ``u``."""
    return 2.0 * (gram_u - c * sym_u + c * c * u) - 2.0 * value * u


def _ah(s, c, u, alpha):
    value, _, sym_u, gram_u = rho3(s, c, u)
    gc = grad_c_rho3(c, u, sym_u)
    gu = grad_u_rho3(c, u, sym_u, gram_u, value)
    return c - alpha * gc, retract(u, alpha * gu), c, value, abs(gc) + float(np.linalg.norm(gu))


def _uzawa(s, u, alpha):
    y, gt_u, gram_u = s.sym_probe(u)
    sym_u = y + gt_u
    c = 0.5 * flat_dot(u, sym_u)
    value = flat_dot(u, gram_u) - c * flat_dot(u, sym_u) + c * c
    gu = grad_u_rho3(c, u, sym_u, gram_u, value)
    return c, retract(u, alpha * gu), c, value, float(np.linalg.norm(gu))


def arrow_hurwicz_step(s, c, u, alpha):
    """Simultaneous descent in ``c`` and retracted ascent in ``u``; 3 samples."""
    c_new, u_new, *_ = _ah(s, c, u, alpha)
    return c_new, u_new


def uzawa_step(s, u, alpha):
    """Exact ``c`` for the current ``u``, then retracted ascent in ``u``; 3 samples."""
    c_new, u_new, *_ = _uzawa(s, u, alpha)
    return c_new, u_new


def estimate_cone(s, cfg) -> ConeEstimate:
    """Run the configured saddle iteration until a stop rule fires.

    Raises :class:`~ioprops.errors.DivergenceError` when ``rho3`` exceeds ten
    times its initial value: convergence is only guaranteed locally.
    """
    if cfg.method not in CONE_METHODS:
        raise ValueError(f"unknown cone method {cfg.method!r}; expected one of {CONE_METHODS}")
    if cfg.method == "continuous_flow":
        from .flows import flow_estimate
        return flow_estimate(s, cfg, "conic_saddle")
    u = initial_input(cfg, s.shape, "sine")
    c = float(cfg.c0)
    trace = EstimateTrace(with_cone=True)
    stop = StopRule(cfg)
    rho0 = None
    k = 0
    try:
        while True:
            if cfg.method == "uzawa":
                c_next, u_next, c_at, value, gnorm = _uzawa(s, u, cfg.alpha)
            else:
                c_next, u_next, c_at, value, gnorm = _ah(s, c, u, cfg.alpha)
            r = float(np.sqrt(max(value, 0.0)))
            trace.append(k, value, r, cfg.alpha, s.samples_used, c=c_at, r=r)
            if rho0 is None:
                rho0 = value
            elif value > DIVERGENCE_FACTOR * rho0:
                raise DivergenceError(
                    f"cone quotient grew from {rho0:.6g} to {value:.6g}; reduce the step size", trace=trace
                )
            if stop.update(value, gnorm) or stop.out_of_room(k, s.samples_used, 3):
                return ConeEstimate(float(c_at), r, u, trace, stop.converged, stop.reason, s.samples_used)
            c, u = c_next, u_next
            k += 1
    except BudgetExhausted as exc:
        exc.trace = trace
        raise
