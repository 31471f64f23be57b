"""Black-box shortage-of-passivity and input-feedforward index estimation.

The shortage of passivity is ``s = -min rho2(u)`` with the generalized
quotient ``rho2(u) = u^T (G + G^T) u / (2 |Gu|^2)``. Descent uses an exact
line search on the 2x2 pencil spanned by the iterate and the search
direction; because the probed actions are linear in the input, the actions
at the new iterate are combinations of cached vectors, so each iteration
costs 3 samples.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BudgetExhausted, DegenerateInputError, NoisyDenominatorError, SingularOperatorError
from .estimator import EstimateTrace, StopRule, flat_dot, initial_input, normalize, retract
from .gain import _pencil_step
from .probe import reverse

PASSIVITY_METHODS = ("gradient_descent", "gradient_descent_linesearch", "continuous_flow")

__all__ = [
    "PASSIVITY_METHODS",
    "PassivityEstimate",
    "rho2",
    "grad_rho2",
    "exact_line_search",
    "retract",
    "estimate_passivity",
    "estimate_nu",
]


@dataclass
class PassivityEstimate:
    s_hat: float
    nu_hat: float | None
    u_current: np.ndarray
    cached: dict
    trace: EstimateTrace
    converged: bool
    stop_reason: str
    samples_used: int
    nu_trace: EstimateTrace | None = None

    @property
    def estimate(self):
        return self.s_hat


def _sym_probe(s, u):
    y, gt_u, gram_u = s.sym_probe(u)
    return y + gt_u, gram_u


def _quotient(s, u, sym_u, gram_u):
    den = flat_dot(u, gram_u)
    if not den > 0:
        if s.is_noisy:
            raise NoisyDenominatorError("noisy |Gu|^2 came out non-positive; re-probe")
        raise SingularOperatorError("|Gu|^2 is zero: leading tap must be nonzero")
    return 0.5 * flat_dot(u, sym_u) / den


def rho2(s, u):
    """``(value, (G + G^T) u, G^T G u)``; 3 samples."""
    if not flat_dot(u, u) > 0:
        raise DegenerateInputError("rho2 needs a nonzero input")
    sym_u, gram_u = _sym_probe(s, u)
    return _quotient(s, u, sym_u, gram_u), sym_u, gram_u


def grad_rho2(u, sym_u, gram_u, value):
    """Gradient ``((G + G^T) u - 2 rho2 G^T G u) / |Gu|^2``; no samples."""
    return (sym_u - 2.0 * value * gram_u) / flat_dot(u, gram_u)


def exact_line_search(s, u, p, cached, fallback_alpha=0.01):
    """Optimal step along ``p`` from the 2x2 pencil on ``span{u, p}``.

    ``cached`` holds ``sym_u`` and ``gram_u``. Probes ``p`` once (3 samples)
    and returns ``(alpha, exact, {"sym_p", "gram_p"})``; ``exact`` is False
    when the pencil was degenerate and ``fallback_alpha`` was used.
    """
    sym_p, gram_p = _sym_probe(s, p)
    sym_u, gram_u = cached["sym_u"], cached["gram_u"]
    alpha, exact = _pencil_step(
        0.5 * flat_dot(u, sym_u), 0.25 * (flat_dot(u, sym_p) + flat_dot(p, sym_u)), 0.5 * flat_dot(p, sym_p),
        flat_dot(u, gram_u), 0.5 * (flat_dot(u, gram_p) + flat_dot(p, gram_u)), flat_dot(p, gram_p),
        fallback_alpha, largest=False,
    )
    return alpha, exact, {"sym_p": sym_p, "gram_p": gram_p}


def estimate_passivity(s, cfg) -> PassivityEstimate:
    """Descend ``rho2`` from the normalized constant input (by default)."""
    if cfg.method not in PASSIVITY_METHODS:
        raise ValueError(f"unknown passivity method {cfg.method!r}; expected one of {PASSIVITY_METHODS}")
    if s.channels != 1:
        raise ValueError("passivity estimation supports SISO plants")
    if cfg.method == "continuous_flow":
        from .flows import flow_estimate
        est = flow_estimate(s, cfg, "passivity_descent")
    else:
        u = initial_input(cfg, s.shape, "constant")
        trace = EstimateTrace()
        stop = StopRule(cfg)
        try:
            if cfg.method == "gradient_descent_linesearch":
                u, rho, cached = _run_linesearch(s, u, cfg, trace, stop)
            else:
                u, rho, cached = _run_fixed(s, u, cfg, trace, stop)
        except BudgetExhausted as exc:
            exc.trace = trace
            raise
        est = PassivityEstimate(-rho, None, u, cached, trace, stop.converged, stop.reason, s.samples_used)
    if cfg.estimate_nu:
        nu, nu_trace = estimate_nu(s, cfg)
        est.nu_hat, est.nu_trace = nu, nu_trace
        est.samples_used = s.samples_used
    return est


def _record(trace, k, rho, alpha, samples):
    trace.append(k, rho, -rho, alpha, samples)


def _run_fixed(s, u, cfg, trace, stop):
    k = 0
    while True:
        rho, sym_u, gram_u = rho2(s, u)
        g = grad_rho2(u, sym_u, gram_u, rho)
        _record(trace, k, rho, cfg.alpha, s.samples_used)
        if stop.update(rho, float(np.linalg.norm(g))) or stop.out_of_room(k, s.samples_used, 3):
            return u, rho, {"sym_u": sym_u, "gram_u": gram_u}
        u = retract(u, -cfg.alpha * g)
        k += 1


def _run_linesearch(s, u, cfg, trace, stop):
    rho, sym_u, gram_u = rho2(s, u)
    cached = {"sym_u": sym_u, "gram_u": gram_u}
    alpha = None
    k = 0
    while True:
        g = grad_rho2(u, cached["sym_u"], cached["gram_u"], rho)
        _record(trace, k, rho, alpha, s.samples_used)
        if stop.update(rho, float(np.linalg.norm(g))) or stop.out_of_room(k, s.samples_used, 3):
            return u, rho, cached
        p = -g
        alpha, _, probed = exact_line_search(s, u, p, cached, cfg.alpha)
        v = u + alpha * p
        nrm = float(np.linalg.norm(v))
        if not nrm > 0:
            raise DegenerateInputError("line search collapsed the iterate")
        u = v / nrm
        cached = {
            "sym_u": (cached["sym_u"] + alpha * probed["sym_p"]) / nrm,
            "gram_u": (cached["gram_u"] + alpha * probed["gram_p"]) / nrm,
            "sym_p": probed["sym_p"],
            "gram_p": probed["gram_p"],
        }
        rho = _quotient(s, u, cached["sym_u"], cached["gram_u"])
        k += 1


def _sym_only(s, u):
    # (G + G^T) u from 2 samples
    y = s.evaluate(u)
    return y + reverse(s.evaluate(reverse(u)))


def estimate_nu(s, cfg):
    """Smallest eigenvalue of the symmetric part of ``G`` by Rayleigh descent.

    Same exact-line-search and reuse scheme as the passivity descent, on the
    standard quotient ``u^T (G + G^T) u / (2 u^T u)``: 2 samples per step.
    Returns ``(nu_hat, trace)``; ``nu_hat`` is the smallest value seen.
    """
    u = initial_input(cfg, s.shape, "constant")
    trace = EstimateTrace()
    stop = StopRule(cfg)
    budget_start = s.samples_used
    try:
        sym_u = _sym_only(s, u)
        rho = 0.5 * flat_dot(u, sym_u)
        best = rho
        alpha = None
        k = 0
        while True:
            g = sym_u - 2.0 * rho * u
            trace.append(k, rho, rho, alpha, s.samples_used)
            best = min(best, rho)
            used = s.samples_used - budget_start
            if stop.update(rho, float(np.linalg.norm(g))) or stop.out_of_room(k, used, 2):
                return float(best), trace
            p = -g
            sym_p = _sym_only(s, p)
            alpha, _ = _pencil_step(
                0.5 * flat_dot(u, sym_u), 0.25 * (flat_dot(u, sym_p) + flat_dot(p, sym_u)), 0.5 * flat_dot(p, sym_p),
                flat_dot(u, u), flat_dot(u, p), flat_dot(p, p),
                cfg.alpha, largest=False,
            )
            v = u + alpha * p
            nrm = float(np.linalg.norm(v))
            u = normalize(v)
            sym_u = (sym_u + alpha * sym_p) / nrm
            rho = 0.5 * flat_dot(u, sym_u)
            k += 1
    except BudgetExhausted as exc:
        exc.trace = trace
        raise
