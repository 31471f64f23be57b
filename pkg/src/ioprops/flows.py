"""Continuous-time gradient and saddle flows driven by probe sessions.

The flows are integrated with an embedded Dormand-Prince 5(4) pair. After
every accepted step the input part of the state is projected back onto the
unit sphere, so the first stage of the next step is re-evaluated there
(7 right-hand-side evaluations per accepted step).

State layout: the flattened input for ``gain_ascent``, ``passivity_descent``
and ``oja``; ``[c, u...]`` for ``conic_saddle``.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExhausted, DegenerateInputError, FlowError
from .estimator import EstimateTrace, format_float, initial_input

RHS_KINDS = ("gain_ascent", "passivity_descent", "conic_saddle", "oja")
RHS_COST_SISO = {"gain_ascent": 2, "oja": 2, "passivity_descent": 3, "conic_saddle": 3}

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass
class FlowConfig:
    rhs_kind: str
    t_end: float
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_rhs_evals: int = 200_000
    h_max: float | None = None
    keep_states: bool = False

    def __post_init__(self):
        if self.rhs_kind not in RHS_KINDS:
            raise ValueError(f"unknown flow {self.rhs_kind!r}; expected one of {RHS_KINDS}")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not (0 < self.rel_tol < 1 and 0 < self.abs_tol < 1):
            raise ValueError("flow tolerances must lie in (0, 1)")
        if self.max_rhs_evals < 1:
            raise ValueError("max_rhs_evals must be positive")


@dataclass
class FlowResult:
    rhs_kind: str
    tau: np.ndarray
    objective: np.ndarray
    samples: np.ndarray
    state: np.ndarray
    max_drift: float
    rhs_evals: int
    accepted: int
    rejected: int
    states: list = field(default_factory=list)
    centers: np.ndarray | None = None

    @property
    def estimate(self) -> np.ndarray:
        return objective_to_estimate(self.rhs_kind, self.objective)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["tau", "objective", "estimate", "samples"])
        for t, obj, est, smp in zip(self.tau, self.objective, self.estimate, self.samples):
            writer.writerow([format_float(t), format_float(obj), format_float(est), int(smp)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def objective_to_estimate(kind, objective):
    objective = np.asarray(objective, dtype=float)
    if kind == "passivity_descent":
        return -objective
    return np.sqrt(np.maximum(objective, 0.0))


def _split(kind, x, shape):
    if kind == "conic_saddle":
        return float(x[0]), x[1:].reshape(shape)
    return None, x.reshape(shape)


def flow_rhs(s, kind, x):
    """Vector field and objective at the flat state ``x``.

    Off the sphere the gradient fields use the scale-invariant quotients, so
    they stay tangent; ``oja`` is the polynomial field ``2 (G^T G u - (u^T G^T G u) u)``
    which agrees with ``gain_ascent`` on the sphere.
    """
    c, u = _split(kind, x, s.shape)
    nrm2 = float(np.vdot(u, u))
    if not nrm2 > 0:
        raise DegenerateInputError("flow state collapsed to zero")
    if kind in ("gain_ascent", "oja"):
        _, w = s.gram_apply(u)
        uw = float(np.vdot(u, w))
        if kind == "oja":
            return (2.0 * (w - uw * u)).ravel(), uw
        rho = uw / nrm2
        return (2.0 * (w - rho * u) / nrm2).ravel(), rho
    y, gt_u, gram_u = s.sym_probe(u)
    sym_u = y + gt_u
    if kind == "passivity_descent":
        den = float(np.vdot(u, gram_u))
        rho = 0.5 * float(np.vdot(u, sym_u)) / den
        return (-(sym_u - 2.0 * rho * gram_u) / den).ravel(), rho
    usu = float(np.vdot(u, sym_u)) / nrm2
    rho = float(np.vdot(u, gram_u)) / nrm2 - c * usu + c * c
    du = 2.0 * (gram_u - c * sym_u + c * c * u - rho * u) / nrm2
    return np.concatenate([[-(2.0 * c - usu)], du.ravel()]), rho


def _project(kind, x):
    x = x.copy()
    part = x[1:] if kind == "conic_saddle" else x
    nrm = float(np.linalg.norm(part))
    if not nrm > 0:
        raise DegenerateInputError("flow state collapsed to zero")
    part /= nrm
    return x, abs(nrm - 1.0)


def integrate_flow(s, x0, cfg: FlowConfig) -> FlowResult:
    """Integrate the configured flow from ``x0`` over ``[0, cfg.t_end]``.

    Steps are capped at ``t_end / 100`` (unless ``cfg.h_max`` is set), so the
    trajectory has at least 100 accepted points.
    """
    kind = cfg.rhs_kind
    x, _ = _project(kind, np.asarray(x0, dtype=float).ravel())
    h_max = cfg.h_max if cfg.h_max is not None else cfg.t_end / 100.0
    evals = 0

    def f(state):
        nonlocal evals
        if evals >= cfg.max_rhs_evals:
            raise FlowError(f"flow needed more than {cfg.max_rhs_evals} right-hand-side evaluations",
                            tau=tau, state=x)
        evals += 1
        return flow_rhs(s, kind, state)

    tau = 0.0
    k1, obj = f(x)
    taus, objs, samples = [0.0], [obj], [s.samples_used]
    states = [x.copy()] if cfg.keep_states else []
    centers = [x[0]] if kind == "conic_saddle" else None
    h = min(h_max, 0.01 * cfg.t_end)
    drift = 0.0
    accepted = rejected = 0
    while tau < cfg.t_end:
        h = min(h, cfg.t_end - tau)
        if h <= 1e-14 * max(1.0, tau):
            raise FlowError(f"step size underflow at tau={tau:.6g}", tau=tau, state=x)
        ks = [k1]
        for i in range(1, 7):
            xi = x + h * sum(a * kk for a, kk in zip(_A[i], ks))
            ks.append(f(xi)[0])
        x_new = x + h * sum(b * kk for b, kk in zip(_B5[:6], ks[:6]))
        err_vec = h * sum(e * kk for e, kk in zip(_E, ks))
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(x), np.abs(x_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if err <= 1.0:
            tau = cfg.t_end if cfg.t_end - tau - h <= 1e-12 * cfg.t_end else tau + h
            x, d = _project(kind, x_new)
            drift = max(drift, d)
            k1, obj = f(x)
            taus.append(tau)
            objs.append(obj)
            samples.append(s.samples_used)
            if cfg.keep_states:
                states.append(x.copy())
            if centers is not None:
                centers.append(x[0])
            accepted += 1
            factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        else:
            rejected += 1
            factor = max(0.2, 0.9 * err ** -0.2)
        h = min(h * factor, h_max)
    return FlowResult(kind, np.array(taus), np.array(objs), np.array(samples, dtype=int), x,
                      drift, evals, accepted, rejected, states,
                      None if centers is None else np.array(centers))


def flow_estimate(s, cfg, kind):
    """Run a flow as an estimator and wrap the result like the discrete methods."""
    from .conic import ConeEstimate
    from .gain import GainEstimate
    from .passivity import PassivityEstimate

    if kind == "passivity_descent":
        u0 = initial_input(cfg, s.shape, "constant")
    else:
        u0 = initial_input(cfg, s.shape, "sine")
    x0 = np.concatenate([[cfg.c0], u0.ravel()]) if kind == "conic_saddle" else u0.ravel()
    fcfg = FlowConfig(kind, cfg.t_end, cfg.flow_rel_tol, cfg.flow_abs_tol, cfg.max_rhs_evals)
    trace = EstimateTrace(with_cone=kind == "conic_saddle")
    try:
        res = integrate_flow(s, x0, fcfg)
    except BudgetExhausted as exc:
        exc.trace = trace
        raise
    est = res.estimate
    prev_tau = None
    for k, (t, obj, e, smp) in enumerate(zip(res.tau, res.objective, est, res.samples)):
        step = None if prev_tau is None else t - prev_tau
        prev_tau = t
        if kind == "conic_saddle":
            trace.append(k, obj, e, step, smp, c=res.centers[k], r=e)
        else:
            trace.append(k, obj, e, step, smp)
    c, u = _split(kind, res.state, s.shape)
    final = float(est[-1])
    if kind == "gain_ascent":
        return GainEstimate(final, u, trace, True, "t_end", s.samples_used)
    if kind == "passivity_descent":
        return PassivityEstimate(final, None, u, {}, trace, True, "t_end", s.samples_used)
    return ConeEstimate(c, final, u, trace, True, "t_end", s.samples_used)
