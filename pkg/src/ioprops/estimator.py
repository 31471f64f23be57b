"""Configuration, traces and stopping logic shared by all estimators."""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError

DEFAULT_REL_TOL = 1e-6
DEFAULT_PATIENCE = 3
DEFAULT_GRAD_TOL = 1e-8
DEFAULT_MAX_SAMPLES = 10_000


@dataclass
class EstimatorConfig:
    """Parameters for one estimation run.

    ``max_samples`` is a soft limit: the estimator stops cleanly before an
    iteration that would cross it. The session budget, if any, is a hard
    limit and raises :class:`~ioprops.errors.BudgetExhausted`.
    """

    method: str
    alpha: float = 0.01
    rel_tol: float = DEFAULT_REL_TOL
    patience: int = DEFAULT_PATIENCE
    grad_tol: float = DEFAULT_GRAD_TOL
    max_samples: int = DEFAULT_MAX_SAMPLES
    max_iter: int | None = None
    u0: np.ndarray | None = None
    c0: float = 0.0
    estimate_nu: bool = False
    # continuous-flow settings
    t_end: float = 50.0
    flow_rel_tol: float = 1e-8
    flow_abs_tol: float = 1e-10
    max_rhs_evals: int = 200_000

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.rel_tol >= 0 or not self.grad_tol >= 0:
            raise ValueError("tolerances must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.max_samples < 1:
            raise ValueError("max_samples must be positive")
        if self.max_iter is not None and self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")


def format_float(x) -> str:
    """Shortest round-trip decimal text; empty for missing values."""
    if x is None:
        return ""
    return repr(float(x))


@dataclass
class EstimateTrace:
    """Per-iteration record: ``k, rho, estimate, alpha, samples`` (+ ``c, r`` for cones)."""

    with_cone: bool = False
    rows: list = field(default_factory=list)

    @property
    def columns(self):
        base = ["k", "rho", "estimate", "alpha", "samples"]
        return base + ["c", "r"] if self.with_cone else base

    def append(self, k, rho, estimate, alpha, samples, c=None, r=None):
        if self.rows and samples <= self.rows[-1][4]:
            raise ValueError("cumulative sample count must strictly increase")
        row = (int(k), float(rho), float(estimate), None if alpha is None else float(alpha), int(samples))
        if self.with_cone:
            row += (float(c), float(r))
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        idx = self.columns.index(name)
        return np.array([np.nan if row[idx] is None else row[idx] for row in self.rows], dtype=float)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([row[0]] + [format_float(v) for v in row[1:4]] + [row[4]]
                            + [format_float(v) for v in row[5:]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


class StopRule:
    """Relative-change, gradient-norm, iteration and sample stopping tests."""

    def __init__(self, cfg: EstimatorConfig):
        self.cfg = cfg
        self._quiet = 0
        self._last = None
        self.reason = None

    def update(self, rho, grad_norm=None):
        """Feed the latest objective; return True when the run should stop."""
        cfg = self.cfg
        if self._last is not None:
            change = abs(rho - self._last)
            if change <= cfg.rel_tol * max(abs(rho), np.finfo(float).tiny):
                self._quiet += 1
            else:
                self._quiet = 0
        self._last = rho
        if self._quiet >= cfg.patience:
            self.reason = "rel_tol"
        elif grad_norm is not None and grad_norm <= cfg.grad_tol:
            self.reason = "grad_tol"
        return self.reason is not None

    def out_of_room(self, k, samples_used, next_cost):
        cfg = self.cfg
        if cfg.max_iter is not None and k >= cfg.max_iter:
            self.reason = "max_iter"
        elif samples_used + next_cost > cfg.max_samples:
            self.reason = "max_samples"
        return self.reason is not None

    @property
    def converged(self):
        return self.reason in ("rel_tol", "grad_tol")


def sine_input(shape) -> np.ndarray:
    """``sin(t)``, ``t = 1..n`` per channel, normalized to unit norm."""
    n = shape[-1]
    u = np.broadcast_to(np.sin(np.arange(1, n + 1, dtype=float)), shape).copy()
    return u / np.linalg.norm(u)


def constant_input(shape) -> np.ndarray:
    u = np.ones(shape)
    return u / np.linalg.norm(u)


def initial_input(cfg, shape, default="sine") -> np.ndarray:
    if cfg.u0 is not None:
        u = np.array(cfg.u0, dtype=float).reshape(shape)
    elif default == "sine":
        return sine_input(shape)
    else:
        return constant_input(shape)
    return normalize(u)


def normalize(u) -> np.ndarray:
    nrm = float(np.linalg.norm(u))
    if not nrm > 0 or not math.isfinite(nrm):
        raise DegenerateInputError("cannot normalize a zero or non-finite signal")
    return u / nrm


def retract(u, step) -> np.ndarray:
    """Map ``u + step`` back onto the unit sphere."""
    return normalize(np.asarray(u) + np.asarray(step))


def flat_dot(a, b) -> float:
    return float(np.vdot(a, b))
