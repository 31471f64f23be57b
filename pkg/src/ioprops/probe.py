"""Black-box evaluation oracle with sample accounting and measurement noise.

Estimators only ever talk to a :class:`ProbeSession`. Every physical
experiment costs one sample. Composite probes build the transpose from
time reversal: for a causal convolution ``G``, ``G^T = P G P`` where ``P``
reverses sample order.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BudgetExhausted, DimensionError
from .lti import ImpulseResponse, MimoPlant, apply_plant

NOISE_KINDS = ("none", "additive_gaussian", "multiplicative_uniform")


@dataclass(frozen=True)
class NoiseModel:
    """Output measurement noise.

    ``additive_gaussian``: ``y + e`` with ``e ~ N(0, sigma^2)`` per sample.
    ``multiplicative_uniform``: ``(1 + eps) y`` with ``eps ~ U[-epsilon_bar, epsilon_bar]``.
    """

    kind: str = "none"
    sigma: float = 0.0
    epsilon_bar: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if not (self.sigma >= 0 and self.epsilon_bar >= 0):
            raise ValueError("noise parameters must be non-negative")
        if int(self.seed) < 0:
            raise ValueError("noise seed must be non-negative")

    @property
    def is_silent(self) -> bool:
        return (
            self.kind == "none"
            or (self.kind == "additive_gaussian" and self.sigma == 0)
            or (self.kind == "multiplicative_uniform" and self.epsilon_bar == 0)
        )


def reverse(u) -> np.ndarray:
    """Reverse the sample order of each channel (last axis)."""
    return np.ascontiguousarray(np.asarray(u, dtype=float)[..., ::-1])


class ProbeSession:
    """Counts experiments on a hidden plant and corrupts outputs with noise.

    Not thread-safe: the counter and noise stream are owned by one caller.
    """

    def __init__(self, plant, noise=None, budget=None):
        if not isinstance(plant, (ImpulseResponse, MimoPlant)):
            raise TypeError(f"unsupported plant type {type(plant).__name__}")
        if budget is not None and int(budget) < 1:
            raise ValueError("budget must be a positive integer")
        self._plant = plant
        self.noise = noise if noise is not None else NoiseModel()
        self.budget = None if budget is None else int(budget)
        self.samples_used = 0
        # counter-based stream: draw order alone fixes the values
        self._rng = np.random.Generator(np.random.Philox(key=int(self.noise.seed)))

    @property
    def channels(self) -> int:
        return self._plant.channels

    @property
    def horizon(self) -> int:
        return self._plant.horizon

    @property
    def shape(self):
        if self.channels == 1:
            return (self.horizon,)
        return (self.channels, self.horizon)

    @property
    def is_noisy(self) -> bool:
        return not self.noise.is_silent

    @property
    def remaining(self):
        return None if self.budget is None else self.budget - self.samples_used

    def _reserve(self, cost):
        if self.budget is not None and self.samples_used + cost > self.budget:
            raise BudgetExhausted(
                f"probe needs {cost} samples but only {self.budget - self.samples_used} remain",
                samples_used=self.samples_used,
                budget=self.budget,
            )

    def _check(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape:
            raise DimensionError(f"signal of shape {u.shape} does not match plant shape {self.shape}")
        if not np.all(np.isfinite(u)):
            raise ValueError("signal contains non-finite samples")
        return u

    def _measure(self, u):
        y = apply_plant(self._plant, u)
        nz = self.noise
        if nz.is_silent:
            return y
        if nz.kind == "additive_gaussian":
            return y + nz.sigma * self._rng.standard_normal(y.shape)
        eps = self._rng.uniform(-nz.epsilon_bar, nz.epsilon_bar, size=y.shape)
        return (1.0 + eps) * y

    def _run(self, u):
        out = self._measure(u)
        self.samples_used += 1
        return out

    def evaluate(self, u) -> np.ndarray:
        """One experiment: the (noisy) plant output for input ``u``."""
        u = self._check(u)
        self._reserve(1)
        return self._run(u)

    def adjoint_apply(self, y) -> np.ndarray:
        """Transpose of the plant applied to ``y``: one sample SISO, ``m^2`` MIMO."""
        if self.channels > 1:
            return self.mimo_adjoint_apply(y)
        y = self._check(y)
        self._reserve(1)
        return reverse(self._run(reverse(y)))

    def gram_apply(self, u):
        """Return ``(Gu, G^T G u)``; costs 2 samples SISO, ``m^2 + 1`` MIMO."""
        u = self._check(u)
        m = self.channels
        self._reserve(2 if m == 1 else m * m + 1)
        y = self._run(u)
        if m == 1:
            return y, reverse(self._run(reverse(y)))
        return y, self._mimo_adjoint(y)

    def sym_probe(self, u):
        """Return ``(Gu, G^T u, G^T G u)`` in 3 samples (SISO only).

        Enough for the symmetric part ``(G + G^T) u`` and the Gram action at once.
        """
        if self.channels != 1:
            raise DimensionError("sym_probe is defined for SISO plants only")
        u = self._check(u)
        self._reserve(3)
        y = self._run(u)
        gt_u = reverse(self._run(reverse(u)))
        gram = reverse(self._run(reverse(y)))
        return y, gt_u, gram

    def mimo_adjoint_apply(self, Y) -> np.ndarray:
        """Block transpose applied to ``Y`` using ``m^2`` single-input experiments.

        ``(Gamma^T Y)_i = sum_j P G_ji P Y_j``: feed reversed ``Y_j`` into input
        ``i``, read output ``j``, reverse, accumulate into channel ``i``.
        """
        m = self.channels
        if m == 1:
            return self.adjoint_apply(Y)
        Y = self._check(Y)
        self._reserve(m * m)
        return self._mimo_adjoint(Y)

    def _mimo_adjoint(self, Y):
        m, n = self.channels, self.horizon
        out = np.zeros((m, n))
        for i in range(m):
            for j in range(m):
                probe = np.zeros((m, n))
                probe[i] = reverse(Y[j])
                out[i] += reverse(self._run(probe)[j])
        return out
