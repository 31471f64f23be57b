"""LTI plant models and the finite-horizon convolution operator.

A SISO plant on a horizon of ``n`` samples acts as the lower-triangular
Toeplitz matrix built from its impulse response ``g_0 ... g_{n-1}``::

    y(t) = sum_{k=0}^{t-1} g_k u(t-k),   t = 1..n

Inputs are zero before the first sample. Signals are plain numpy arrays:
shape ``(n,)`` for SISO and ``(m, n)`` for an ``m``-channel MIMO plant.
"""

from dataclasses import dataclass

import numba
import numpy as np
import scipy.linalg
from scipy import signal as sps

from .errors import DimensionError, StabilityError

# Above this horizon the convolution switches to FFT.
DIRECT_CONVOLUTION_MAX = 2048

RANDOM_POLE_RADIUS = 0.95
MIN_FEEDTHROUGH = 1e-3


def _frozen_array(values, ndim=None, name="array"):
    arr = np.array(values, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ImpulseResponse:
    """Impulse response ``g_0 ... g_{n-1}`` of a SISO plant on an ``n``-sample horizon."""

    taps: np.ndarray

    def __post_init__(self):
        taps = _frozen_array(self.taps, ndim=1, name="taps")
        if taps.size == 0:
            raise DimensionError("an impulse response needs at least one tap")
        object.__setattr__(self, "taps", taps)

    @property
    def horizon(self) -> int:
        return int(self.taps.size)

    @property
    def channels(self) -> int:
        return 1

    def scaled(self, factor: float) -> "ImpulseResponse":
        return ImpulseResponse(factor * self.taps)

    def __eq__(self, other):
        if not isinstance(other, ImpulseResponse):
            return NotImplemented
        return np.array_equal(self.taps, other.taps)

    __hash__ = None


@dataclass(frozen=True)
class MimoPlant:
    """Square ``m x m`` grid of impulse responses sharing one horizon.

    ``taps[i, j]`` is the response of output ``i`` to input ``j``.
    """

    taps: np.ndarray

    def __post_init__(self):
        taps = _frozen_array(self.taps, ndim=3, name="MIMO taps")
        m1, m2, n = taps.shape
        if m1 != m2 or m1 == 0 or n == 0:
            raise DimensionError(f"MIMO taps must have shape (m, m, n), got {taps.shape}")
        object.__setattr__(self, "taps", taps)

    @classmethod
    def from_blocks(cls, blocks):
        """Build from a nested ``m x m`` sequence of :class:`ImpulseResponse`."""
        m = len(blocks)
        if m == 0 or any(len(row) != m for row in blocks):
            raise DimensionError("MIMO blocks must form a non-empty square grid")
        horizons = {b.horizon for row in blocks for b in row}
        if len(horizons) != 1:
            raise DimensionError(f"MIMO blocks have differing horizons {sorted(horizons)}")
        return cls(np.array([[b.taps for b in row] for row in blocks]))

    @property
    def channels(self) -> int:
        return int(self.taps.shape[0])

    @property
    def horizon(self) -> int:
        return int(self.taps.shape[2])

    def block(self, i: int, j: int) -> ImpulseResponse:
        return ImpulseResponse(self.taps[i, j])

    def __eq__(self, other):
        if not isinstance(other, MimoPlant):
            return NotImplemented
        return np.array_equal(self.taps, other.taps)

    __hash__ = None


@numba.njit(cache=True)
def _sequential_convolve(taps, u):
    # fixed tap order per output sample, so delaying u delays y bit for bit
    n = u.shape[0]
    y = np.empty(n)
    for t in range(n):
        acc = 0.0
        for k in range(t + 1):
            acc += taps[k] * u[t - k]
        y[t] = acc
    return y


def _causal_convolve(taps, u):
    n = u.shape[-1]
    if n <= DIRECT_CONVOLUTION_MAX:
        return _sequential_convolve(np.ascontiguousarray(taps, dtype=float), np.ascontiguousarray(u, dtype=float))
    return sps.fftconvolve(taps, u)[:n]


def toeplitz_apply(h: ImpulseResponse, u) -> np.ndarray:
    """Apply the plant's Toeplitz operator to the input ``u``."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.size != h.horizon:
        raise DimensionError(f"input of shape {u.shape} does not match horizon {h.horizon}")
    return _causal_convolve(h.taps, u)


def mimo_apply(p: MimoPlant, U) -> np.ndarray:
    """Apply the block operator: ``Y_i = sum_j G_ij U_j``."""
    U = np.asarray(U, dtype=float)
    m, n = p.channels, p.horizon
    if U.shape != (m, n):
        raise DimensionError(f"input of shape {U.shape} does not match plant ({m}, {n})")
    Y = np.zeros((m, n))
    for i in range(m):
        for j in range(m):
            if U[j].any():
                Y[i] += _causal_convolve(p.taps[i, j], U[j])
    return Y


def apply_plant(plant, u) -> np.ndarray:
    if isinstance(plant, MimoPlant):
        return mimo_apply(plant, u)
    return toeplitz_apply(plant, u)


@dataclass(frozen=True)
class StateSpaceModel:
    """SISO state-space model ``(A, B, C, D)``, continuous or discrete time.

    Continuous models must not have eigenvalues in the open right half-plane.
    Simple, non-zero eigenvalues on the imaginary axis (undamped oscillatory
    modes) are admitted because their impulse response stays bounded;
    integrators and repeated imaginary-axis eigenvalues are rejected.
    Discrete models need spectral radius strictly below one.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float = 0.0
    time_domain: str = "continuous"

    def __post_init__(self):
        A = _frozen_array(np.atleast_2d(self.A), ndim=2, name="A")
        nx = A.shape[0]
        if A.shape != (nx, nx):
            raise DimensionError(f"A must be square, got {A.shape}")
        B = _frozen_array(np.reshape(self.B, (-1, 1)), name="B")
        C = _frozen_array(np.reshape(self.C, (1, -1)), name="C")
        if B.shape[0] != nx or C.shape[1] != nx:
            raise DimensionError(f"B {B.shape} / C {C.shape} inconsistent with A {A.shape}")
        D = float(self.D)
        if not np.isfinite(D):
            raise ValueError("D must be finite")
        if self.time_domain not in ("continuous", "discrete"):
            raise ValueError(f"unknown time domain {self.time_domain!r}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        _check_stability(A, self.time_domain)

    @property
    def order(self) -> int:
        return int(self.A.shape[0])

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    def impulse_response(self, n: int) -> ImpulseResponse:
        """First ``n`` Markov parameters ``D, CB, CAB, ...`` of a discrete model."""
        if self.time_domain != "discrete":
            raise ValueError("impulse_response needs a discrete model; use zoh_discretize")
        return ImpulseResponse(_markov(self.A, self.B, self.C, self.D, n))


def _check_stability(A, time_domain):
    eig = np.linalg.eigvals(A)
    scale = max(1.0, float(np.linalg.norm(A, 1)))
    tol = 1e-12 * scale
    if time_domain == "discrete":
        if np.max(np.abs(eig)) >= 1.0:
            raise StabilityError(f"discrete model has spectral radius {np.max(np.abs(eig)):.6g} >= 1")
        return
    if np.any(eig.real > tol):
        raise StabilityError("continuous model has eigenvalues in the right half-plane")
    marginal = eig[np.abs(eig.real) <= tol]
    if marginal.size == 0:
        return
    if np.any(np.abs(marginal) <= 1e-9 * scale):
        raise StabilityError("continuous model has an eigenvalue at the origin (integrator)")
    for k, lam in enumerate(marginal):
        others = np.delete(marginal, k)
        if others.size and np.min(np.abs(others - lam)) <= 1e-9 * scale:
            raise StabilityError("continuous model has a repeated imaginary-axis eigenvalue")


def _markov(A, B, C, D, n):
    g = np.empty(n)
    g[0] = D
    x = B[:, 0].copy()
    c = C[0]
    for k in range(1, n):
        g[k] = c @ x
        x = A @ x
    return g


def zoh_discretize(m: StateSpaceModel, dt: float, n: int) -> ImpulseResponse:
    """Zero-order-hold discretization, returned as ``n`` impulse-response taps.

    Uses the matrix exponential of the augmented block ``[[A, B], [0, 0]]``,
    so ``g_0 = D`` and ``g_k = C A_d^{k-1} B_d``.
    """
    if m.time_domain != "continuous":
        raise ValueError("zoh_discretize expects a continuous-time model")
    if not dt > 0:
        raise ValueError(f"sampling time must be positive, got {dt}")
    if n < 1:
        raise ValueError(f"horizon must be positive, got {n}")
    Ad, Bd = zoh_matrices(m.A, m.B, dt)
    return ImpulseResponse(_markov(Ad, Bd, m.C, m.D, int(n)))


def zoh_matrices(A, B, dt):
    nx = A.shape[0]
    aug = np.zeros((nx + 1, nx + 1))
    aug[:nx, :nx] = A
    aug[:nx, nx:] = np.reshape(B, (nx, 1))
    E = scipy.linalg.expm(aug * dt)
    return E[:nx, :nx], E[:nx, nx:]


def oscillator() -> StateSpaceModel:
    """Lightly damped/undamped oscillator used as the passivity benchmark."""
    return StateSpaceModel(
        A=[[-0.1, 1.0], [-1.0, 0.1]],
        B=[0.0, 1.0],
        C=[0.0, 1.0],
        D=0.01,
        time_domain="continuous",
    )


def _random_roots(rng, count, radius):
    # conjugate pair with probability 1/2 while two slots remain, else a real root;
    # pair radii are area-uniform in the disk, real roots uniform on the diameter
    roots = []
    while len(roots) < count:
        if count - len(roots) >= 2 and rng.random() < 0.5:
            r = radius * np.sqrt(rng.random())
            theta = np.pi * rng.random()
            z = r * np.exp(1j * theta)
            roots += [z, np.conj(z)]
        else:
            roots.append(complex(rng.uniform(-radius, radius)))
    return np.array(roots)


def _real_block_diag(roots):
    order = len(roots)
    A = np.zeros((order, order))
    k = 0
    while k < order:
        z = roots[k]
        if z.imag != 0.0:
            A[k:k + 2, k:k + 2] = [[z.real, -z.imag], [z.imag, z.real]]
            k += 2
        else:
            A[k, k] = z.real
            k += 1
    return A


def _sos_to_ss(sos):
    # series connection of second-order sections, first section applied first
    A = np.zeros((0, 0))
    B = np.zeros((0, 1))
    C = np.zeros((1, 0))
    D = 1.0
    for sec in sos:
        a2, b2, c2, d2 = sps.tf2ss(sec[:3], sec[3:])
        nx1, nx2 = A.shape[0], a2.shape[0]
        A_new = np.zeros((nx1 + nx2, nx1 + nx2))
        A_new[:nx1, :nx1] = A
        A_new[nx1:, :nx1] = b2 @ C
        A_new[nx1:, nx1:] = a2
        B = np.vstack([B, b2 * D])
        C = np.hstack([d2 * C, c2])
        D = float(d2[0, 0]) * D
        A = A_new
    return A, B, C, D


def random_stable_model(seed: int, order: int, radius: float = RANDOM_POLE_RADIUS) -> StateSpaceModel:
    """Reproducible random discrete-time model with a well-conditioned inverse.

    Recipe (fixed; acceptance values depend on it):

    1. poles: conjugate pairs or real poles in the disk of ``radius``;
    2. ``B, C, D ~ N(0, 1)`` on the real block-diagonal realization of the
       poles, with ``|D| >= 1e-3``;
    3. the zeros (eigenvalues of ``A - B C / D``) are replaced by the
       minimum-phase counterpart: zeros outside the unit circle are mirrored
       to ``1/conj(z)`` with gain factor ``|z|`` (magnitude response unchanged),
       then all zeros are pulled radially inside ``radius``.

    Step 3 keeps the Toeplitz operator invertible to working precision for
    long horizons; without it most draws have condition numbers near 1e17.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    rng = np.random.default_rng(seed)
    poles = _random_roots(rng, order, radius)
    A0 = _real_block_diag(poles)
    B0 = rng.standard_normal(order)
    C0 = rng.standard_normal(order)
    D0 = float(rng.standard_normal())
    if abs(D0) < MIN_FEEDTHROUGH:
        D0 = float(np.copysign(MIN_FEEDTHROUGH, D0))

    zeros = np.linalg.eigvals(A0 - np.outer(B0, C0) / D0)
    gain = D0
    adjusted = []
    for z in zeros:
        mag = abs(z)
        if mag > 1.0:
            gain *= mag
            z = z / mag**2
            mag = 1.0 / mag
        if mag > radius:
            z = z * (radius / mag)
        if abs(z.imag) <= 1e-12 * max(1.0, abs(z)):
            z = complex(z.real)
        adjusted.append(z)
    sos = sps.zpk2sos(np.array(adjusted), poles, gain)
    A, B, C, D = _sos_to_ss(sos)
    return StateSpaceModel(A, B, C, D, time_domain="discrete")


def random_stable_plant(seed: int, order: int, n: int) -> ImpulseResponse:
    """``n`` impulse-response taps of :func:`random_stable_model`."""
    if n < 1:
        raise ValueError(f"horizon must be positive, got {n}")
    return random_stable_model(seed, order).impulse_response(n)


def random_mimo_plant(seed: int, channels: int, order: int, n: int) -> MimoPlant:
    """MIMO plant whose blocks are independent random SISO plants."""
    blocks = [
        [random_stable_plant(seed * 1000 + i * channels + j, order, n) for j in range(channels)]
        for i in range(channels)
    ]
    return MimoPlant.from_blocks(blocks)
