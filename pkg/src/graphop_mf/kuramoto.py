"""The finite Kuramoto-type model on a weighted graph sampled from a graphop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .densities import cell_average, density_from_spec, inverse_cdf
from .graphop import Graphop
from .metrics import MeasureFamily
from .torus import PHASE_PERIOD, TorusGrid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CouplingFunction:
    """``D(u) = Σ_k a_k cos(ku) + b_k sin(ku)``, k = 1..modes.

    ``sine_coef[k-1] = b_k`` and ``cosine_coef[k-1] = a_k``.
    """

    sine_coef: tuple = (1.0,)
    cosine_coef: tuple = ()
    name: str = "sin"

    @property
    def modes(self) -> int:
        return max(len(self.sine_coef), len(self.cosine_coef))

    def coefs(self):
        K = self.modes
        a = np.zeros(K)
        b = np.zeros(K)
        a[: len(self.cosine_coef)] = self.cosine_coef
        b[: len(self.sine_coef)] = self.sine_coef
        return a, b

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        a, b = self.coefs()
        out = np.zeros(u.shape)
        for k in range(1, self.modes + 1):
            out += a[k - 1] * np.cos(k * u) + b[k - 1] * np.sin(k * u)
        return out

    @property
    def lipschitz_bound(self) -> float:
        a, b = self.coefs()
        k = np.arange(1, self.modes + 1)
        return float(np.sum(k * (np.abs(a) + np.abs(b))))

    @property
    def sup_bound(self) -> float:
        """Upper bound on ``max |D|``: dense sampling plus a Lipschitz correction."""
        n = 8192
        u = np.arange(n) * PHASE_PERIOD / n
        return float(np.max(np.abs(self(u))) + self.lipschitz_bound * np.pi / n)

    def check(self, resolution: int = 8192):
        """Verify ``|D(u) - D(v)| ≤ dist(u, v)`` and ``max |D| ≤ 1`` on a fine grid."""
        u = np.arange(resolution) * PHASE_PERIOD / resolution
        d = self(u)
        slope = np.max(np.abs(np.diff(np.append(d, d[0])))) * resolution / PHASE_PERIOD
        if slope > 1 + 1e-9 or self.lipschitz_bound > 1 + 1e-12:
            raise ValueError(f"coupling {self.name} is not 1-Lipschitz (bound {self.lipschitz_bound:.4g})")
        if np.max(np.abs(d)) > 1 + 1e-12:
            raise ValueError(f"coupling {self.name} exceeds 1 in absolute value")
        return True

    def to_spec(self) -> dict:
        return {"name": self.name, "sine_coef": list(self.sine_coef), "cosine_coef": list(self.cosine_coef)}


def sine() -> CouplingFunction:
    return CouplingFunction((1.0,), (), "sin")


def sine_second_harmonic(beta: float) -> CouplingFunction:
    """``(sin u + β sin(2u)/2) / (1 + |β|)``.

    The raw sum has Lipschitz constant ``1 + |β|``; dividing by it keeps the
    coupling 1-Lipschitz and bounded by 1.
    """
    if abs(beta) > 1:
        raise ValueError("|beta| must not exceed 1")
    s = 1.0 + abs(beta)
    return CouplingFunction((1.0 / s, 0.5 * beta / s), (), f"sin+harmonic({beta:g})")


def coupling_from_spec(name: str = "sin", beta: float = 0.0) -> CouplingFunction:
    if name == "sin":
        return sine()
    if name in ("sin2", "sine_second_harmonic", "harmonic"):
        return sine_second_harmonic(beta)
    raise ValueError(f"unknown coupling function {name!r}")


@dataclass
class CouplingSpec:
    D: CouplingFunction = field(default_factory=sine)
    C: float = 1.0
    omega: np.ndarray | None = None

    def __post_init__(self):
        if self.C < 0:
            raise ValueError("coupling strength must be nonnegative")


@dataclass
class OscillatorState:
    phases: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.phases = np.mod(np.asarray(self.phases, dtype=float), PHASE_PERIOD)
        self.weights = np.asarray(self.weights, dtype=float)
        N = self.phases.shape[0]
        if self.weights.shape != (N, N):
            raise ValueError(f"weight matrix has shape {self.weights.shape}, expected ({N}, {N})")

    @property
    def N(self) -> int:
        return self.phases.shape[0]


@dataclass
class Trajectory:
    times: np.ndarray
    phases: np.ndarray  # (stamps, N) or (stamps, N, seeds)


def sample_weights(A: Graphop, N: int) -> np.ndarray:
    """``A_ij = N² ν(cell_i × cell_j)``; for a graphon this is ``N² ∫∫ W`` over the cell pair."""
    if N < 1:
        raise ValueError("N must be positive")
    W = N * A.cell_matrix(N)
    return np.array(W)


def sample_initial(rho0, n: int, M: int, seed, u_resolution: int = 4096) -> np.ndarray:
    """Draw ``N = nM`` phases; block j (M oscillators) i.i.d. from the cell-averaged density of cell j."""
    if n < 1 or M < 1:
        raise ValueError("n and M must be positive")
    rho0 = density_from_spec(rho0) if not callable(rho0) else rho0
    rho = cell_average(rho0, n, u_resolution)
    rng = np.random.default_rng(seed)
    q = rng.uniform(size=(n, M))
    u = np.array([inverse_cdf(rho[j], q[j]) for j in range(n)])
    return np.mod(u.reshape(-1), PHASE_PERIOD)


def _rhs(U, A, a, b, C, omega, deg):
    N = U.shape[0]
    batched = U.ndim == 2
    U2 = U if batched else U[:, None]
    S = U2.shape[1]
    K = a.size
    blocks = []
    for k in range(1, K + 1):
        blocks.append(np.cos(k * U2))
        blocks.append(np.sin(k * U2))
    stacked = np.concatenate(blocks, axis=1)
    Msum = A @ stacked
    out = np.zeros_like(U2)
    for k in range(K):
        ck, sk = blocks[2 * k], blocks[2 * k + 1]
        X = Msum[:, (2 * k) * S:(2 * k + 1) * S]
        Y = Msum[:, (2 * k + 1) * S:(2 * k + 2) * S]
        # Σ_j A_ij cos(k(u_j - u_i)) and Σ_j A_ij sin(k(u_j - u_i))
        cos_sum = X * ck + Y * sk
        sin_sum = Y * ck - X * sk
        out += a[k] * cos_sum + b[k] * sin_sum
    out *= C / N
    if omega is not None:
        out += omega[:, None]
    return out if batched else out[:, 0]


def _steps(T, dt):
    n = T / dt
    k = int(round(n))
    if k < 1 or abs(n - k) > 1e-9 * max(1.0, n):
        raise ValueError(f"T/dt = {n} is not an integer")
    return k


def default_dt(coupling: CouplingSpec, sup_degree: float) -> float:
    scale = coupling.C * max(sup_degree, 1e-12)
    return min(1e-2, 0.1 / scale) if scale > 0 else 1e-2


def integrate(state: OscillatorState, coupling: CouplingSpec, T: float, dt: float | None = None,
              dt_out: float | None = None) -> Trajectory:
    """Classical RK4 for ``u̇_i = ω_i + (C/N) Σ_j A_ij D(u_j - u_i)``.

    ``state.phases`` may be ``(N,)`` or ``(N, S)`` (S independent runs sharing
    the weights). Phases are wrapped to [0, 2π) after every step.
    """
    A = state.weights
    N = state.N
    if dt is None:
        dt = default_dt(coupling, float(np.max(A.sum(axis=1)) / N))
    if dt <= 0:
        raise ValueError("dt must be positive")
    nsteps = _steps(T, dt)
    dt_out = dt if dt_out is None else dt_out
    every = _steps(dt_out, dt)
    a, b = coupling.D.coefs()
    omega = None if coupling.omega is None else np.asarray(coupling.omega, dtype=float)
    if omega is not None and omega.shape != (N,):
        raise ValueError("frequency vector has the wrong length")
    C = coupling.C
    u = np.array(state.phases, dtype=float)
    times = [0.0]
    out = [u.copy()]

    def f(v):
        # overflow is caught by the finiteness check below
        with np.errstate(all="ignore"):
            return _rhs(v, A, a, b, C, omega, None)

    for step in range(1, nsteps + 1):
        k1 = f(u)
        k2 = f(u + 0.5 * dt * k1)
        k3 = f(u + 0.5 * dt * k2)
        k4 = f(u + dt * k3)
        u = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(u)):
            bad = np.nonzero(~np.isfinite(u))[0]
            raise FloatingPointError(
                f"phase integration diverged at step {step} (t={step * dt:.6g}); oscillators {bad[:10].tolist()}"
            )
        u = np.mod(u, PHASE_PERIOD)
        if step % every == 0 or step == nsteps:
            times.append(step * dt)
            out.append(u.copy())
    return Trajectory(np.array(times), np.array(out))


def empirical_family(phases, n: int, M: int, time: float = 0.0) -> MeasureFamily:
    """Fiber i is the uniform atomic measure on the M phases of block i."""
    phases = np.asarray(phases, dtype=float)
    if phases.ndim != 1:
        raise ValueError("phases must be a vector")
    if phases.size != n * M:
        raise ValueError(f"{phases.size} phases cannot be split into {n} blocks of {M}")
    pos = phases.reshape(n, M)
    return MeasureFamily(TorusGrid(n), list(pos), [np.full(M, 1.0 / M)] * n, 1.0, time)
