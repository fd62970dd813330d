"""Mean-field transport on graphops: characteristic field, characteristic flow,
the fixed-point (Picard) solver and a finite-volume cross-check.

Measures are carried as ``(fibers, particles)`` arrays. For a trigonometric
coupling ``D`` the field only needs the Fourier moments of ``(𝒜μ_t)^x``:

    Σ w D(ũ - u) = Σ_k a_k (X_k cos ku + Y_k sin ku) + b_k (Y_k cos ku - X_k sin ku),

with ``X_k + i Y_k = Σ w e^{ikũ}``. Moments of ``𝒜μ`` are the cell matrix
applied to the per-fiber moments of ``μ``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import CFLError, ContractionError, ConvergenceError, FieldBoundError
from .densities import density_from_spec, fv_initial
from .graphop import Graphop
from .kuramoto import CouplingSpec, _steps
from .metrics import MeasureFamily, d_bl_rows, weighted_sup
from .torus import PHASE_PERIOD, TorusGrid

log = logging.getLogger(__name__)

GAMMA_TOL = 1e-9
CFL_MAX = 0.9


def moments(positions, weights, modes: int):
    """``X[..., k-1] = Σ w cos(k u)``, ``Y[..., k-1] = Σ w sin(k u)`` over the last axis."""
    positions = np.asarray(positions, dtype=float)
    weights = np.broadcast_to(np.asarray(weights, dtype=float), positions.shape)
    k = np.arange(1, modes + 1)
    ang = positions[..., None] * k
    X = np.einsum("...p,...pk->...k", weights, np.cos(ang))
    Y = np.einsum("...p,...pk->...k", weights, np.sin(ang))
    return X, Y


def field_from_moments(X, Y, a, b, C, u):
    """Field ``C Σ w D(ũ - u)`` at positions ``u`` of shape ``(F, Q)`` from ``(F, K)`` moments."""
    out = np.zeros(np.shape(u))
    for k in range(1, a.size + 1):
        ck = np.cos(k * u)
        sk = np.sin(k * u)
        x = X[:, k - 1, None]
        y = Y[:, k - 1, None]
        if a[k - 1]:
            out += a[k - 1] * (x * ck + y * sk)
        if b[k - 1]:
            out += b[k - 1] * (y * ck - x * sk)
    return C * out


class FieldEvaluator:
    """``V[𝒜, μ, x](t, u) = C ∫ D(ũ - u) d(𝒜μ_t)^x(ũ)`` for a stored trajectory μ.

    The moments of ``(𝒜μ_t)^x`` are cached at the trajectory stamps and linearly
    interpolated in between. Every evaluation is checked against the bound
    ``|V| ≤ C ‖D‖∞ b γ_A``.
    """

    def __init__(self, A: Graphop | np.ndarray, coupling: CouplingSpec, times, positions, weights, b: float = 1.0):
        positions = np.asarray(positions, dtype=float)
        if positions.ndim == 2:
            positions = positions[None]
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if positions.shape[0] != times.size:
            raise ValueError("one position array per time stamp required")
        S, F, _ = positions.shape
        P = A if isinstance(A, np.ndarray) else A.cell_matrix(F)
        if P.shape != (F, F):
            raise ValueError(f"cell matrix has shape {P.shape}, family has {F} fibers")
        self.P = P
        self.gamma = float(np.max(P.sum(axis=1)))
        self.coupling = coupling
        self.a, self.b_coef = coupling.D.coefs()
        self.times = times
        self.b = float(b)
        X, Y = moments(positions, np.broadcast_to(weights, positions.shape[1:]), coupling.D.modes)
        self.AX = np.einsum("xy,syk->sxk", P, X)
        self.AY = np.einsum("xy,syk->sxk", P, Y)
        self.bound = coupling.C * coupling.D.sup_bound * self.b * self.gamma
        self.evaluations = 0
        self.max_abs = 0.0

    @classmethod
    def from_family(cls, A, coupling, family: MeasureFamily):
        """Time-independent evaluator for a single family with equal particle counts per fiber."""
        pos = np.array(family.positions)
        w = np.array(family.weights)
        if pos.ndim != 2:
            raise ValueError("fibers must carry equal particle counts")
        return cls(A, coupling, [family.time], pos, w, family.b)

    def _moments_at(self, t):
        ts = self.times
        if ts.size == 1:
            # a single cached stamp is held constant in time
            return self.AX[0], self.AY[0]
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise KeyError(f"t={t} outside the cached stamps [{ts[0]}, {ts[-1]}]")
        j = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, ts.size - 2))
        lam = (t - ts[j]) / (ts[j + 1] - ts[j])
        return ((1 - lam) * self.AX[j] + lam * self.AX[j + 1], (1 - lam) * self.AY[j] + lam * self.AY[j + 1])

    def __call__(self, t, u, fibers=None):
        X, Y = self._moments_at(t)
        if fibers is not None:
            X, Y = X[fibers], Y[fibers]
        u = np.asarray(u, dtype=float)
        V = field_from_moments(X, Y, self.a, self.b_coef, self.coupling.C, u)
        m = float(np.max(np.abs(V))) if V.size else 0.0
        self.evaluations += 1
        self.max_abs = max(self.max_abs, m)
        if m > self.bound * (1 + 1e-9) + 1e-12:
            raise FieldBoundError(f"field bound violated: |V| = {m:.6g} > C‖D‖∞bγ = {self.bound:.6g}")
        return V


def field(evaluator: FieldEvaluator, t, u, x):
    """Field value at time t, phases u, fiber (cell) x."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return evaluator(t, u[None, :], fibers=[x])[0]


def flow_step(evaluator: FieldEvaluator, u, t: float, dt: float):
    """One classical RK4 step of ``dP/dt = V(t, P)`` for ``(F, Q)`` positions, wrapped to [0, 2π)."""
    k1 = evaluator(t, u)
    k2 = evaluator(t + 0.5 * dt, u + 0.5 * dt * k1)
    k3 = evaluator(t + 0.5 * dt, u + 0.5 * dt * k2)
    k4 = evaluator(t + dt, u + dt * k3)
    out = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"characteristic flow produced NaN at t={t:.6g}")
    return np.mod(out, PHASE_PERIOD)


def flow(evaluator: FieldEvaluator, u0, T: float, dt: float, stamps=None, unwrapped: bool = False):
    """Integrate characteristics from 0 to T; returns positions at ``stamps`` (default: T only).

    With ``unwrapped=True`` the lifted positions on the real line are returned,
    which is what finite-difference Lipschitz estimates need.
    """
    nsteps = _steps(T, dt)
    stamps = np.array([T]) if stamps is None else np.asarray(stamps, dtype=float)
    stamp_steps = np.rint(stamps / dt).astype(int)
    if np.any(np.abs(stamp_steps * dt - stamps) > 1e-9):
        raise ValueError("stamps must be multiples of dt")
    u = np.array(u0, dtype=float)
    lift = np.zeros_like(u)
    out = []
    if 0 in stamp_steps:
        out.append(u.copy())
    for step in range(1, nsteps + 1):
        t = (step - 1) * dt
        k1 = evaluator(t, u)
        k2 = evaluator(t + 0.5 * dt, u + 0.5 * dt * k1)
        k3 = evaluator(t + 0.5 * dt, u + 0.5 * dt * k2)
        k4 = evaluator(t + dt, u + dt * k3)
        du = dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(du)):
            raise FloatingPointError(f"characteristic flow produced NaN at step {step}")
        lift += du
        u = np.mod(u + du, PHASE_PERIOD)
        if step in stamp_steps:
            out.append((u0 + lift) if unwrapped else u.copy())
    return np.array(out)


@dataclass
class PicardResult:
    times: np.ndarray
    positions: np.ndarray  # (stamps, fibers, particles)
    weights: np.ndarray  # (fibers, particles)
    gaps: list
    ratios: list
    iterations: int
    converged: bool
    alpha: float
    rate_bound: float
    b: float
    evaluator: FieldEvaluator | None = dc_field(default=None, repr=False)

    @property
    def grid(self) -> TorusGrid:
        return TorusGrid(self.positions.shape[1])

    def family(self, s: int) -> MeasureFamily:
        return MeasureFamily.from_arrays(self.positions[s], self.weights, self.b, float(self.times[s]))

    def families(self):
        return [self.family(s) for s in range(self.times.size)]


def _family_arrays(mu0):
    if isinstance(mu0, MeasureFamily):
        pos = np.array(mu0.positions)
        w = np.array(mu0.weights)
        if pos.ndim != 2:
            raise ValueError("fibers must carry equal particle counts")
        return pos, w, mu0.b
    pos, w = mu0
    pos = np.asarray(pos, dtype=float)
    w = np.broadcast_to(np.asarray(w, dtype=float), pos.shape).copy()
    return pos, w, max(1.0, float(w.sum(axis=1).max()))


def default_alpha(C: float, b: float, gamma: float) -> float:
    return 2 * C * b + b * gamma + 2.0


def stamp_gaps(P, new, old, weights):
    """``d̄^{b,A}`` between two stamped particle trajectories, one value per stamp."""
    S, F, Q = new.shape
    w = np.broadcast_to(weights, (S, F, Q)).reshape(S * F, Q)
    d = d_bl_rows(new.reshape(S * F, Q), w, old.reshape(S * F, Q), w).reshape(S, F)
    return np.max(d @ P.T, axis=1)


def picard_solve(A: Graphop, mu0, coupling: CouplingSpec, T: float = 1.0, dt: float | None = None,
                 alpha: float | None = None, tol: float = 1e-4, max_iter: int = 50,
                 dt_out: float | None = None, b: float | None = None, kappa0=None,
                 strict: bool = True, slack: float = 0.1) -> PicardResult:
    """Fixed-point iteration ``κ ↦ μ₀ ∘ T_{0,t}[𝒜, κ]`` with a frozen field per sweep.

    Parameters
    ----------
    mu0 : MeasureFamily or (positions, weights) with ``(F, P)`` arrays
    alpha : weight in ``d_α``; default ``2Cb + bγ_A + 2``. Must exceed ``2Cb + bγ_A``.
    tol : stop once ``d_α(κ^{n+1}, κ^n) ≤ tol``.
    dt_out : spacing of the stored stamps, default ``T/50``.
    kappa0 : optional starting trajectory ``(stamps, F, P)``; default is μ₀ held constant.
    strict : raise :class:`ContractionError` when a successive gap ratio exceeds
        ``2Cb / (α - bγ_A) + slack``.
    """
    pos0, w, b_fam = _family_arrays(mu0)
    b = b_fam if b is None else float(b)
    F = pos0.shape[0]
    Pm = A.cell_matrix(F)
    gamma = float(np.max(Pm.sum(axis=1)))
    if gamma > 1 + GAMMA_TOL:
        raise ValueError(f"graphop has maximal degree {gamma:.6g} > 1; the solver needs γ_A ≤ 1")
    if np.any(w.sum(axis=1) > b * (1 + 1e-12)):
        raise ValueError("initial fiber mass exceeds b")
    C = coupling.C
    if alpha is None:
        alpha = default_alpha(C, b, gamma)
    if alpha <= 2 * C * b + b * gamma:
        raise ValueError(f"alpha={alpha} must exceed 2Cb + bγ_A = {2 * C * b + b * gamma:.6g}")
    if dt is None:
        dt = min(1e-2, 0.1 / max(C * b * gamma, 1e-12))
    dt_out = T / 50 if dt_out is None else dt_out
    nst = _steps(T, dt_out)
    times = np.arange(nst + 1) * dt_out
    if kappa0 is None:
        kappa = np.broadcast_to(pos0, (times.size,) + pos0.shape).copy()
    else:
        kappa = np.asarray(kappa0, dtype=float)
        if kappa.shape != (times.size,) + pos0.shape:
            raise ValueError("starting trajectory has the wrong shape")
    rate = 2 * C * b / (alpha - b * gamma)
    gaps, ratios = [], []
    ev = None
    for it in range(1, max_iter + 1):
        ev = FieldEvaluator(Pm, coupling, times, kappa, w, b)
        new = flow(ev, pos0, T, dt, times)
        gap = weighted_sup(times, stamp_gaps(Pm, new, kappa, w), alpha)
        gaps.append(gap)
        if len(gaps) > 1 and gaps[-2] > 1e-12:
            r = gap / gaps[-2]
            ratios.append(r)
            if r > rate + slack:
                msg = f"iteration {it}: gap ratio {r:.4g} exceeds contraction bound {rate:.4g} + {slack}"
                if strict:
                    raise ContractionError(msg)
                log.warning(msg)
        log.debug("picard iteration %d: d_alpha gap %.3e", it, gap)
        kappa = new
        if gap <= tol:
            ev = FieldEvaluator(Pm, coupling, times, kappa, w, b)
            return PicardResult(times, kappa, w, gaps, ratios, it, True, alpha, rate, b, ev)
    raise ConvergenceError(f"no convergence to {tol} in {max_iter} iterations; gaps {gaps}", gaps)


@dataclass
class FVResult:
    times: np.ndarray
    density: np.ndarray  # (stamps, fibers, u_cells)
    max_cfl: float

    @property
    def u_cells(self) -> int:
        return self.density.shape[2]

    def masses(self) -> np.ndarray:
        return self.density.sum(axis=2) * PHASE_PERIOD / self.u_cells

    def family(self, s: int, b: float = 1.0) -> MeasureFamily:
        """Cell masses placed at u-cell midpoints."""
        U = self.u_cells
        du = PHASE_PERIOD / U
        u = (np.arange(U) + 0.5) * du
        F = self.density.shape[1]
        w = self.density[s] * du
        return MeasureFamily(TorusGrid(F), [u] * F, list(w), max(b, float(w.sum(axis=1).max())), float(self.times[s]))


def fv_transport_solve(A: Graphop, rho0, coupling: CouplingSpec, T: float = 1.0, dt: float = 0.005,
                       u_resolution: int = 256, fibers: int | None = None, dt_out: float | None = None) -> FVResult:
    """First-order upwind finite volumes for ``∂_t ρ + ∂_u(ρ V[A]ρ) = 0`` on every fiber.

    ``rho0`` is either a ``(F, U)`` array of cell averages or an initial
    density (then ``fibers`` is required). Forward Euler in time; fluxes
    telescope so per-fiber mass is conserved to rounding.
    """
    if isinstance(rho0, np.ndarray):
        rho = np.array(rho0, dtype=float)
    else:
        if fibers is None:
            raise ValueError("fibers must be given with a density object")
        rho = fv_initial(density_from_spec(rho0), fibers, u_resolution)
    F, U = rho.shape
    du = PHASE_PERIOD / U
    uc = (np.arange(U) + 0.5) * du
    faces = (np.arange(U) + 1.0) * du  # face c+1/2 sits between cells c and c+1
    Pm = A.cell_matrix(F)
    gamma = float(np.max(Pm.sum(axis=1)))
    a, bc = coupling.D.coefs()
    K = coupling.D.modes
    kk = np.arange(1, K + 1)
    cosk = np.cos(uc[:, None] * kk) * du
    sink = np.sin(uc[:, None] * kk) * du
    b = max(1.0, float((rho.sum(axis=1) * du).max()))
    bound = coupling.C * coupling.D.sup_bound * b * gamma
    nsteps = _steps(T, dt)
    dt_out = T / 50 if dt_out is None else dt_out
    every = _steps(dt_out, dt)
    times, out = [0.0], [rho.copy()]
    max_cfl = 0.0
    for step in range(1, nsteps + 1):
        X = Pm @ (rho @ cosk)
        Y = Pm @ (rho @ sink)
        V = field_from_moments(X, Y, a, bc, coupling.C, np.broadcast_to(faces, (F, U)))
        vmax = float(np.max(np.abs(V)))
        if vmax > bound * (1 + 1e-9) + 1e-12:
            raise FieldBoundError(f"field bound violated: |V| = {vmax:.6g} > {bound:.6g}")
        cfl = vmax * dt / du
        max_cfl = max(max_cfl, cfl)
        if cfl > CFL_MAX:
            raise CFLError(f"CFL number {cfl:.3g} exceeds {CFL_MAX} at step {step}; reduce dt below "
                             f"{CFL_MAX * du / max(vmax, 1e-300):.3g}")
        right = np.roll(rho, -1, axis=1)
        flux = np.where(V > 0, V * rho, V * right)
        rho = rho - dt / du * (flux - np.roll(flux, 1, axis=1))
        if not np.all(np.isfinite(rho)):
            raise FloatingPointError(f"finite-volume solution diverged at step {step}")
        if step % every == 0 or step == nsteps:
            times.append(step * dt)
            out.append(rho.copy())
    return FVResult(np.array(times), np.array(out), max_cfl)


def continuity_in_x_diagnostic(traj) -> dict:
    """Largest ``d_BL`` between neighbouring fibers at every stamp.

    ``traj`` is a :class:`PicardResult` or a list of equal-shape families.
    Diagnostic only; no pass/fail claim.
    """
    if isinstance(traj, PicardResult):
        pos, w, times = traj.positions, traj.weights, traj.times
    else:
        pos = np.array([np.array(f.positions) for f in traj])
        w = np.array(traj[0].weights)
        times = np.array([f.time for f in traj])
    S, F, Q = pos.shape
    nxt = np.roll(np.arange(F), -1)
    ww = np.broadcast_to(w, (S, F, Q))
    mod = d_bl_rows(pos.reshape(S * F, Q), ww.reshape(S * F, Q),
                    pos[:, nxt].reshape(S * F, Q), ww[:, nxt].reshape(S * F, Q)).reshape(S, F)
    return {
        "times": times,
        "modulus": mod,
        "max_modulus": mod.max(axis=1),
        "argmax_cell": mod.argmax(axis=1),
        "median_max_modulus": float(np.median(mod.max(axis=1))),
    }
