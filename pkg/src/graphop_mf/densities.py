"""Initial phase densities ρ⁰(u, x) on 𝕋 × Ω and their cell discretizations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import i0

from .torus import PHASE_PERIOD, TorusGrid

NORMALIZATION_TOL = 1e-3
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _circ_diff(u, c):
    return np.mod(u - c + np.pi, PHASE_PERIOD) - np.pi


@dataclass(frozen=True)
class InitialDensity:
    """Phase density per node, normalized so that ``∫ ρ⁰(u, x) du = 1`` for every x.

    kind
        ``uniform``: 1/(2π).
        ``bump``: von Mises ``exp(κ cos(u - 2πx)) / (2π I0(κ))``, center travelling with x.
        ``bump_constant``: the same bump centered at ``center`` for every x.
        ``two_block``: bump at ``center`` for x < 1/2 and at ``center + π`` otherwise.
        ``narrow``: raised cosine of half-width ``width`` at ``center``, compactly supported.
    """

    kind: str = "uniform"
    kappa: float = 1.0
    center: float = 0.0
    width: float = 0.2

    def __post_init__(self):
        if self.kind not in ("uniform", "bump", "bump_constant", "two_block", "narrow"):
            raise ValueError(f"unknown initial density {self.kind!r}")
        if self.kappa < 0 or not 0 < self.width <= np.pi:
            raise ValueError("bad density parameters")

    def _von_mises(self, u, c):
        return np.exp(self.kappa * np.cos(u - c)) / (PHASE_PERIOD * i0(self.kappa))

    def __call__(self, u, x):
        u = np.asarray(u, dtype=float)
        x = np.asarray(x, dtype=float)
        u, x = np.broadcast_arrays(u, x)
        if self.kind == "uniform":
            return np.full(u.shape, 1.0 / PHASE_PERIOD)
        if self.kind == "bump":
            return self._von_mises(u, PHASE_PERIOD * x)
        if self.kind == "bump_constant":
            return self._von_mises(u, self.center)
        if self.kind == "two_block":
            c = np.where(np.mod(x, 1.0) < 0.5, self.center, self.center + np.pi)
            return self._von_mises(u, c)
        d = np.abs(_circ_diff(u, self.center))
        w = self.width
        return np.where(d < w, (1.0 + np.cos(np.pi * d / w)) / (2.0 * w), 0.0)

    def support(self):
        """Arc (lo, hi) containing the support, or None when it is the whole circle."""
        if self.kind == "narrow":
            return self.center - self.width, self.center + self.width
        return None

    def to_spec(self) -> dict:
        return {"kind": self.kind, "kappa": self.kappa, "center": self.center, "width": self.width}


def density_from_spec(spec) -> InitialDensity:
    if isinstance(spec, InitialDensity):
        return spec
    if isinstance(spec, str):
        return InitialDensity(spec)
    return InitialDensity(**spec)


def cell_average(rho0, n: int, u_resolution: int = 4096) -> np.ndarray:
    """``(n, U)`` array of ``ρ⁰`` averaged over node cell j (Gauss-Legendre) at u-cell midpoints.

    Rows are checked for unit mass; a row off by more than ``NORMALIZATION_TOL``
    is rejected with the list of offending cells, smaller defects are
    renormalized away.
    """
    if not callable(rho0):
        rho0 = density_from_spec(rho0)
    grid = TorusGrid(n)
    du = PHASE_PERIOD / u_resolution
    u = (np.arange(u_resolution) + 0.5) * du
    xs = grid.edges[:-1, None] + 0.5 * (1.0 + _GL_NODES[None, :]) / n
    vals = np.asarray(rho0(u[None, None, :], xs[:, :, None]), dtype=float)
    rho = 0.5 * np.einsum("q,jqu->ju", _GL_WEIGHTS, vals)
    if np.any(rho < 0):
        raise ValueError("initial density takes negative values")
    mass = rho.sum(axis=1) * du
    defect = np.abs(mass - 1.0)
    bad = np.nonzero(defect > NORMALIZATION_TOL)[0]
    if bad.size:
        report = ", ".join(f"cell {j}: mass {mass[j]:.6g}" for j in bad[:8])
        raise ValueError(f"initial density is not normalized per node ({bad.size} cells): {report}")
    return rho / mass[:, None]


def inverse_cdf(rho_row: np.ndarray, q) -> np.ndarray:
    """Invert the piecewise-linear CDF of a piecewise-constant phase density."""
    U = rho_row.size
    edges = np.linspace(0.0, PHASE_PERIOD, U + 1)
    cdf = np.concatenate([[0.0], np.cumsum(rho_row)])
    cdf /= cdf[-1]
    return np.interp(q, cdf, edges)


def quantile_family(rho0, fibers: int, particles: int, u_resolution: int = 4096):
    """Deterministic particle discretization: positions at the (k + 1/2)/P quantiles, weights 1/P."""
    rho = cell_average(rho0, fibers, u_resolution)
    q = (np.arange(particles) + 0.5) / particles
    pos = np.array([inverse_cdf(row, q) for row in rho])
    return np.mod(pos, PHASE_PERIOD), np.full(pos.shape, 1.0 / particles)


def fv_initial(rho0, fibers: int, u_cells: int) -> np.ndarray:
    """Cell averages on a ``fibers × u_cells`` grid, each row of unit mass."""
    fine = cell_average(rho0, fibers, u_cells * max(1, 4096 // u_cells))
    r = fine.shape[1] // u_cells
    return fine.reshape(fibers, u_cells, r).mean(axis=2)
