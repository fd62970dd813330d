"""Measures on the phase circle, the bounded-Lipschitz metric and the fiber metrics.

``d_BL(μ, ν) = sup_f |∫ f d(μ - ν)|`` over ``f: 𝕋 -> [0, 1]`` that are
1-Lipschitz in circle distance. On particle measures the supremum is a finite
LP over the values ``f(p_i)``. Because ``f -> 1 - f`` preserves the class,

    d_BL = P(σ) + max(0, -Σσ),   P(σ) = max_f Σ σ_i f(p_i),

so a single maximization suffices. ``P`` is solved exactly by a dynamic
program over concave piecewise-linear value functions along the sorted
points (the circle is cut at its largest gap; the closing constraint is
handled by a one-dimensional Lagrangian search). The HiGHS LP is kept as a
cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .graphop import Graphop
from .torus import PHASE_PERIOD, TorusGrid, wrap

TWO_PI = PHASE_PERIOD


@dataclass
class PhaseMeasure:
    """Weighted particles on the phase circle with a mass cap ``b``."""

    positions: np.ndarray
    weights: np.ndarray
    b: float = 1.0

    def __post_init__(self):
        self.positions = wrap(np.atleast_1d(np.asarray(self.positions, dtype=float)), TWO_PI)
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if self.positions.shape != self.weights.shape:
            raise ValueError("positions and weights differ in length")
        if np.any(self.weights < 0):
            raise ValueError("phase measure has a negative weight")
        if self.mass > self.b * (1 + 1e-12):
            raise ValueError(f"total mass {self.mass:.6g} exceeds the cap b={self.b}")

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    @classmethod
    def dirac(cls, u: float, mass: float = 1.0, b: float | None = None):
        return cls([u], [mass], max(mass, 1.0) if b is None else b)

    @classmethod
    def empty(cls, b: float = 1.0):
        return cls(np.zeros(0), np.zeros(0), b)


@dataclass
class MeasureFamily:
    """One phase measure per node cell: a piecewise-constant ``x -> μ^x``."""

    grid: TorusGrid
    positions: list
    weights: list
    b: float = 1.0
    time: float = 0.0

    def __post_init__(self):
        if isinstance(self.grid, int):
            self.grid = TorusGrid(self.grid)
        n = self.grid.resolution
        self.positions = [wrap(np.atleast_1d(np.asarray(p, dtype=float)), TWO_PI) for p in self.positions]
        self.weights = [np.atleast_1d(np.asarray(w, dtype=float)) for w in self.weights]
        if len(self.positions) != n or len(self.weights) != n:
            raise ValueError(f"family has {len(self.positions)} fibers, grid has {n} cells")
        for i, (p, w) in enumerate(zip(self.positions, self.weights)):
            if p.shape != w.shape:
                raise ValueError(f"fiber {i}: positions and weights differ in length")
            if np.any(w < 0):
                raise ValueError(f"fiber {i}: negative weight")
            if w.sum() > self.b * (1 + 1e-12):
                raise ValueError(f"fiber {i}: mass {w.sum():.6g} exceeds the cap b={self.b}")

    @classmethod
    def from_arrays(cls, positions, weights=None, b: float = 1.0, time: float = 0.0):
        """Build from ``(F, P)`` position and weight arrays (weights default to ``1/P``)."""
        positions = np.asarray(positions, dtype=float)
        if positions.ndim != 2:
            raise ValueError("positions must be a (fibers, particles) array")
        if weights is None:
            weights = np.full(positions.shape, 1.0 / positions.shape[1])
        weights = np.broadcast_to(np.asarray(weights, dtype=float), positions.shape)
        return cls(TorusGrid(positions.shape[0]), list(positions), list(weights), b, time)

    @classmethod
    def constant(cls, grid, measure: PhaseMeasure, time: float = 0.0):
        grid = grid if isinstance(grid, TorusGrid) else TorusGrid(grid)
        n = grid.resolution
        return cls(grid, [measure.positions] * n, [measure.weights] * n, measure.b, time)

    def fiber(self, i: int) -> PhaseMeasure:
        return PhaseMeasure(self.positions[i], self.weights[i], self.b)

    def masses(self) -> np.ndarray:
        return np.array([w.sum() for w in self.weights])

    def refine(self, resolution: int) -> "MeasureFamily":
        """Same family on a finer nested grid (each fiber repeated)."""
        n = self.grid.resolution
        if resolution % n:
            raise ValueError(f"grid with {resolution} cells does not refine {n} cells")
        r = resolution // n
        pos = [p for p in self.positions for _ in range(r)]
        wts = [w for w in self.weights for _ in range(r)]
        return MeasureFamily(TorusGrid(resolution), pos, wts, self.b, self.time)


# ---------------------------------------------------------------------------
# exact d_BL via dynamic programming


@numba.njit(cache=True)
def _chain_max(sig, gaps, f_out, m_store, seg_len, seg_slope, tmp_len, tmp_slope):
    """max Σ sig_i f_i over f in [0,1]^K with |f_{i+1} - f_i| <= gaps[i].

    Value functions are concave piecewise linear on [0, 1], stored as
    segment lengths and (decreasing) slopes plus the value at 0.
    """
    K = sig.shape[0]
    nseg = 1
    seg_len[0] = 1.0
    seg_slope[0] = sig[0]
    v0 = 0.0
    for i in range(K):
        if i > 0:
            g = gaps[i - 1]
            # concatenate: increasing part, flat part of length 2g, decreasing part
            k = 0
            npos = 0
            for s in range(nseg):
                if seg_slope[s] > 0.0:
                    npos += 1
            for s in range(npos):
                tmp_len[k] = seg_len[s]
                tmp_slope[k] = seg_slope[s]
                k += 1
            tmp_len[k] = 2.0 * g
            tmp_slope[k] = 0.0
            k += 1
            for s in range(npos, nseg):
                tmp_len[k] = seg_len[s]
                tmp_slope[k] = seg_slope[s]
                k += 1
            # trim g from the front, tracking the value at the new origin
            left = g
            start = 0
            while left > 0.0 and start < k:
                if tmp_len[start] <= left:
                    v0 += tmp_len[start] * tmp_slope[start]
                    left -= tmp_len[start]
                    start += 1
                else:
                    v0 += left * tmp_slope[start]
                    tmp_len[start] -= left
                    left = 0.0
            # trim g from the back
            left = g
            stop = k
            while left > 0.0 and stop > start:
                if tmp_len[stop - 1] <= left:
                    left -= tmp_len[stop - 1]
                    stop -= 1
                else:
                    tmp_len[stop - 1] -= left
                    left = 0.0
            nseg = 0
            for s in range(start, stop):
                if tmp_len[s] > 0.0:
                    seg_len[nseg] = tmp_len[s]
                    seg_slope[nseg] = tmp_slope[s] + sig[i]
                    nseg += 1
            if nseg == 0:
                seg_len[0] = 1.0
                seg_slope[0] = sig[i]
                nseg = 1
        # argmax of the current value function
        m = 0.0
        for s in range(nseg):
            if seg_slope[s] > 0.0:
                m += seg_len[s]
            else:
                break
        m_store[i] = min(m, 1.0)
    best = v0
    for s in range(nseg):
        if seg_slope[s] > 0.0:
            best += seg_len[s] * seg_slope[s]
        else:
            break
    f_out[K - 1] = m_store[K - 1]
    for i in range(K - 2, -1, -1):
        lo = f_out[i + 1] - gaps[i]
        hi = f_out[i + 1] + gaps[i]
        f_out[i] = min(max(m_store[i], lo), hi)
    return best


@numba.njit(cache=True)
def _bl_positive_part(pos, sig):
    """P(σ) = max Σ σ_i f(p_i) over the bounded-Lipschitz class on [0, 2π)."""
    K0 = pos.shape[0]
    if K0 == 0:
        return 0.0
    order = np.argsort(pos)
    p = np.empty(K0)
    s = np.empty(K0)
    # sort and merge coincident points
    K = 0
    for idx in range(K0):
        q = pos[order[idx]]
        if K > 0 and q - p[K - 1] <= 1e-15:
            s[K - 1] += sig[order[idx]]
        else:
            p[K] = q
            s[K] = sig[order[idx]]
            K += 1
    scale = 0.0
    for i in range(K):
        scale += abs(s[i])
    # points with zero net mass carry no information
    K2 = 0
    for i in range(K):
        if abs(s[i]) > 1e-17 * scale:
            p[K2] = p[i]
            s[K2] = s[i]
            K2 += 1
    K = K2
    if K == 0:
        return 0.0
    if K == 1:
        return max(s[0], 0.0)
    # rotate so that the largest gap closes the circle
    big = 2.0 * np.pi - (p[K - 1] - p[0])
    cut = K - 1
    for i in range(K - 1):
        if p[i + 1] - p[i] > big:
            big = p[i + 1] - p[i]
            cut = i
    sig_c = np.empty(K)
    gaps = np.empty(K - 1)
    for j in range(K):
        src = (cut + 1 + j) % K
        sig_c[j] = s[src]
        if j < K - 1:
            nxt = (src + 1) % K
            g = p[nxt] - p[src]
            if g < 0.0:
                g += 2.0 * np.pi
            gaps[j] = g
    wrap_gap = big
    f = np.empty(K)
    m_store = np.empty(K)
    seg_len = np.empty(K + 2)
    seg_slope = np.empty(K + 2)
    tmp_len = np.empty(K + 3)
    tmp_slope = np.empty(K + 3)
    val0 = _chain_max(sig_c, gaps, f, m_store, seg_len, seg_slope, tmp_len, tmp_slope)
    d = f[0] - f[K - 1]
    if wrap_gap >= 1.0 or abs(d) <= wrap_gap:
        return val0
    # minimise phi(lam) = wrap_gap |lam| + Chain(sig_0 + lam, sig_{K-1} - lam)
    lam_max = scale / wrap_gap + 1.0
    sig_l = sig_c.copy()

    def_tol = 1e-14 * (scale + 1.0)
    if d > wrap_gap:
        hi, phi_hi, s_hi = 0.0, val0, d - wrap_gap
        lo = -lam_max
        sig_l[0] = sig_c[0] + lo
        sig_l[K - 1] = sig_c[K - 1] - lo
        phi_lo = wrap_gap * lam_max + _chain_max(sig_l, gaps, f, m_store, seg_len, seg_slope, tmp_len, tmp_slope)
        s_lo = -wrap_gap + f[0] - f[K - 1]
    else:
        lo, phi_lo, s_lo = 0.0, val0, d + wrap_gap
        hi = lam_max
        sig_l[0] = sig_c[0] + hi
        sig_l[K - 1] = sig_c[K - 1] - hi
        phi_hi = wrap_gap * lam_max + _chain_max(sig_l, gaps, f, m_store, seg_len, seg_slope, tmp_len, tmp_slope)
        s_hi = wrap_gap + f[0] - f[K - 1]
    best = min(phi_lo, phi_hi)
    if s_lo >= 0.0:
        return phi_lo
    if s_hi <= 0.0:
        return phi_hi
    for _ in range(200):
        # the two bracket lines meet at lam_sec; their value there bounds min phi from below
        lam_sec = (phi_hi - phi_lo + s_lo * lo - s_hi * hi) / (s_lo - s_hi)
        lam_sec = min(max(lam_sec, lo), hi)
        lower = phi_lo + s_lo * (lam_sec - lo)
        if best - lower <= def_tol:
            return best
        lam = lam_sec if lo < lam_sec < hi else 0.5 * (lo + hi)
        sig_l[0] = sig_c[0] + lam
        sig_l[K - 1] = sig_c[K - 1] - lam
        val = wrap_gap * abs(lam) + _chain_max(sig_l, gaps, f, m_store, seg_len, seg_slope, tmp_len, tmp_slope)
        best = min(best, val)
        sg = (wrap_gap if lam > 0 else -wrap_gap) + f[0] - f[K - 1]
        if sg > 0.0:
            hi, phi_hi, s_hi = lam, val, sg
        elif sg < 0.0:
            lo, phi_lo, s_lo = lam, val, sg
        else:
            return best
        if hi - lo <= 1e-15 * lam_max:
            break
    return best


@numba.njit(cache=True)
def _d_bl_pair(pa, wa, pb, wb):
    K = pa.shape[0] + pb.shape[0]
    pos = np.empty(K)
    sig = np.empty(K)
    na = pa.shape[0]
    tot = 0.0
    for i in range(na):
        pos[i] = pa[i]
        sig[i] = wa[i]
        tot += wa[i]
    for i in range(pb.shape[0]):
        pos[na + i] = pb[i]
        sig[na + i] = -wb[i]
        tot -= wb[i]
    return _bl_positive_part(pos, sig) + max(0.0, -tot)


@numba.njit(cache=True)
def _d_bl_rows(pa, wa, pb, wb):
    out = np.empty(pa.shape[0])
    for r in range(pa.shape[0]):
        out[r] = _d_bl_pair(pa[r], wa[r], pb[r], wb[r])
    return out


def _as_arrays(mu):
    if isinstance(mu, PhaseMeasure):
        return mu.positions, mu.weights
    pos, w = mu
    return wrap(np.atleast_1d(np.asarray(pos, dtype=float)), TWO_PI), np.atleast_1d(np.asarray(w, dtype=float))


def d_bl(mu, nu, method: str = "dp") -> float:
    """Bounded-Lipschitz distance between two particle measures on the phase circle.

    Parameters
    ----------
    mu, nu : PhaseMeasure or (positions, weights)
    method : {"dp", "lp"}
        ``"dp"`` is the exact dynamic program, ``"lp"`` the HiGHS linear program.
    """
    pa, wa = _as_arrays(mu)
    pb, wb = _as_arrays(nu)
    if method == "lp":
        return d_bl_lp((pa, wa), (pb, wb))
    if method != "dp":
        raise ValueError(f"unknown d_BL method {method!r}")
    return float(_d_bl_pair(pa, wa, pb, wb))


def d_bl_rows(pos_a, w_a, pos_b, w_b) -> np.ndarray:
    """Row-wise d_BL between ``(R, P)`` particle arrays; weights broadcast."""
    pos_a = np.ascontiguousarray(wrap(np.asarray(pos_a, dtype=float), TWO_PI))
    pos_b = np.ascontiguousarray(wrap(np.asarray(pos_b, dtype=float), TWO_PI))
    w_a = np.ascontiguousarray(np.broadcast_to(np.asarray(w_a, dtype=float), pos_a.shape))
    w_b = np.ascontiguousarray(np.broadcast_to(np.asarray(w_b, dtype=float), pos_b.shape))
    if pos_a.shape[0] != pos_b.shape[0]:
        raise ValueError("row counts differ")
    return _d_bl_rows(pos_a, w_a, pos_b, w_b)


def d_bl_lp(mu, nu, all_pairs: bool | None = None) -> float:
    """d_BL as two linear programs over the union of supports (HiGHS)."""
    pa, wa = _as_arrays(mu)
    pb, wb = _as_arrays(nu)
    pos = np.concatenate([pa, pb])
    sig = np.concatenate([wa, -wb])
    K = pos.size
    if K == 0:
        return 0.0
    if K == 1:
        return abs(float(sig[0]))
    if all_pairs is None:
        all_pairs = K <= 64
    if all_pairs:
        i, j = np.triu_indices(K, 1)
    else:
        order = np.argsort(pos)
        i, j = order, np.roll(order, -1)
    dist = np.abs(pos[i] - pos[j])
    dist = np.minimum(dist, TWO_PI - dist)
    m = i.size
    # rows 0..m-1: f_i - f_j <= dist, rows m..2m-1: f_j - f_i <= dist
    r = np.arange(m)
    rows = np.concatenate([r, r, r + m, r + m])
    cols = np.concatenate([i, j, i, j])
    vals = np.concatenate([np.ones(m), -np.ones(m), -np.ones(m), np.ones(m)])
    A = coo_matrix((vals, (rows, cols)), shape=(2 * m, K)).tocsr()
    rhs = np.concatenate([dist, dist])
    best = 0.0
    for sign in (1.0, -1.0):
        res = linprog(-sign * sig, A_ub=A, b_ub=rhs, bounds=(0.0, 1.0), method="highs")
        if res.status != 0:
            raise RuntimeError(f"d_BL linear program failed: {res.message}")
        best = max(best, -res.fun)
    return float(best)


# ---------------------------------------------------------------------------
# families


def _fiber_dists(mu: MeasureFamily, ka: MeasureFamily) -> np.ndarray:
    if mu.grid.resolution != ka.grid.resolution:
        raise ValueError(
            f"families live on different grids ({mu.grid.resolution} vs {ka.grid.resolution} cells)"
        )
    return np.array([
        _d_bl_pair(pa, wa, pb, wb) for pa, wa, pb, wb in zip(mu.positions, mu.weights, ka.positions, ka.weights)
    ])


def fiber_distances(mu: MeasureFamily, ka: MeasureFamily) -> np.ndarray:
    """Per-cell ``d_BL(μ^y, κ^y)``."""
    return _fiber_dists(mu, ka)


def _common_grid(mu: MeasureFamily, ka: MeasureFamily):
    n, m = mu.grid.resolution, ka.grid.resolution
    if n == m:
        return mu, ka
    if max(n, m) % min(n, m):
        raise ValueError(f"grids with {n} and {m} cells are not nested")
    r = max(n, m)
    return (mu.refine(r) if n < r else mu), (ka.refine(r) if m < r else ka)


def extended_apply(A: Graphop, mu: MeasureFamily) -> MeasureFamily:
    """``(𝒜μ)^x = ∫ μ^y dν_x(y)``: each output fiber is the cell-matrix-weighted union of input fibers."""
    n = mu.grid.resolution
    P = A.cell_matrix(n)
    pos_out, w_out = [], []
    for x in range(n):
        row = P[x]
        nz = np.nonzero(row > 0)[0]
        pos_out.append(np.concatenate([mu.positions[j] for j in nz]) if nz.size else np.zeros(0))
        w_out.append(np.concatenate([row[j] * mu.weights[j] for j in nz]) if nz.size else np.zeros(0))
    gamma = float(np.max(P.sum(axis=1)))
    return MeasureFamily(mu.grid, pos_out, w_out, mu.b * max(gamma, 1.0), mu.time)


def d_fiber(A: Graphop, mu: MeasureFamily, ka: MeasureFamily, x: int | None = None):
    """``d̄^{b,A,x} = ∫ d_BL(μ^y, κ^y) dν_x(y)`` for cell ``x`` (all cells if ``x`` is None)."""
    d = _fiber_dists(mu, ka)
    out = A.cell_matrix(mu.grid.resolution) @ d
    return out if x is None else float(out[x])


def d_bA(A: Graphop, mu: MeasureFamily, ka: MeasureFamily) -> float:
    """``d̄^{b,A}``: the largest fiber distance over cells."""
    return float(np.max(d_fiber(A, mu, ka)))


def d_bm(mu: MeasureFamily, ka: MeasureFamily) -> float:
    """``d̄^{b,m} = ∫ d_BL(μ^y, κ^y) dm(y)``; nested grids are refined to the finer one."""
    mu, ka = _common_grid(mu, ka)
    return float(np.mean(_fiber_dists(mu, ka)))


def d_alpha(traj_mu, traj_ka, A: Graphop, alpha: float) -> float:
    """``max_t e^{-αt} d̄^{b,A}(μ_t, κ_t)`` over the stored stamps of two trajectories."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if len(traj_mu) != len(traj_ka):
        raise ValueError("trajectories have different numbers of stamps")
    t_mu = np.array([m.time for m in traj_mu])
    t_ka = np.array([k.time for k in traj_ka])
    if not np.allclose(t_mu, t_ka, rtol=0, atol=1e-12):
        raise ValueError("trajectories have mismatched time stamps")
    gaps = np.array([d_bA(A, m, k) for m, k in zip(traj_mu, traj_ka)])
    return weighted_sup(t_mu, gaps, alpha)


def weighted_sup(times, gaps, alpha: float) -> float:
    times = np.asarray(times, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    if gaps.size == 0:
        return 0.0
    return float(np.max(np.exp(-alpha * times) * gaps))


def adjacent_modulus(mu: MeasureFamily) -> np.ndarray:
    """``d_BL(μ^i, μ^{i+1})`` for neighbouring cells (periodic)."""
    n = mu.grid.resolution
    nxt = [(i + 1) % n for i in range(n)]
    return np.array([
        _d_bl_pair(mu.positions[i], mu.weights[i], mu.positions[j], mu.weights[j]) for i, j in enumerate(nxt)
    ])
