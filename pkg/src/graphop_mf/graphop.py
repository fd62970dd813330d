"""Graphops on the circle group, represented through their fiber measures.

Every variant knows its fiber measures exactly and can produce

* ``apply(f, grid)``: the function ``x -> ∫ f dν_x`` at the grid midpoints,
* ``cell_matrix(n)``: ``P[i, j] = n * ν(cell_i × cell_j)``, the cell-averaged
  fiber of cell ``i`` restricted to cell ``j``. ``P`` is symmetric because ν is,
  and it is the operator the solver uses on piecewise-constant measure families.
* ``smooth_columns(kernel, grid)``: ``B[a, j] = ∫ k(z_j - ẑ) dν_{y_a}(ẑ)``, the
  inner integral of the summability regularization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .torus import TorusGrid, arc_overlap, overlap_matrix, wrap

log = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 256
SYMMETRY_WARN_TOL = 1e-9
CACHE_MAX_CELLS = 1024


@dataclass
class FiberMeasure:
    """A finite measure on the node circle: point masses plus a cell density."""

    atom_locations: np.ndarray = field(default_factory=lambda: np.zeros(0))
    atom_weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    density: np.ndarray | None = None
    grid: TorusGrid | None = None

    def __post_init__(self):
        self.atom_locations = wrap(np.atleast_1d(np.asarray(self.atom_locations, dtype=float)))
        self.atom_weights = np.atleast_1d(np.asarray(self.atom_weights, dtype=float))
        if self.atom_locations.shape != self.atom_weights.shape:
            raise ValueError("atom locations and weights differ in length")
        if np.any(self.atom_weights < 0):
            raise ValueError("fiber measure has a negative atom weight")
        if self.density is not None:
            self.density = np.asarray(self.density, dtype=float)
            if self.grid is None or self.density.shape != (self.grid.resolution,):
                raise ValueError("density part needs a matching grid")
            if np.any(self.density < 0):
                raise ValueError("fiber measure has a negative density value")

    @property
    def total_mass(self) -> float:
        mass = float(np.sum(self.atom_weights))
        if self.density is not None:
            mass += float(np.sum(self.density) * self.grid.cell_measure)
        return mass

    def integrate(self, f) -> float:
        val = float(np.dot(self.atom_weights, f(self.atom_locations))) if self.atom_weights.size else 0.0
        if self.density is not None:
            val += float(np.dot(self.density, f(self.grid.midpoints)) * self.grid.cell_measure)
        return val


def _ramp2(s):
    s = np.maximum(s, 0.0)
    return 0.5 * s * s


def _pair_band_mass(a0, a1, b0, b1, lo, hi):
    """m⊗m of {(x, y): x in [a0,a1), y in [b0,b1), y - x in [lo, hi) mod 1}.

    ``|A ∩ (B - d)|`` is a sum of four ramps in ``d``; its integral over the
    periodic images of [lo, hi) is a sum of squared ramps.
    """
    knots = ((b0 - a1, 1.0), (b0 - a0, -1.0), (b1 - a1, -1.0), (b1 - a0, 1.0))
    total = 0.0
    for m in (-2, -1, 0, 1, 2):
        for knot, sign in knots:
            total = total + sign * (_ramp2(hi + m - knot) - _ramp2(lo + m - knot))
    return total


def _as_callable_or_grid(f, grid: TorusGrid):
    if callable(f):
        return f, None
    return None, grid.sample(f)


def _periodic_interp(values: np.ndarray, grid: TorusGrid, x):
    """Evaluate a midpoint-sampled grid function at arbitrary points by periodic linear interpolation."""
    n = grid.resolution
    pos = wrap(np.asarray(x, dtype=float)) * n - 0.5
    lo = np.floor(pos)
    frac = pos - lo
    lo = lo.astype(int) % n
    hi = (lo + 1) % n
    return (1.0 - frac) * values[lo] + frac * values[hi]


class Graphop:
    """Base class; concrete variants fill in the fiber-level primitives."""

    name = "graphop"

    def __init__(self):
        self._cache: dict = {}

    # -- primitives provided by variants ---------------------------------
    def fiber(self, x: float, grid: TorusGrid | None = None) -> FiberMeasure:
        raise NotImplementedError

    def apply(self, f, grid: TorusGrid) -> np.ndarray:
        raise NotImplementedError

    def _cell_matrix(self, n: int) -> np.ndarray:
        raise NotImplementedError

    def smooth_columns(self, kernel, grid: TorusGrid) -> np.ndarray:
        raise NotImplementedError

    def degree(self, grid: TorusGrid | None = None) -> np.ndarray:
        grid = grid or self.default_grid()
        return self.apply(lambda y: np.ones_like(y), grid)

    def to_spec(self) -> dict:
        raise NotImplementedError

    # -- derived quantities ----------------------------------------------
    def default_grid(self) -> TorusGrid:
        return TorusGrid(DEFAULT_RESOLUTION)

    def cell_matrix(self, n: int) -> np.ndarray:
        key = ("cell_matrix", int(n))
        if key in self._cache:
            return self._cache[key]
        P = np.asarray(self._cell_matrix(int(n)), dtype=float)
        P = 0.5 * (P + P.T)
        P.setflags(write=False)
        # large matrices (oscillator weights) are not worth keeping around
        if n <= CACHE_MAX_CELLS:
            self._cache[key] = P
        return P

    def gamma(self, grid: TorusGrid | None = None) -> float:
        """Maximal degree ``γ_A = sup_x ν_x(Ω)`` over the grid."""
        return float(np.max(self.degree(grid)))

    def __mul__(self, c: float) -> "Mixture":
        return Mixture([(float(c), self)])

    __rmul__ = __mul__

    def __add__(self, other: "Graphop") -> "Mixture":
        return Mixture([(1.0, self), (1.0, other)])


class GraphonKernel(Graphop):
    """Graphop with a symmetric nonnegative kernel stored at the midpoints of a grid.

    The kernel is treated as piecewise constant on grid cells.
    """

    name = "graphon"

    def __init__(self, W, grid: TorusGrid | int | None = None):
        super().__init__()
        if callable(W):
            grid = grid if isinstance(grid, TorusGrid) else TorusGrid(grid or DEFAULT_RESOLUTION)
            x = grid.midpoints
            W = np.asarray(W(x[:, None], x[None, :]), dtype=float) * np.ones((x.size, x.size))
        W = np.array(W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError(f"graphon kernel must be a square matrix, got shape {W.shape}")
        if grid is None:
            grid = TorusGrid(W.shape[0])
        elif not isinstance(grid, TorusGrid):
            grid = TorusGrid(grid)
        if grid.resolution != W.shape[0]:
            raise ValueError("graphon kernel does not match its grid")
        if np.any(W < 0):
            raise ValueError("graphon kernel has negative entries")
        asym = float(np.max(np.abs(W - W.T))) if W.size else 0.0
        if asym > SYMMETRY_WARN_TOL:
            log.warning("graphon kernel asymmetric by %.3g; symmetrizing", asym)
        W = 0.5 * (W + W.T)
        W.setflags(write=False)
        self.W = W
        self.grid = grid

    @classmethod
    def constant(cls, value: float = 1.0, resolution: int = 16) -> "GraphonKernel":
        return cls(np.full((resolution, resolution), float(value)))

    def default_grid(self) -> TorusGrid:
        return self.grid

    def _check_grid(self, grid: TorusGrid):
        if grid.resolution != self.grid.resolution:
            raise ValueError(
                f"grid mismatch: graphon lives on {self.grid.resolution} cells, "
                f"evaluation grid has {grid.resolution}"
            )

    def fiber(self, x, grid=None):
        row = self.W[self.grid.cell_of(x)]
        return FiberMeasure(density=row, grid=self.grid)

    def apply(self, f, grid):
        # callables may be evaluated on any grid; arrays must live on the kernel grid
        if callable(f) and grid.resolution != self.grid.resolution:
            own = self.W @ self.grid.sample(f) / self.grid.resolution
            return own[self.grid.cell_of(grid.midpoints)]
        self._check_grid(grid)
        return self.W @ grid.sample(f) / grid.resolution

    def degree(self, grid=None):
        deg = self.W.sum(axis=1) / self.grid.resolution
        if grid is None or grid.resolution == self.grid.resolution:
            return deg
        return deg[self.grid.cell_of(grid.midpoints)]

    def _cell_matrix(self, n):
        O = overlap_matrix(self.grid.resolution, n)
        return n * (O.T @ self.W @ O)

    def smooth_columns(self, kernel, grid):
        # B[a, j] = sum_l W(cell(y_a), l) * ∫_{cell l} k(z_j - ẑ) dẑ, exact for piecewise-constant W
        edges = self.grid.edges
        z = grid.midpoints
        Kc = kernel.antiderivative(z[:, None] - edges[None, :-1]) - kernel.antiderivative(
            z[:, None] - edges[None, 1:]
        )
        rows = self.W[self.grid.cell_of(grid.midpoints)]
        return rows @ Kc.T

    def to_spec(self):
        if np.allclose(self.W, self.W.flat[0]):
            return {"variant": "graphon", "kernel": "constant", "value": float(self.W.flat[0])}
        return {"variant": "graphon", "kernel": "matrix", "resolution": self.grid.resolution}


class AtomicShift(Graphop):
    """``ν_x = ½ δ_{x+r} + ½ δ_{x-r}``: the Markov graphop of the shift by ``r``."""

    name = "atomic_shift"

    def __init__(self, r: float, weight: float = 0.5):
        super().__init__()
        self.r = float(wrap(r))
        self.weight = float(weight)
        if self.weight < 0:
            raise ValueError("atomic weight must be nonnegative")

    def fiber(self, x, grid=None):
        return FiberMeasure([x + self.r, x - self.r], [self.weight, self.weight])

    def apply(self, f, grid):
        fc, fv = _as_callable_or_grid(f, grid)
        x = grid.midpoints
        if fc is not None:
            fp = np.asarray(fc(wrap(x + self.r)), dtype=float)
            fm = np.asarray(fc(wrap(x - self.r)), dtype=float)
            return self.weight * (fp + fm) * np.ones_like(x)
        shift = self.r * grid.resolution
        k = int(round(shift))
        if abs(shift - k) < 1e-9:
            return self.weight * (np.roll(fv, -k) + np.roll(fv, k))
        return self.weight * (_periodic_interp(fv, grid, x + self.r) + _periodic_interp(fv, grid, x - self.r))

    def degree(self, grid=None):
        grid = grid or self.default_grid()
        return np.full(grid.resolution, 2.0 * self.weight)

    def _cell_matrix(self, n):
        e = np.arange(n + 1) / n
        a0, a1 = e[:-1, None], e[1:, None]
        b0, b1 = e[None, :-1], e[None, 1:]
        plus = arc_overlap(a0, a1, b0 - self.r, b1 - self.r)
        minus = arc_overlap(a0, a1, b0 + self.r, b1 + self.r)
        return n * self.weight * (plus + minus)

    def smooth_columns(self, kernel, grid):
        y = grid.midpoints
        d = grid.midpoints[None, :] - y[:, None]
        return self.weight * (kernel(d - self.r) + kernel(d + self.r))

    def to_spec(self):
        spec = {"variant": "atomic_shift", "r": self.r}
        if self.weight != 0.5:
            spec["weight"] = self.weight
        return spec


class ArcBand(Graphop):
    """Density ``(height/2)·[1(|y-x-r| < ε) + 1(|y-x+r| < ε)]`` in circle distance.

    With ``r = 0`` this is the band graphon ``height·1(|y-x| < ε)``. The degree
    is ``2·ε·height`` at every node.
    """

    name = "arc_band"

    def __init__(self, r: float, halfwidth: float, height: float):
        super().__init__()
        if not 0 < halfwidth <= 0.5:
            raise ValueError(f"halfwidth must lie in (0, 0.5], got {halfwidth}")
        if height < 0:
            raise ValueError("height must be nonnegative")
        self.r = float(wrap(r))
        self.eps = float(halfwidth)
        self.height = float(height)

    def _arcs(self, x):
        x = np.asarray(x, dtype=float)
        return ((x + self.r - self.eps, x + self.r + self.eps), (x - self.r - self.eps, x - self.r + self.eps))

    def fiber(self, x, grid=None):
        grid = grid or self.default_grid()
        e = grid.edges
        mass = np.zeros(grid.resolution)
        for lo, hi in self._arcs(x):
            mass += arc_overlap(e[:-1], e[1:], lo, hi)
        return FiberMeasure(density=0.5 * self.height * mass * grid.resolution, grid=grid)

    def _cell_weights(self, grid):
        # M[i, k] = ∫_{cell k} w(y - x_i) dy
        e = grid.edges
        M = np.zeros((grid.resolution, grid.resolution))
        for lo, hi in self._arcs(grid.midpoints):
            M += arc_overlap(e[None, :-1], e[None, 1:], lo[:, None], hi[:, None])
        return 0.5 * self.height * M

    def apply(self, f, grid):
        return self._cell_weights(grid) @ grid.sample(f)

    def degree(self, grid=None):
        grid = grid or self.default_grid()
        return np.full(grid.resolution, 2.0 * self.eps * self.height)

    def _cell_matrix(self, n):
        e = np.arange(n + 1) / n
        a0, a1 = e[:-1, None], e[1:, None]
        b0, b1 = e[None, :-1], e[None, 1:]
        mass = _pair_band_mass(a0, a1, b0, b1, self.r - self.eps, self.r + self.eps)
        mass = mass + _pair_band_mass(a0, a1, b0, b1, -self.r - self.eps, -self.r + self.eps)
        # the ramp sums cancel to ~1e-14 on cell pairs outside the band
        mass[np.abs(mass) < 1e-12] = 0.0
        return n * 0.5 * self.height * mass

    def smooth_columns(self, kernel, grid):
        y = grid.midpoints
        z = grid.midpoints
        B = np.zeros((y.size, z.size))
        for lo, hi in self._arcs(y):
            B += kernel.antiderivative(z[None, :] - lo[:, None]) - kernel.antiderivative(z[None, :] - hi[:, None])
        return 0.5 * self.height * B

    def to_spec(self):
        return {"variant": "arc_band", "r": self.r, "halfwidth": self.eps, "height": self.height}


class Mixture(Graphop):
    """Nonnegative combination ``Σ c_k A_k`` of graphops."""

    name = "mixture"

    def __init__(self, components):
        super().__init__()
        comps = [(float(c), A) for c, A in components]
        if not comps:
            raise ValueError("mixture needs at least one component")
        if any(c < 0 for c, _ in comps):
            raise ValueError("mixture coefficients must be nonnegative")
        self.components = comps

    def default_grid(self):
        for _, A in self.components:
            if isinstance(A, GraphonKernel):
                return A.grid
        return TorusGrid(DEFAULT_RESOLUTION)

    def fiber(self, x, grid=None):
        grid = grid or self.default_grid()
        locs, wts, dens = [], [], np.zeros(grid.resolution)
        has_density = False
        for c, A in self.components:
            fm = A.fiber(x, grid)
            locs.append(fm.atom_locations)
            wts.append(c * fm.atom_weights)
            if fm.density is not None:
                has_density = True
                if fm.grid.resolution == grid.resolution:
                    dens += c * fm.density
                else:
                    O = overlap_matrix(fm.grid.resolution, grid.resolution)
                    dens += c * (fm.density @ O) * grid.resolution
        return FiberMeasure(
            np.concatenate(locs), np.concatenate(wts), dens if has_density else None, grid if has_density else None
        )

    def apply(self, f, grid):
        return sum(c * A.apply(f, grid) for c, A in self.components)

    def degree(self, grid=None):
        grid = grid or self.default_grid()
        return sum(c * A.degree(grid) for c, A in self.components)

    def _cell_matrix(self, n):
        return sum(c * A.cell_matrix(n) for c, A in self.components)

    def smooth_columns(self, kernel, grid):
        return sum(c * A.smooth_columns(kernel, grid) for c, A in self.components)

    def to_spec(self):
        return {
            "variant": "mixture",
            "components": [{"coefficient": c, "graphop": A.to_spec()} for c, A in self.components],
        }


def from_spec(spec: dict) -> Graphop:
    """Build a graphop from a config dictionary such as ``{"variant": "atomic_shift", "r": 0.25}``."""
    spec = dict(spec)
    variant = spec.pop("variant", None)
    if variant == "atomic_shift":
        return AtomicShift(spec["r"], spec.get("weight", 0.5))
    if variant == "arc_band":
        return ArcBand(spec.get("r", 0.0), spec["halfwidth"], spec["height"])
    if variant == "band":
        # W(x, y) = height * 1[|x - y| < halfwidth]
        return ArcBand(0.0, spec.get("halfwidth", 0.1), spec.get("height", 5.0))
    if variant == "graphon":
        kind = spec.get("kernel", "constant")
        res = int(spec.get("resolution", 16))
        if kind == "constant":
            return GraphonKernel.constant(spec.get("value", 1.0), res)
        if kind == "cosine":
            amp = float(spec.get("amplitude", 0.5))
            return GraphonKernel(lambda x, y: 1.0 + amp * np.cos(2 * np.pi * (x - y)), res)
        if kind == "matrix":
            return GraphonKernel(np.asarray(spec["W"], dtype=float))
        raise ValueError(f"unknown graphon kernel {kind!r}")
    if variant == "mixture":
        return Mixture([(c["coefficient"], from_spec(c["graphop"])) for c in spec["components"]])
    raise ValueError(f"unknown graphop variant {variant!r}")


def apply(A: Graphop, f, grid: TorusGrid) -> np.ndarray:
    """``(Af)(x) = ∫ f dν_x`` at the midpoints of ``grid``."""
    return A.apply(f, grid)


def degree(A: Graphop, grid: TorusGrid | None = None) -> np.ndarray:
    return A.degree(grid)


def check_c_regular(A: Graphop, tol: float = 1e-9, grid: TorusGrid | None = None):
    """Return the constant degree ``c`` if ``A`` is c-regular within ``tol``, else ``None``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    deg = A.degree(grid)
    c = float(np.mean(deg))
    if float(np.max(np.abs(deg - c))) <= tol:
        return c
    return None


def norm_1_to_1(A: Graphop, grid: TorusGrid | None = None, tol: float = 1e-9) -> float:
    """``‖A‖_{1→1}``: exactly ``c`` for c-regular graphops.

    Otherwise the largest ``‖A g‖_1`` over normalized cell indicators ``g``,
    which is the largest column sum of the cell matrix.
    """
    c = check_c_regular(A, tol, grid)
    if c is not None:
        return c
    n = (grid or A.default_grid()).resolution
    return float(np.max(A.cell_matrix(n).sum(axis=0)))
