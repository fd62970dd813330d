"""The circle group: node space [0, 1) with Haar measure and the phase circle [0, 2*pi)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

NODE_PERIOD = 1.0
PHASE_PERIOD = 2.0 * math.pi


@dataclass(frozen=True)
class TorusPoint:
    """A point on a circle of the given period, stored reduced into [0, period)."""

    value: float
    period: float = NODE_PERIOD

    def __post_init__(self):
        object.__setattr__(self, "value", float(wrap(self.value, self.period)))

    @property
    def is_phase(self) -> bool:
        return math.isclose(self.period, PHASE_PERIOD)


def wrap(x, period=NODE_PERIOD):
    """Reduce ``x`` (scalar or array) into ``[0, period)``."""
    if period <= 0:
        raise ValueError(f"period must be positive, got {period}")
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("wrap() got a non-finite value")
    out = np.mod(arr, period)
    # np.mod can return `period` itself for tiny negative inputs
    out = np.where(out >= period, 0.0, out)
    if out.ndim == 0:
        return float(out)
    return out


def circle_dist(a, b, period=NODE_PERIOD):
    """Length of the shorter arc between ``a`` and ``b``.

    Accepts floats, arrays or :class:`TorusPoint`; points must live on the
    same circle.
    """
    if isinstance(a, TorusPoint) or isinstance(b, TorusPoint):
        pa = a.period if isinstance(a, TorusPoint) else period
        pb = b.period if isinstance(b, TorusPoint) else period
        if not math.isclose(pa, pb):
            raise ValueError(f"points live on circles of different period ({pa} vs {pb})")
        period = pa
        a = a.value if isinstance(a, TorusPoint) else a
        b = b.value if isinstance(b, TorusPoint) else b
    d = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), period)
    d = np.minimum(d, period - d)
    if d.ndim == 0:
        return float(d)
    return d


@dataclass(frozen=True)
class TorusGrid:
    """Uniform partition of [0, 1) into half-open cells [i/n, (i+1)/n).

    Cells are 0-indexed here; cell ``i`` is the 1-indexed cell ``i + 1``.
    Grid functions are sampled at cell midpoints.
    """

    resolution: int

    def __post_init__(self):
        if int(self.resolution) != self.resolution or self.resolution < 1:
            raise ValueError(f"grid resolution must be a positive integer, got {self.resolution}")
        object.__setattr__(self, "resolution", int(self.resolution))

    @property
    def cell_measure(self) -> float:
        return 1.0 / self.resolution

    @cached_property
    def edges(self) -> np.ndarray:
        return np.arange(self.resolution + 1) / self.resolution

    @cached_property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.resolution) + 0.5) / self.resolution

    def cell_of(self, x):
        """Index of the cell containing ``x`` (after wrapping)."""
        idx = np.floor(wrap(x) * self.resolution).astype(int)
        return np.minimum(idx, self.resolution - 1)

    def sample(self, f) -> np.ndarray:
        """Grid function of ``f``: either a callable or an array already on this grid."""
        if callable(f):
            return np.asarray(f(self.midpoints), dtype=float) * np.ones(self.resolution)
        arr = np.asarray(f, dtype=float)
        if arr.shape != (self.resolution,):
            raise ValueError(
                f"grid function has shape {arr.shape}, expected ({self.resolution},)"
            )
        return arr

    def integrate(self, values) -> float:
        return float(np.sum(values) / self.resolution)


def nested_partition(n: int, M: int):
    """Coarse grid with ``n`` cells, fine grid with ``n*M`` cells and the fine-to-coarse map.

    ``parent_map[k]`` is the coarse cell containing fine cell ``k`` (0-indexed),
    i.e. fine cell ``(i-1)M + k`` lies in coarse cell ``i`` in 1-indexed terms.
    """
    if n < 1 or M < 1:
        raise ValueError(f"partition sizes must be positive, got n={n}, M={M}")
    coarse = TorusGrid(n)
    fine = TorusGrid(n * M)
    parent_map = np.arange(n * M) // M
    return coarse, fine, parent_map


def overlap_matrix(fine: int, coarse: int) -> np.ndarray:
    """``O[k, j] = m(cell_k of the fine grid  ∩  cell_j of the coarse grid)``.

    Works for incommensurate resolutions; both partitions start at 0 so no
    wraparound is involved.
    """
    a = np.arange(fine + 1) / fine
    b = np.arange(coarse + 1) / coarse
    lo = np.maximum(a[:-1, None], b[None, :-1])
    hi = np.minimum(a[1:, None], b[None, 1:])
    return np.clip(hi - lo, 0.0, None)


def arc_overlap(a0, a1, b0, b1, period=NODE_PERIOD):
    """Measure of the intersection of arcs [a0, a1) and [b0, b1) on the circle.

    Arcs are given by start and end with ``end - start`` in ``[0, period]``;
    inputs broadcast.
    """
    a0 = np.asarray(a0, dtype=float)
    a1 = np.asarray(a1, dtype=float)
    b0 = np.asarray(b0, dtype=float)
    b1 = np.asarray(b1, dtype=float)
    # move arc b next to arc a, then sum over neighbouring periodic images
    shift = np.floor((b0 - a0) / period) * period
    b0 = b0 - shift
    b1 = b1 - shift
    total = np.zeros(np.broadcast(a0, a1, b0, b1).shape)
    for m in (-2, -1, 0, 1):
        lo = np.maximum(a0, b0 + m * period)
        hi = np.minimum(a1, b1 + m * period)
        total = total + np.clip(hi - lo, 0.0, None)
    return total
