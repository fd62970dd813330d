"""Summability kernels on the node circle, convolution, and graphon regularization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphop import GraphonKernel, Graphop
from .torus import TorusGrid

# gaussian Fourier coefficients below this are dropped
_COEF_CUTOFF = 1e-18


@dataclass(frozen=True)
class SummabilityKernel:
    """Positive symmetric unit-mass kernel ``k_n`` on [0, 1).

    Parameters
    ----------
    family : {"fejer", "wrapped_gaussian"}
    n : int
        Kernel index. For the Fejér family this is the bandwidth; the wrapped
        Gaussian uses standard deviation ``1 / (2π sqrt(n + 1))`` so that its
        first Fourier coefficient behaves like the Fejér one for large n.
    """

    family: str
    n: int

    def __post_init__(self):
        if self.family not in ("fejer", "wrapped_gaussian"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if int(self.n) != self.n or self.n < 0:
            raise ValueError(f"kernel index must be a nonnegative integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def sigma(self) -> float:
        return 1.0 / (2.0 * np.pi * np.sqrt(self.n + 1.0))

    @property
    def bandwidth(self) -> int:
        """Largest frequency with a non-negligible coefficient."""
        if self.family == "fejer":
            return self.n
        # exp(-2 pi^2 sigma^2 j^2) = exp(-j^2 / (2(n+1)))
        return int(np.ceil(np.sqrt(-2.0 * (self.n + 1) * np.log(_COEF_CUTOFF))))

    def coefficients(self, j=None) -> np.ndarray:
        """Fourier coefficients ``ĉ_j`` for ``j = 0..bandwidth`` (or the given j)."""
        j = np.arange(self.bandwidth + 1) if j is None else np.abs(np.asarray(j, dtype=float))
        if self.family == "fejer":
            return np.clip(1.0 - j / (self.n + 1.0), 0.0, None)
        return np.exp(-0.5 * j**2 / (self.n + 1.0))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family == "fejer":
            s = np.sin(np.pi * x)
            small = np.abs(s) < 1e-12
            safe = np.where(small, 1.0, s)
            val = np.sin((self.n + 1) * np.pi * x) ** 2 / ((self.n + 1) * safe**2)
            return np.where(small, self.n + 1.0, val)
        c = self.coefficients()
        j = np.arange(1, c.size)
        out = 1.0 + 2.0 * np.cos(2 * np.pi * x[..., None] * j) @ c[1:]
        return np.clip(out, 0.0, None)

    def antiderivative(self, s) -> np.ndarray:
        """``∫_0^s k(t) dt`` on the real line (not reduced mod 1)."""
        s = np.asarray(s, dtype=float)
        c = self.coefficients()
        j = np.arange(1, c.size)
        if j.size == 0:
            return s.copy()
        return s + np.sin(2 * np.pi * s[..., None] * j) @ (c[1:] / (np.pi * j))

    def tail_mass(self, delta: float, resolution: int = 4096) -> float:
        """``∫_{dist(x,0) > δ} k dm``, the concentration diagnostic."""
        if not 0 <= delta < 0.5:
            raise ValueError("delta must lie in [0, 0.5)")
        inner = self.antiderivative(delta) - self.antiderivative(-delta)
        return float(max(1.0 - inner, 0.0))

    def min_resolution(self) -> int:
        return 8 * (min(self.n, self.bandwidth) + 1)

    def to_spec(self) -> dict:
        return {"family": self.family, "n": self.n}


def fejer(n: int) -> SummabilityKernel:
    """Fejér kernel ``(1/(n+1)) (sin((n+1)πx) / sin(πx))²``."""
    return SummabilityKernel("fejer", n)


def wrapped_gaussian(n: int) -> SummabilityKernel:
    return SummabilityKernel("wrapped_gaussian", n)


def kernel_from_spec(family: str, n: int) -> SummabilityKernel:
    aliases = {"fejer": "fejer", "gauss": "wrapped_gaussian", "gaussian": "wrapped_gaussian",
               "wrapped_gaussian": "wrapped_gaussian"}
    if family not in aliases:
        raise ValueError(f"unknown kernel family {family!r}")
    return SummabilityKernel(aliases[family], n)


def _check_resolution(k: SummabilityKernel, resolution: int):
    need = k.min_resolution()
    if resolution < need:
        raise ValueError(
            f"grid with {resolution} cells under-resolves {k.family} kernel n={k.n}; "
            f"use at least {need} cells"
        )


def convolve(k: SummabilityKernel, f, grid: TorusGrid | int | None = None) -> np.ndarray:
    """``(K_n f)(x) = ∫ k_n(x - y) f(y) dy`` at grid midpoints.

    Midpoint quadrature, evaluated as a circular convolution by FFT. For a
    trigonometric polynomial f below the grid's Nyquist limit the result is
    exact up to rounding.
    """
    if grid is None:
        if callable(f):
            raise ValueError("convolve needs a grid when f is a callable")
        grid = TorusGrid(np.asarray(f).shape[0])
    elif not isinstance(grid, TorusGrid):
        grid = TorusGrid(grid)
    _check_resolution(k, grid.resolution)
    fv = grid.sample(f)
    g = grid.resolution
    kv = k(np.arange(g) / g)
    return np.real(np.fft.ifft(np.fft.fft(fv) * np.fft.fft(kv))) / g


def regularization_grid(k: SummabilityKernel) -> TorusGrid:
    # odd resolution puts a midpoint at x = 1/2, where |cos 2πx| peaks
    return TorusGrid(k.min_resolution() + 1)


def regularize(A: Graphop, k: SummabilityKernel, resolution: int | None = None) -> GraphonKernel:
    """The graphon ``K_n A K_n`` materialized on a grid.

    ``W(x, z) = ∫∫ k(x - y) k(z - ẑ) dν(y, ẑ)``. The inner ``ẑ`` integral is
    exact per variant (see ``Graphop.smooth_columns``); the outer ``y``
    integral uses the midpoint rule, which is exact for Fejér kernels when A
    is built from atoms or arcs.
    """
    grid = regularization_grid(k) if resolution is None else TorusGrid(resolution)
    _check_resolution(k, grid.resolution)
    g = grid.resolution
    x = grid.midpoints
    B = A.smooth_columns(k, grid)
    Kmat = k(x[:, None] - x[None, :])
    W = Kmat @ B / g
    W = np.clip(0.5 * (W + W.T), 0.0, None)
    return GraphonKernel(W, grid)


def default_test_functions(J: int = 3):
    fns = [("one", lambda x: np.ones_like(np.asarray(x, dtype=float)))]
    for j in range(1, J + 1):
        fns.append((f"cos{j}", lambda x, j=j: np.cos(2 * np.pi * j * np.asarray(x))))
        fns.append((f"sin{j}", lambda x, j=j: np.sin(2 * np.pi * j * np.asarray(x))))
    return fns


def o_convergence_gap(A: Graphop, A_reg: Graphop, test_fns=None, grid: TorusGrid | None = None) -> float:
    """``max_f sup_x |A_reg f(x) - A f(x)|`` over a finite set of continuous test functions.

    ``test_fns`` may be callables or ``(name, callable)`` pairs; the default is
    ``{1, cos 2πjx, sin 2πjx : j ≤ 3}``. The sup is taken over grid midpoints.
    """
    if grid is None:
        grid = A_reg.default_grid()
    fns = default_test_functions() if test_fns is None else list(test_fns)
    if not fns:
        raise ValueError("need at least one test function")
    gap = 0.0
    for item in fns:
        f = item[1] if isinstance(item, tuple) else item
        diff = A_reg.apply(f, grid) - A.apply(f, grid)
        gap = max(gap, float(np.max(np.abs(diff))))
    return gap

