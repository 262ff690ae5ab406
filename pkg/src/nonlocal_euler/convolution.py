"""Discrete periodic convolution Q*f on the simulation grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid1D
from .kernel import KernelSpec, eval_kernel, support_radius

MIN_CELLS_PER_SUPPORT = 4
DIRECT_STENCIL_MAX = 32


class UnderResolvedKernel(ValueError):
    pass


class StencilTooWide(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteKernel:
    """Quadrature weights w_j for offsets j = -m..m (index j + m).

    ``(Q*f)_i = sum_j w_j f_{i-j}`` with periodic indexing.
    """

    weights: np.ndarray
    stencil_half_width: int
    dx: float
    normalized: bool = True
    _spectra: dict = field(default_factory=dict, repr=False)

    @classmethod
    def identity(cls, dx: float = 1.0) -> "DiscreteKernel":
        return cls(np.array([1.0]), 0, dx)

    @property
    def offsets(self) -> np.ndarray:
        m = self.stencil_half_width
        return np.arange(-m, m + 1)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def gamma(self) -> float:
        """Discrete first moment sum_j w_j (j dx)."""
        return float(np.dot(self.weights, self.offsets * self.dx))

    @property
    def beta(self) -> float:
        """Discrete W^{1,1} norm: mass plus total variation of w/dx."""
        padded = np.concatenate(([0.0], self.weights, [0.0]))
        return self.mass + float(np.sum(np.abs(np.diff(padded)))) / self.dx

    def spectrum(self, n: int) -> np.ndarray:
        spec = self._spectra.get(n)
        if spec is None:
            col = np.zeros(n)
            np.add.at(col, self.offsets % n, self.weights)
            spec = np.fft.rfft(col)
            self._spectra[n] = spec
        return spec


def discretize_kernel(spec: KernelSpec, grid: Grid1D) -> DiscreteKernel:
    """Trapezoid-weighted samples over the truncated support, unit sum."""
    dx = grid.dx
    radius = support_radius(spec)
    if radius / dx < MIN_CELLS_PER_SUPPORT:
        raise UnderResolvedKernel(
            f"kernel support radius {radius:.4g} spans only {radius / dx:.2f} cells "
            f"(need >= {MIN_CELLS_PER_SUPPORT}); refine the grid")
    m = int(math.ceil(radius / dx))
    if 2 * m + 1 > grid.n:
        raise StencilTooWide(f"stencil of {2 * m + 1} cells exceeds the {grid.n}-cell domain")
    q = eval_kernel(spec, np.arange(-m, m + 1) * dx) * dx
    q[0] *= 0.5
    q[-1] *= 0.5
    total = q.sum()
    if not total > 0:
        raise UnderResolvedKernel("kernel samples vanish on the grid")
    return DiscreteKernel(q / total, m, dx)


def _check(k: DiscreteKernel, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if 2 * k.stencil_half_width + 1 > f.shape[-1]:
        raise StencilTooWide(
            f"stencil of {2 * k.stencil_half_width + 1} cells exceeds field length {f.shape[-1]}")
    return f


def convolve_direct(k: DiscreteKernel, f: np.ndarray) -> np.ndarray:
    """O(n m) summation; the reference for :func:`convolve_fast`."""
    f = _check(k, f)
    out = np.zeros_like(f)
    for j, w in zip(k.offsets, k.weights):
        out += w * np.roll(f, j, axis=-1)
    return out


def convolve_fast(k: DiscreteKernel, f: np.ndarray) -> np.ndarray:
    """Circular convolution through the real FFT."""
    f = _check(k, f)
    n = f.shape[-1]
    return np.fft.irfft(np.fft.rfft(f, axis=-1) * k.spectrum(n), n=n, axis=-1)


def convolve(k: DiscreteKernel, f: np.ndarray) -> np.ndarray:
    if 2 * k.stencil_half_width + 1 <= DIRECT_STENCIL_MAX:
        return convolve_direct(k, f)
    return convolve_fast(k, f)
