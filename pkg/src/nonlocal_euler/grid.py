"""Uniform periodic grid, cell-centred state and discrete derivative norms."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TOL_NEG = 1e-12


@dataclass(frozen=True)
class Grid1D:
    a: float
    b: float
    n: int
    boundary: str = "periodic"

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError(f"grid needs b > a, got a={self.a}, b={self.b}")
        if int(self.n) != self.n or self.n < 8:
            raise ValueError(f"grid needs an integer n >= 8, got {self.n}")
        if self.boundary != "periodic":
            raise ValueError(f"unsupported boundary {self.boundary!r}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def dx(self) -> float:
        return (self.b - self.a) / self.n

    @property
    def x(self) -> np.ndarray:
        return self.a + (np.arange(self.n) + 0.5) * self.dx

    def refine(self, factor: int = 2) -> "Grid1D":
        return Grid1D(self.a, self.b, self.n * factor)


@dataclass(frozen=True)
class State:
    rho: np.ndarray
    u: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        rho = np.array(self.rho, dtype=float)
        u = np.array(self.u, dtype=float)
        if rho.shape != u.shape or rho.ndim != 1:
            raise ValueError("rho and u must be 1D arrays of equal length")
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(u))):
            raise ValueError("state contains non-finite values")
        if rho.min() < -TOL_NEG:
            raise ValueError(f"negative density {rho.min():.3e} below tolerance")
        np.maximum(rho, 0.0, out=rho)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "t", float(self.t))

    @property
    def n(self) -> int:
        return self.rho.size


def _as_field(values, x):
    return np.broadcast_to(np.asarray(values, dtype=float), x.shape).copy()


def sample_initial_data(grid: Grid1D, rho0, u0) -> State:
    """Sample pointwise callables at the cell centres; t = 0."""
    x = grid.x
    rho = _as_field(rho0(x), x)
    u = _as_field(u0(x), x)
    if rho.min() < 0:
        i = int(np.argmin(rho))
        raise ValueError(f"negative initial density {rho[i]:.3e} at x={x[i]:.6g}")
    return State(rho, u, 0.0)


def random_smooth_data(grid: Grid1D, rng: np.random.Generator, modes: int = 4,
                       u_amp: float = 0.5, rho_amp: float = 0.5) -> State:
    """Random periodic band-limited data with positive density."""
    x = grid.x
    k = 2.0 * np.pi * np.arange(1, modes + 1)[:, None] / grid.length
    decay = 1.0 / np.arange(1, modes + 1)[:, None]

    def series(amp):
        c = rng.normal(size=(modes, 1)) * decay
        phase = rng.uniform(0.0, 2.0 * np.pi, size=(modes, 1))
        s = np.sum(c * np.sin(k * (x - grid.a) + phase), axis=0)
        return amp * s / max(np.max(np.abs(s)), 1e-300)

    u = series(u_amp)
    rho = rng.uniform(0.5, 1.5) * np.exp(series(rho_amp))
    return State(rho, u, 0.0)


def derivative(f: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Second-order central difference with periodic wrap."""
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.n,):
        raise ValueError(f"field has shape {f.shape}, grid expects ({grid.n},)")
    return (np.roll(f, -1) - np.roll(f, 1)) / (2.0 * grid.dx)


def sobolev_energy(state: State, grid: Grid1D, s: int = 1) -> float:
    """Discrete ||D rho||_{H^s}^2 + ||D u||_{H^s}^2 using iterated central differences."""
    if s not in (1, 2):
        raise ValueError(f"sobolev index must be 1 or 2, got {s}")
    total = 0.0
    for f in (state.rho, state.u):
        g = f
        for _ in range(s + 1):
            g = derivative(g, grid)
            total += grid.dx * float(np.dot(g, g))
    return total


def restrict(f: np.ndarray, factor: int = 2) -> np.ndarray:
    """Average groups of ``factor`` fine cells onto the coarse grid."""
    return np.asarray(f).reshape(-1, factor).mean(axis=1)


def periodic_interp(f: np.ndarray, grid: Grid1D, xq) -> np.ndarray:
    """Linear interpolation of cell-centred values at arbitrary points."""
    s = (np.asarray(xq, dtype=float) - grid.a) / grid.dx - 0.5
    i0 = np.floor(s)
    frac = s - i0
    i0 = i0.astype(np.int64) % grid.n
    i1 = (i0 + 1) % grid.n
    return (1.0 - frac) * f[..., i0] + frac * f[..., i1]


def fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_snapshot_csv(path, state: State, grid: Grid1D) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "rho", "u"])
        for xi, r, v in zip(grid.x, state.rho, state.u):
            w.writerow([fmt(xi), fmt(r), fmt(v)])


def read_snapshot_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1], data[:, 2]
