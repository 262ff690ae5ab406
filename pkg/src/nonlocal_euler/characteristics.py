"""Particle paths and the Riccati variable d = u_x + rho along them.

Along dX/dt = u(t, X) the quantity d obeys d' = -d (d - rho).  Fields are
taken from trajectory snapshots by linear interpolation in space and time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import Grid1D, derivative, fmt, periodic_interp


@dataclass
class CharTrace:
    alpha: float
    t: list[float] = field(default_factory=list)
    X: list[float] = field(default_factory=list)
    d: list[float] = field(default_factory=list)
    rho_along: list[float] = field(default_factory=list)
    terminated: str = "reached_t_end"
    t_c_est: float | None = None

    @property
    def samples(self):
        return list(zip(self.t, self.X, self.d, self.rho_along))


def riccati_blowup_time(d0: float, rho: float) -> float:
    """Exact blow-up time of d' = -d(d - rho) for constant rho; inf if none."""
    if rho < 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    if d0 >= 0:
        return math.inf
    if rho == 0:
        return -1.0 / d0
    return math.log1p(-rho / d0) / rho


def riccati_closed_form(d0: float, rho: float, t):
    """d(t) for d' = -d(d - rho) with constant rho; -inf at and past blow-up.

    Written as d0 / (exp(-rho t) + d0 phi) with phi = (1 - exp(-rho t)) / rho,
    which stays accurate as rho -> 0 and reduces to d0 / (1 + d0 t) there.
    """
    if rho < 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    t = np.asarray(t, dtype=float)
    if rho == 0:
        decay, phi = np.ones_like(t), t
    else:
        decay, phi = np.exp(-rho * t), -np.expm1(-rho * t) / rho
    tc = riccati_blowup_time(d0, rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(t >= tc, -np.inf, d0 / (decay + d0 * phi))
    return float(out) if out.ndim == 0 else out


class _Fields:
    """Space-time linear interpolant of u, rho and u_x + rho from snapshots."""

    def __init__(self, traj):
        self.grid: Grid1D = traj.grid
        self.times = traj.times
        self.u = np.array([s.u for s in traj.snapshots])
        self.rho = np.array([s.rho for s in traj.snapshots])
        self.d = np.array([derivative(s.u, self.grid) + s.rho for s in traj.snapshots])

    def segment(self, t0_index: int):
        return self.times[t0_index], self.times[t0_index + 1]

    def at(self, name: str, j: int, t: float, x):
        """Interpolate field ``name`` at time t in [times[j], times[j+1]]."""
        f = getattr(self, name)
        t0, t1 = self.times[j], self.times[j + 1]
        w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
        a = periodic_interp(f[j], self.grid, x)
        b = periodic_interp(f[j + 1], self.grid, x)
        return (1.0 - w) * a + w * b


def _wrap(x, grid: Grid1D):
    return grid.a + np.mod(x - grid.a, grid.length)


def integrate_characteristics(traj, alphas, dt_ode: float) -> list[CharTrace]:
    """RK4 on (X, d) for several launch points in lockstep.

    Steps are aligned with snapshot times so every segment sees a smooth
    (linear-in-time) integrand.  A trace stops once |d| > 1/dt_ode; its
    blow-up time is then refined by bisection on the last step.
    """
    grid = traj.grid
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    if np.any(alphas < grid.a) or np.any(alphas > grid.b):
        raise ValueError("launch point outside the domain")
    times = traj.times
    if len(times) < 2:
        raise ValueError("trajectory needs at least two snapshots")
    if np.max(np.diff(times)) > 10.0 * dt_ode * (1 + 1e-12):
        raise ValueError(
            f"snapshot spacing {np.max(np.diff(times)):.4g} exceeds 10*dt_ode={10 * dt_ode:.4g}")
    F = _Fields(traj)
    cap = 1.0 / dt_ode

    X = alphas.copy()
    d = periodic_interp(F.d[0], grid, X)
    traces = [CharTrace(float(a)) for a in alphas]
    alive = np.ones(alphas.size, dtype=bool)

    def record(t, idx):
        for k in idx:
            tr = traces[k]
            tr.t.append(float(t))
            tr.X.append(float(X[k]))
            tr.d.append(float(d[k]))
            tr.rho_along.append(float(rho_now[k]))

    def rhs(j, t, x, dd):
        u = F.at("u", j, t, x)
        r = F.at("rho", j, t, x)
        return u, -dd * (dd - r)

    def rk4(j, t, x, dd, h):
        k1x, k1d = rhs(j, t, x, dd)
        k2x, k2d = rhs(j, t + h / 2, x + h / 2 * k1x, dd + h / 2 * k1d)
        k3x, k3d = rhs(j, t + h / 2, x + h / 2 * k2x, dd + h / 2 * k2d)
        k4x, k4d = rhs(j, t + h, x + h * k3x, dd + h * k3d)
        return (x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x),
                dd + h / 6 * (k1d + 2 * k2d + 2 * k3d + k4d))

    rho_now = periodic_interp(F.rho[0], grid, X)
    record(times[0], np.flatnonzero(alive))

    for j in range(len(times) - 1):
        t0, t1 = F.segment(j)
        nsub = max(1, int(math.ceil((t1 - t0) / dt_ode - 1e-9)))
        h = (t1 - t0) / nsub
        for s in range(nsub):
            if not alive.any():
                break
            t = t0 + s * h
            idx = np.flatnonzero(alive)
            with np.errstate(over="ignore", invalid="ignore"):
                xn, dn = rk4(j, t, X[idx], d[idx], h)
            bad = ~np.isfinite(dn) | (np.abs(dn) > cap)
            for k_local in np.flatnonzero(bad):
                k = idx[k_local]
                traces[k].terminated = "d_blowup"
                traces[k].t_c_est = _bisect_blowup(rk4, j, t, X[k], d[k], h, cap)
                alive[k] = False
            good = idx[~bad]
            X[good] = _wrap(xn[~bad], grid)
            d[good] = dn[~bad]
            tn = t0 + (s + 1) * h if s + 1 < nsub else t1
            rho_now = np.zeros_like(X)
            rho_now[good] = F.at("rho", j, tn, X[good])
            record(tn, good)
    return traces


def _bisect_blowup(rk4, j, t, x, dd, h, cap, iters: int = 60) -> float:
    lo, hi = 0.0, h
    xa, da = np.array([x]), np.array([dd])
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        with np.errstate(over="ignore", invalid="ignore"):
            _, dm = rk4(j, t, xa, da, mid)
        if np.isfinite(dm[0]) and abs(dm[0]) <= cap:
            lo = mid
        else:
            hi = mid
    # near blow-up d ~ -1/(t_c - t), so |d| = cap is reached 1/cap early
    return t + hi + 1.0 / cap


def integrate_characteristic(traj, alpha: float, dt_ode: float) -> CharTrace:
    return integrate_characteristics(traj, [alpha], dt_ode)[0]


@dataclass
class ConsistencyReport:
    max_discrepancy: float
    sup_d: float
    tol: float
    passed: bool
    compared: int

    @property
    def relative(self) -> float:
        return self.max_discrepancy / self.sup_d if self.sup_d > 0 else self.max_discrepancy

    def to_dict(self) -> dict:
        return {"max_discrepancy": self.max_discrepancy, "sup_d": self.sup_d,
                "tol": self.tol, "passed": self.passed, "compared": self.compared}


def consistency_check(traj, traces: list[CharTrace], tol: float,
                      t_max: float | None = None, d_cap: float = 100.0) -> ConsistencyReport:
    """Compare ODE d with grid (u_x + rho) at X(t), at every snapshot time."""
    F = _Fields(traj)
    worst, sup_d, count = 0.0, 0.0, 0
    for tr in traces:
        t_arr = np.array(tr.t)
        for j, ts in enumerate(F.times):
            if t_max is not None and ts > t_max + 1e-12:
                break
            hit = np.flatnonzero(np.abs(t_arr - ts) <= 1e-12 * max(1.0, ts))
            if hit.size == 0:
                continue
            k = hit[0]
            d_ode = tr.d[k]
            if abs(d_ode) >= d_cap:
                continue
            d_grid = float(periodic_interp(F.d[j], traj.grid, tr.X[k]))
            worst = max(worst, abs(d_ode - d_grid))
            sup_d = max(sup_d, abs(d_ode), abs(d_grid))
            count += 1
    return ConsistencyReport(worst, sup_d, tol, worst < tol, count)


def write_traces_csv(path, traces: list[CharTrace]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "t", "X", "d", "rho_along"])
        for tr in traces:
            for t, x, d, r in tr.samples:
                w.writerow([fmt(tr.alpha), fmt(t), fmt(x), fmt(d), fmt(r)])
