"""Semi-discrete right-hand sides, SSP-RK3 stepping and blow-up detection.

Three systems share the same spatial discretization:

* ``nonlocal``  rho_t + (rho Q*u)_x = 0,  u_t + u u_x = rho (Q*u - u)
* ``rescaled``  as above with Q^eps and relaxation rho/eps
* ``limit``     rho_t + (rho u)_x = 0,    u_t + (u - gamma rho) u_x = 0

The density is advanced conservatively with a local Lax-Friedrichs flux on
minmod-reconstructed states.  The velocity equation is kept in
non-conservative form and upwinded by the sign of the advection speed with a
limited second-order reconstruction, which keeps the discrete update a
convex combination under the time-step rule in :func:`stable_dt`.
"""

from __future__ import annotations

import logging
import math
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .convolution import DiscreteKernel, convolve
from .grid import TOL_NEG, Grid1D, State, derivative

log = logging.getLogger(__name__)

SYSTEMS = ("nonlocal", "rescaled", "limit")


@dataclass(frozen=True)
class SchemeConfig:
    cfl: float = 0.4
    t_end: float = 1.0
    max_steps: int = 1_000_000
    G_max: float = 1e4
    output_times: tuple[float, ...] = ()
    system: str = "nonlocal"
    eps: float = 1.0
    gamma: float = 0.0

    def __post_init__(self):
        if not 0 < self.cfl <= 1:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if not self.G_max > 0:
            raise ValueError(f"G_max must be positive, got {self.G_max}")
        if self.system not in SYSTEMS:
            raise ValueError(f"unknown system {self.system!r}")
        if self.system == "rescaled" and not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        times = tuple(sorted(float(t) for t in self.output_times))
        if any(t <= 0 or t > self.t_end for t in times):
            raise ValueError("output_times must lie in (0, t_end]")
        object.__setattr__(self, "output_times", times)

    @property
    def relaxation_scale(self) -> float:
        return self.eps if self.system == "rescaled" else 1.0


@dataclass(frozen=True)
class BlowupEvent:
    t_blow: float
    x_blow: float
    trigger: str
    max_neg_ux: float

    def to_dict(self) -> dict:
        return {"t": self.t_blow, "x": self.x_blow, "trigger": self.trigger,
                "max_neg_ux": self.max_neg_ux}


@dataclass
class Trajectory:
    grid: Grid1D
    config: SchemeConfig
    snapshots: list[State] = field(default_factory=list)
    diagnostics: object | None = None
    blowup: BlowupEvent | None = None
    steps: int = 0
    t_end_reached: bool = False
    mass_drift: float = 0.0
    wall_time_ms: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def final(self) -> State:
        return self.snapshots[-1]

    def state_at(self, t: float, atol: float = 1e-12) -> State:
        for s in self.snapshots:
            if abs(s.t - t) <= atol * max(1.0, abs(t)):
                return s
        raise KeyError(f"no snapshot at t={t}")


class NonFiniteState(FloatingPointError):
    pass


# -- spatial operators -------------------------------------------------------

def minmod(a, b):
    return np.where(a * b > 0.0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def mc_limiter(a, b):
    """Monotonized-central slope: minmod(2a, (a+b)/2, 2b)."""
    s = np.sign(a)
    m = np.minimum(np.minimum(2.0 * np.abs(a), 2.0 * np.abs(b)), 0.5 * np.abs(a + b))
    return np.where(a * b > 0.0, s * m, 0.0)


def density_flux_divergence(rho: np.ndarray, v: np.ndarray, dx: float) -> np.ndarray:
    """-(rho v)_x by a Rusanov flux on minmod-reconstructed density."""
    fwd = np.roll(rho, -1) - rho
    slope = minmod(rho - np.roll(rho, 1), fwd)
    rho_l = rho + 0.5 * slope
    rho_r = np.roll(rho - 0.5 * slope, -1)
    v_next = np.roll(v, -1)
    v_face = 0.5 * (v + v_next)
    a = np.maximum(np.abs(v), np.abs(v_next))
    flux = 0.5 * v_face * (rho_l + rho_r) - 0.5 * a * (rho_r - rho_l)
    return -(flux - np.roll(flux, 1)) / dx


def velocity_slopes(u: np.ndarray, bounds: tuple[float, float] | None = None) -> np.ndarray:
    """Cell slopes for the velocity reconstruction.

    MC-limited, except where the data is smooth (three second differences
    of one sign and comparable size) and the central slope is kept.  Every slope
    is then scaled so both face values stay inside ``bounds`` (default
    [min u, max u]); the forward-Euler update is a convex combination of the
    cell value and its face values, so this is what the maximum principle
    needs.  Runs pass the initial range, which leaves room at extrema that
    have moved off the bound.
    """
    back = u - np.roll(u, 1)
    fwd = np.roll(back, -1)
    slope = mc_limiter(back, fwd)
    d2 = fwd - back
    d2m, d2p = np.roll(d2, 1), np.roll(d2, -1)
    a2 = np.abs(np.stack((d2m, d2, d2p)))
    smooth = ((np.sign(d2m) == np.sign(d2)) & (np.sign(d2p) == np.sign(d2))
              & (a2.min(axis=0) >= 0.25 * a2.max(axis=0)))
    slope = np.where(smooth, 0.5 * (back + fwd), slope)

    half = 0.5 * np.abs(slope)
    lo, hi = (u.min(), u.max()) if bounds is None else bounds
    room = np.maximum(np.minimum(hi - u, u - lo), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.where(half > room, room / half, 1.0)
    return slope * np.clip(theta, 0.0, 1.0)


def upwind_derivative(u: np.ndarray, speed: np.ndarray, dx: float,
                      bounds: tuple[float, float] | None = None) -> np.ndarray:
    """Second-order u_x from face values reconstructed against the sign of ``speed``."""
    back = u - np.roll(u, 1)
    fwd = np.roll(back, -1)
    slope = velocity_slopes(u, bounds)
    d_left = (back + 0.5 * (slope - np.roll(slope, 1))) / dx
    d_right = (fwd - 0.5 * (np.roll(slope, -1) - slope)) / dx
    return np.where(speed > 0.0, d_left, d_right)


def _require_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteState("non-finite field entering the right-hand side")


def _rhs_relaxed(rho, u, k: DiscreteKernel, dx: float, eps: float, bounds=None):
    v = convolve(k, u)
    drho = density_flux_divergence(rho, v, dx)
    du = -u * upwind_derivative(u, u, dx, bounds) + (rho / eps) * (v - u)
    return drho, du


def _rhs_limit(rho, u, gamma: float, dx: float, bounds=None):
    drho = density_flux_divergence(rho, u, dx)
    speed = u - gamma * rho
    du = -speed * upwind_derivative(u, speed, dx, bounds)
    return drho, du


def rhs_nonlocal(state: State, k: DiscreteKernel, grid: Grid1D):
    _require_finite(state.rho, state.u)
    return _rhs_relaxed(state.rho, state.u, k, grid.dx, 1.0)


def rhs_rescaled(state: State, k_eps: DiscreteKernel, eps: float, grid: Grid1D):
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    _require_finite(state.rho, state.u)
    return _rhs_relaxed(state.rho, state.u, k_eps, grid.dx, eps)


def rhs_limit(state: State, gamma: float, grid: Grid1D):
    _require_finite(state.rho, state.u)
    return _rhs_limit(state.rho, state.u, gamma, grid.dx)


def limit_gamma(gamma_moment: float) -> float:
    """Coefficient of rho u_x in the limit system for a kernel with first moment gamma.

    With (Q*u)(x) = int Q(x-y) u(y) dy one has
    (Q^eps*u - u)/eps -> -(int y Q(y) dy) u_x, so the limit equation reads
    u_t + (u + gamma rho) u_x = 0, i.e. coefficient -gamma in our convention.
    """
    return -gamma_moment


# -- time stepping -------------------------------------------------------------

class _System:
    """Array-level right-hand side and step-size rule for one configuration."""

    def __init__(self, config: SchemeConfig, k: DiscreteKernel | None, grid: Grid1D,
                 bounds: tuple[float, float] | None = None):
        self.config = config
        self.k = k
        self.dx = grid.dx
        self.bounds = bounds
        if config.system != "limit" and k is None:
            raise ValueError(f"system {config.system!r} needs a discrete kernel")

    def rhs(self, rho, u):
        c = self.config
        if c.system == "limit":
            return _rhs_limit(rho, u, c.gamma, self.dx, self.bounds)
        return _rhs_relaxed(rho, u, self.k, self.dx, c.relaxation_scale, self.bounds)

    def rates(self, rho, u) -> tuple[float, float]:
        """(advective speed bound, relaxation rate bound)."""
        c = self.config
        if c.system == "limit":
            speed = max(np.max(np.abs(u)), np.max(np.abs(u - c.gamma * rho)))
            return float(speed), 0.0
        v = convolve(self.k, u)
        speed = max(np.max(np.abs(u)), np.max(np.abs(v)))
        return float(speed), float(np.max(rho)) / c.relaxation_scale


def stable_dt(cfl: float, speed: float, relax: float, dx: float) -> float:
    """Largest dt with 2 (speed dt/dx) + relax dt <= 2 cfl.

    The limited upwind update contributes at most twice the Courant number
    to the loss coefficient of u_i, the relaxation contributes dt rho/eps; for
    cfl <= 1/2 every forward-Euler stage is then a convex combination.
    """
    rate = speed / dx + 0.5 * relax
    return math.inf if rate <= 0 else cfl / rate


def _clip_density(rho: np.ndarray) -> np.ndarray:
    lo = rho.min()
    if lo < -TOL_NEG:
        log.warning("density undershoot %.3e clipped", lo)
    return np.maximum(rho, 0.0)


def _ssprk3(system: _System, rho, u, dt):
    d1r, d1u = system.rhs(rho, u)
    r1 = rho + dt * d1r
    u1 = u + dt * d1u
    d2r, d2u = system.rhs(r1, u1)
    r2 = 0.75 * rho + 0.25 * (r1 + dt * d2r)
    u2 = 0.75 * u + 0.25 * (u1 + dt * d2u)
    d3r, d3u = system.rhs(r2, u2)
    r3 = rho / 3.0 + (2.0 / 3.0) * (r2 + dt * d3r)
    u3 = u / 3.0 + (2.0 / 3.0) * (u2 + dt * d3u)
    return _clip_density(r3), u3


def step(state: State, config: SchemeConfig, k: DiscreteKernel | None, grid: Grid1D,
         dt: float | None = None) -> State:
    """One SSP-RK3 step; ``dt`` defaults to the stability rule."""
    system = _System(config, k, grid)
    if dt is None:
        dt = stable_dt(config.cfl, *system.rates(state.rho, state.u), grid.dx)
        dt = min(dt, config.t_end)
    rho, u = _ssprk3(system, state.rho, state.u, dt)
    return State(rho, u, state.t + dt)


def max_neg_gradient(u: np.ndarray, grid: Grid1D) -> tuple[float, int]:
    g = -derivative(u, grid)
    i = int(np.argmax(g))
    return float(g[i]), i


def resolvable_gradient(state: State, grid: Grid1D) -> float:
    """Largest |u_x| a central difference can report for this velocity range."""
    return float(np.ptp(state.u)) / (2.0 * grid.dx)


def run(init: State, config: SchemeConfig, k: DiscreteKernel | None, grid: Grid1D,
        kprops=None, diagnostics: bool = True) -> Trajectory:
    """March to ``t_end`` or a blow-up event, recording snapshots at output times.

    ``kprops`` supplies beta for the bound checks; without it the discrete
    kernel's own beta is used.
    """
    started = _time.perf_counter()
    system = _System(config, k, grid, bounds=(float(init.u.min()), float(init.u.max())))
    traj = Trajectory(grid=grid, config=config)
    traj.snapshots.append(State(init.rho, init.u, 0.0))

    targets = list(config.output_times)
    if not targets or targets[-1] < config.t_end:
        targets.append(config.t_end)
    rho, u, t = init.rho.copy(), init.u.copy(), 0.0
    mass0 = grid.dx * float(np.sum(rho))
    dt_floor = 1e-12 * config.t_end
    ti = 0

    while ti < len(targets):
        if traj.steps >= config.max_steps:
            log.warning("max_steps=%d reached at t=%.6g", config.max_steps, t)
            break
        target = targets[ti]
        dt = stable_dt(config.cfl, *system.rates(rho, u), grid.dx)
        dt = min(dt, target - t)
        if dt < dt_floor and target - t > dt_floor:
            g, i = max_neg_gradient(u, grid)
            traj.blowup = BlowupEvent(t, float(grid.x[i]), "dt_underflow", g)
            break
        try:
            rho_n, u_n = _ssprk3(system, rho, u, dt)
        except (NonFiniteState, FloatingPointError):
            rho_n = u_n = None
        if rho_n is None or not (np.all(np.isfinite(rho_n)) and np.all(np.isfinite(u_n))):
            g, i = max_neg_gradient(u, grid)
            traj.blowup = BlowupEvent(t, float(grid.x[i]), "nonfinite", g)
            break
        rho, u = rho_n, u_n
        traj.steps += 1
        t = target if target - (t + dt) <= 1e-14 * max(1.0, target) else t + dt

        g, i = max_neg_gradient(u, grid)
        if g > config.G_max:
            traj.blowup = BlowupEvent(t, float(grid.x[i]), "gradient_threshold", g)
            traj.snapshots.append(State(rho, u, t))
            break
        if t >= target:
            traj.snapshots.append(State(rho, u, t))
            ti += 1

    traj.t_end_reached = traj.blowup is None and ti == len(targets)
    mass = grid.dx * float(np.sum(rho))
    traj.mass_drift = abs(mass - mass0) / mass0 if mass0 > 0 else abs(mass - mass0)
    if diagnostics and config.system != "limit":
        from .threshold import verify_bounds
        if kprops is None:
            from .kernel import KernelProps
            kprops = KernelProps(k.mass, k.beta, k.gamma, k.stencil_half_width * grid.dx)
        traj.diagnostics = verify_bounds(traj, kprops)
    traj.wall_time_ms = 1e3 * (_time.perf_counter() - started)
    return traj
