"""Critical-threshold classification and a-priori bound verification."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import Grid1D, State, derivative, sobolev_energy

MAX_PRINCIPLE_SLACK = 1e-6
DENSITY_BOUND_SLACK = 1e-3


@dataclass(frozen=True)
class ThresholdVerdict:
    kind: str
    d0_min: float
    x_witness: float
    blowup_upper_bound: float | None
    variant: str = "nonlocal"
    parameter: float | None = None
    tol_grid: float = 0.0
    marginal: bool = False
    failed_condition: str | None = None

    @property
    def subcritical(self) -> bool:
        return self.kind == "subcritical"

    def to_dict(self) -> dict:
        return asdict(self)


def grid_tolerance(u0: np.ndarray, grid: Grid1D, near: int | None = None,
                   radius: int = 3) -> float:
    """10 dx^2 max|u'''|, with u''' from periodic third differences.

    With ``near`` the maximum runs over cells within ``radius`` of that index
    only, so a jump elsewhere (typically the periodic wrap of non-periodic
    data) does not swamp the estimate at the witness.
    """
    third = (np.roll(u0, -2) - 2 * np.roll(u0, -1) + 2 * np.roll(u0, 1) - np.roll(u0, 2))
    third /= 2.0 * grid.dx ** 3
    if near is not None:
        third = third[(near + np.arange(-radius, radius + 1)) % grid.n]
    return 10.0 * grid.dx ** 2 * float(np.max(np.abs(third)))


def predict_blowup_upper_bound(d0_min: float) -> float:
    if not d0_min < 0:
        raise ValueError(f"blow-up bound needs d0_min < 0, got {d0_min}")
    return -1.0 / d0_min


def _scan(d0: np.ndarray, u0: np.ndarray, grid: Grid1D, variant: str,
          parameter: float | None) -> ThresholdVerdict:
    i = int(np.argmin(d0))
    d0_min = float(d0[i])
    tol = grid_tolerance(u0, grid, near=i)
    sub = d0_min >= -tol
    return ThresholdVerdict(
        kind="subcritical" if sub else "supercritical",
        d0_min=d0_min,
        x_witness=float(grid.x[i]),
        blowup_upper_bound=None if sub else predict_blowup_upper_bound(d0_min),
        variant=variant,
        parameter=parameter,
        tol_grid=tol,
        marginal=abs(d0_min) < tol,
    )


def classify(init: State, grid: Grid1D) -> ThresholdVerdict:
    """Subcritical iff min(u0_x + rho0) >= -tol_grid."""
    d0 = derivative(init.u, grid) + init.rho
    return _scan(d0, init.u, grid, "nonlocal", None)


def classify_rescaled(init: State, grid: Grid1D, eps: float) -> ThresholdVerdict:
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    d0 = derivative(init.u, grid) + init.rho / eps
    return _scan(d0, init.u, grid, "rescaled", float(eps))


def classify_burgers(init: State, grid: Grid1D) -> ThresholdVerdict:
    """The eps -> infinity threshold u0_x >= 0."""
    return _scan(derivative(init.u, grid), init.u, grid, "burgers", None)


def classify_limit(init: State, grid: Grid1D, gamma: float) -> ThresholdVerdict:
    """Both Riemann invariants u and u + gamma rho nondecreasing.

    ``gamma`` is the coefficient in u_t + (u - gamma rho) u_x = 0.  No
    blow-up time bound is attached.
    """
    ux = derivative(init.u, grid)
    checks = (("u0x+gamma*rho0x>=0", ux + gamma * derivative(init.rho, grid),
               init.u + gamma * init.rho),
              ("u0x>=0", ux, init.u))
    scans = []
    for name, d, w in checks:
        i = int(np.argmin(d))
        tol = grid_tolerance(w, grid, near=i)
        scans.append((float(d[i]), i, tol))
        if d[i] < -tol:
            return ThresholdVerdict("supercritical", float(d[i]), float(grid.x[i]), None,
                                    "limit", float(gamma), tol, abs(d[i]) < tol,
                                    failed_condition=name)
    d0_min, i, tol = min(scans)
    return ThresholdVerdict("subcritical", d0_min, float(grid.x[i]), None, "limit",
                            float(gamma), tol, abs(d0_min) < tol)


def riccati_lower_estimate(d0: float, rho_max: float) -> float:
    """Blow-up time of d' = -d(d - rho_max); a lower bound when rho <= rho_max."""
    from .characteristics import riccati_blowup_time
    return riccati_blowup_time(d0, rho_max)


@dataclass
class DiagnosticsReport:
    times: list[float] = field(default_factory=list)
    max_principle_ok: bool = True
    max_principle_excess: float = 0.0
    density_bound_ok: bool = True
    density_ratio: float = 0.0
    ux_bound_checked: bool = False
    ux_bound_ok: bool = True
    ux_ratio: float = 0.0
    energy_Y: list[float] = field(default_factory=list)
    u_min: list[float] = field(default_factory=list)
    u_max: list[float] = field(default_factory=list)
    density_ratios: list[float] = field(default_factory=list)
    ux_ratios: list[float] = field(default_factory=list)
    energy_log_growth: list[float] = field(default_factory=list)
    energy_integral: list[float] = field(default_factory=list)
    energy_C_fit: float = 0.0
    mass_drift: float = 0.0

    @property
    def all_ok(self) -> bool:
        return self.max_principle_ok and self.density_bound_ok and self.ux_bound_ok

    def to_dict(self) -> dict:
        return asdict(self)


def verify_bounds(traj, kprops) -> DiagnosticsReport:
    """Evaluate the maximum principle, density bound, gradient bound and energy monitor.

    The gradient bound ||u_x|| <= ||u0_x|| + 2||rho0|| exp(beta ||u0|| t) is
    only checked for subcritical initial data.  The energy constant is fitted
    (reported), never asserted.
    """
    grid = traj.grid
    s0 = traj.snapshots[0]
    beta = kprops.beta
    u_lo, u_hi = float(s0.u.min()), float(s0.u.max())
    u_inf = float(np.max(np.abs(s0.u)))
    rho_inf = float(np.max(s0.rho))
    ux0_inf = float(np.max(np.abs(derivative(s0.u, grid))))
    sub = classify(s0, grid).subcritical

    rep = DiagnosticsReport(ux_bound_checked=sub, mass_drift=traj.mass_drift)
    rates = []
    for s in traj.snapshots:
        t = s.t
        rep.times.append(t)
        rep.u_min.append(float(s.u.min()))
        rep.u_max.append(float(s.u.max()))
        excess = max(rep.u_max[-1] - u_hi, u_lo - rep.u_min[-1], 0.0)
        rep.max_principle_excess = max(rep.max_principle_excess, excess)

        growth = math.exp(beta * u_inf * t)
        rho_bound = rho_inf * growth
        if rho_bound > 0:
            ratio = float(s.rho.max()) / rho_bound
        else:
            ratio = math.inf if s.rho.max() > 0 else 0.0
        rep.density_ratios.append(ratio)
        rep.density_ratio = max(rep.density_ratio, ratio)

        ux = derivative(s.u, grid)
        ux_bound = ux0_inf + 2.0 * rho_inf * growth
        ratio = float(np.max(np.abs(ux))) / ux_bound if ux_bound > 0 else 0.0
        rep.ux_ratios.append(ratio)
        if sub:
            rep.ux_ratio = max(rep.ux_ratio, ratio)
        rep.energy_Y.append(sobolev_energy(s, grid, 1))
        rates.append(float(s.rho.max()) + float(np.max(np.abs(s.u))) + float(np.max(np.abs(ux))))

    rep.max_principle_ok = rep.max_principle_excess <= MAX_PRINCIPLE_SLACK
    rep.density_bound_ok = rep.density_ratio <= 1.0 + DENSITY_BOUND_SLACK
    rep.ux_bound_ok = (not sub) or rep.ux_ratio <= 1.0

    times = np.array(rep.times)
    integral = np.concatenate(([0.0], np.cumsum(0.5 * np.diff(times) * (np.array(rates[1:]) + np.array(rates[:-1])))))
    rep.energy_integral = integral.tolist()
    Y = np.array(rep.energy_Y)
    if Y[0] > 0:
        with np.errstate(divide="ignore"):
            growth = np.log(np.maximum(Y, 1e-300)) - math.log(Y[0])
        rep.energy_log_growth = growth.tolist()
        ok = integral > 0
        rep.energy_C_fit = float(np.max(growth[ok] / integral[ok], initial=0.0))
    return rep
