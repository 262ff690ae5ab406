"""Decoupled linearized fixed-point iteration on a short horizon [0, T_iter].

Iterate k+1 solves, from the original initial data,

    rho_t + (rho Q*u^k)_x = 0
    u_t + u^k u_x = rho^k (Q*u - u)

with the previous iterate frozen.  Iterates live on one uniform time mesh so
sup-norm differences over the horizon compare aligned samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .convolution import DiscreteKernel, convolve
from .grid import Grid1D, State
from .solver import (SchemeConfig, density_flux_divergence, stable_dt,
                     upwind_derivative)

MAX_HALVINGS = 6


class PicardCFLError(RuntimeError):
    """Frozen fields exceed the rates the time mesh was built for."""


class NonContraction(RuntimeError):
    def __init__(self, T_iter: float, ratios: list[float]):
        super().__init__(f"no contraction at T_iter={T_iter:.6g}: ratios {ratios}")
        self.T_iter = T_iter
        self.ratios = ratios


@dataclass(frozen=True)
class PicardConfig:
    T_iter: float
    max_iters: int = 20
    tol_fixed_point: float = 1e-8
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    contraction_limit: float = 1.0

    def __post_init__(self):
        if not self.T_iter > 0:
            raise ValueError(f"T_iter must be positive, got {self.T_iter}")
        if self.max_iters < 2:
            raise ValueError(f"max_iters must be at least 2, got {self.max_iters}")
        if not self.tol_fixed_point > 0:
            raise ValueError("tol_fixed_point must be positive")

    def halved(self) -> "PicardConfig":
        return PicardConfig(0.5 * self.T_iter, self.max_iters, self.tol_fixed_point,
                            self.scheme, self.contraction_limit)


@dataclass
class TimeMesh:
    times: np.ndarray
    speed_cap: float
    relax_cap: float

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def build_mesh(init: State, grid: Grid1D, beta: float, cfg: PicardConfig) -> TimeMesh:
    """Uniform mesh whose step is stable for every iterate obeying the a-priori bounds.

    Speeds are bounded by sup|u0| (maximum principle) and the relaxation
    coefficient by sup rho0 exp(beta sup|u0| T_iter).
    """
    u_inf = float(np.max(np.abs(init.u)))
    rho_cap = float(np.max(init.rho)) * math.exp(beta * u_inf * cfg.T_iter)
    dt = stable_dt(cfg.scheme.cfl, u_inf, rho_cap, grid.dx)
    steps = max(1, int(math.ceil(cfg.T_iter / dt - 1e-12))) if math.isfinite(dt) else 1
    return TimeMesh(np.linspace(0.0, cfg.T_iter, steps + 1), u_inf, rho_cap)


def frozen_guess(init: State, mesh: TimeMesh) -> tuple[np.ndarray, np.ndarray]:
    """The k = 0 iterate: initial data held constant in time."""
    m = len(mesh.times)
    return np.tile(init.rho, (m, 1)), np.tile(init.u, (m, 1))


def _check_rates(prev_rho, prev_u, k: DiscreteKernel, mesh: TimeMesh) -> None:
    slack = 1.0 + 1e-9
    v_max = float(np.max(np.abs(convolve(k, prev_u))))
    speed = max(float(np.max(np.abs(prev_u))), v_max)
    if speed > mesh.speed_cap * slack + 1e-300:
        raise PicardCFLError(f"frozen speed {speed:.6g} exceeds mesh cap {mesh.speed_cap:.6g}")
    rmax = float(np.max(prev_rho))
    if rmax > mesh.relax_cap * slack + 1e-300:
        raise PicardCFLError(f"frozen density {rmax:.6g} exceeds mesh cap {mesh.relax_cap:.6g}")


def picard_step(prev_rho: np.ndarray, prev_u: np.ndarray, init: State, k: DiscreteKernel,
                grid: Grid1D, mesh: TimeMesh) -> tuple[np.ndarray, np.ndarray]:
    """One iterate: two linear SSP-RK3 solves driven by the frozen previous iterate.

    ``prev_rho`` and ``prev_u`` have shape (len(mesh.times), n).  Frozen
    fields at the RK stage times are linear in time between mesh points.
    """
    if prev_rho.shape != (len(mesh.times), grid.n) or prev_u.shape != prev_rho.shape:
        raise ValueError("previous iterate does not match the time mesh")
    _check_rates(prev_rho, prev_u, k, mesh)
    dx = grid.dx
    bounds = (float(init.u.min()), float(init.u.max()))
    v = convolve(k, prev_u)

    rho_out = np.empty_like(prev_rho)
    u_out = np.empty_like(prev_u)
    rho, u = init.rho.copy(), init.u.copy()
    rho_out[0], u_out[0] = rho, u

    def f_rho(r, vs):
        return density_flux_divergence(r, vs, dx)

    def f_u(w, a, b):
        return -a * upwind_derivative(w, a, dx, bounds) + b * (convolve(k, w) - w)

    for j in range(len(mesh.times) - 1):
        dt = mesh.times[j + 1] - mesh.times[j]
        # frozen inputs at stage times t, t + dt, t + dt/2
        v0, v1 = v[j], v[j + 1]
        a0, a1 = prev_u[j], prev_u[j + 1]
        b0, b1 = prev_rho[j], prev_rho[j + 1]
        vh, ah, bh = 0.5 * (v0 + v1), 0.5 * (a0 + a1), 0.5 * (b0 + b1)

        r1 = rho + dt * f_rho(rho, v0)
        r2 = 0.75 * rho + 0.25 * (r1 + dt * f_rho(r1, v1))
        rho = rho / 3.0 + (2.0 / 3.0) * (r2 + dt * f_rho(r2, vh))

        w1 = u + dt * f_u(u, a0, b0)
        w2 = 0.75 * u + 0.25 * (w1 + dt * f_u(w1, a1, b1))
        u = u / 3.0 + (2.0 / 3.0) * (w2 + dt * f_u(w2, ah, bh))

        rho = np.maximum(rho, 0.0)
        rho_out[j + 1], u_out[j + 1] = rho, u
    return rho_out, u_out


def sup_difference(r1, u1, r0, u0) -> float:
    return max(float(np.max(np.abs(r1 - r0))), float(np.max(np.abs(u1 - u0))))


@dataclass
class PicardResult:
    times: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    deltas: list[float]
    ratios: list[float]
    converged: bool
    T_iter_used: float
    halvings: int = 0
    density_bound_ok: bool = True
    max_principle_ok: bool = True

    @property
    def iters(self) -> int:
        return len(self.deltas)

    @property
    def final_delta(self) -> float:
        return self.deltas[-1] if self.deltas else 0.0

    def final_state(self) -> State:
        return State(self.rho[-1], self.u[-1], float(self.times[-1]))

    def report(self, agreement_with_direct: float | None = None) -> dict:
        return {"iters": self.iters, "ratios": list(self.ratios),
                "final_delta": self.final_delta, "T_iter_used": self.T_iter_used,
                "agreement_with_direct": agreement_with_direct,
                "converged": self.converged, "halvings": self.halvings,
                "density_bound_ok": self.density_bound_ok,
                "max_principle_ok": self.max_principle_ok}


def _iterate(init: State, k: DiscreteKernel, grid: Grid1D, cfg: PicardConfig,
             beta: float) -> PicardResult:
    mesh = build_mesh(init, grid, beta, cfg)
    rho, u = frozen_guess(init, mesh)
    deltas: list[float] = []
    converged = False

    u_lo, u_hi = float(init.u.min()), float(init.u.max())
    norm = max(float(np.max(init.rho)), float(np.max(np.abs(init.u))))
    rho_env = float(np.max(init.rho)) * np.exp(beta * 2.0 * norm * mesh.times)[:, None]
    dens_ok = mp_ok = True

    for _ in range(cfg.max_iters):
        rho_n, u_n = picard_step(rho, u, init, k, grid, mesh)
        deltas.append(sup_difference(rho_n, u_n, rho, u))
        rho, u = rho_n, u_n
        dens_ok &= bool(np.all(rho <= rho_env * (1.0 + 1e-12)))
        mp_ok &= bool(u.min() >= u_lo - 1e-12 and u.max() <= u_hi + 1e-12)
        if deltas[-1] < cfg.tol_fixed_point:
            converged = True
            break
    ratios = [b / a for a, b in zip(deltas, deltas[1:]) if a > 0]
    return PicardResult(mesh.times, rho, u, deltas, ratios, converged, cfg.T_iter,
                        density_bound_ok=dens_ok, max_principle_ok=mp_ok)


def picard_solve(init: State, k: DiscreteKernel, grid: Grid1D, cfg: PicardConfig,
                 beta: float | None = None, auto_halve: bool = True) -> PicardResult:
    """Iterate to a fixed point, halving T_iter (at most 6 times) on non-contraction.

    Non-contraction means some ratio reaches ``cfg.contraction_limit`` or the
    iteration fails to converge within ``max_iters``.
    """
    beta = k.beta if beta is None else beta
    for halvings in range(MAX_HALVINGS + 1):
        res = _iterate(init, k, grid, cfg, beta)
        res.halvings = halvings
        ok = res.converged and all(r < cfg.contraction_limit for r in res.ratios)
        if ok:
            return res
        if not auto_halve or halvings == MAX_HALVINGS:
            raise NonContraction(cfg.T_iter, res.ratios)
        cfg = cfg.halved()
    raise AssertionError("unreachable")
