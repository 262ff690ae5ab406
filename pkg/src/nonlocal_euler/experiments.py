"""Experiment runners behind the CLI: each writes summary.json, CSVs and figures."""

from __future__ import annotations

import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plotting
from .characteristics import consistency_check, integrate_characteristics, write_traces_csv
from .config import ExperimentConfig
from .convolution import discretize_kernel
from .grid import Grid1D, State, derivative, fmt, restrict, write_snapshot_csv
from .kernel import (KernelHypothesisError, KernelProps, eval_kernel, rescale_kernel,
                     support_radius, validate_kernel)
from .picard import NonContraction, PicardConfig, picard_solve
from .solver import SchemeConfig, Trajectory, limit_gamma, resolvable_gradient, run
from .threshold import classify, classify_burgers, classify_limit, classify_rescaled

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BOUND = 2
EXIT_SUBCRITICAL_BLOWUP = 3

WORKERS_ENV = "NONLOCAL_EULER_WORKERS"
BLOWUP_MARGIN = 1.2


class ExperimentError(RuntimeError):
    """Invalid input discovered while running; maps to the usage exit code."""


@dataclass
class Context:
    out: Path
    quiet: bool = False
    warnings: list[str] = field(default_factory=list)

    def say(self, msg: str) -> None:
        if not self.quiet:
            print(msg, file=sys.stderr, flush=True)

    def warn(self, msg: str) -> None:
        self.warnings.append(msg)
        print(f"warning: {msg}", file=sys.stderr, flush=True)


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ExperimentError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def _map(fn, jobs):
    """Ordered map, fanned out over processes when the worker count exceeds 1."""
    n = min(worker_count(), len(jobs))
    if n <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, jobs))


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def write_summary(ctx: Context, summary: dict) -> None:
    summary = dict(summary)
    summary["warnings"] = list(ctx.warnings)
    text = json.dumps(_clean(summary), indent=2, sort_keys=True, allow_nan=False)
    (ctx.out / "summary.json").write_text(text + "\n")


def write_rows(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in r])


# -- shared preparation -----------------------------------------------------------

def kernel_props(cfg: ExperimentConfig) -> KernelProps:
    try:
        return validate_kernel(cfg.kernel)
    except KernelHypothesisError as exc:
        raise ExperimentError(f"kernel fails its hypotheses: {exc}") from None


def padding_warnings(ctx: Context, init: State, grid: Grid1D, radius: float, t_end: float,
                     rtol: float = 1e-6) -> None:
    """Warn when non-periodic data varies within kernel support + travel distance of the wrap.

    Data that continues smoothly across the wrap is a genuine periodic
    problem and is not flagged.
    """
    margin = radius + t_end * float(np.max(np.abs(init.u)))
    x = grid.x
    strip = (x - grid.a < margin) | (grid.b - x < margin)
    if strip.all():
        ctx.warn(f"padding margin {margin:.4g} covers the whole domain; "
                 "the periodic wrap influences every cell")
        return
    for name, f in (("rho0", init.rho), ("u0", init.u)):
        interior = float(np.max(np.abs(np.diff(f)))) if f.size > 1 else 0.0
        if abs(f[0] - f[-1]) <= 3.0 * interior:
            continue
        scale = max(float(np.max(np.abs(f))), 1.0)
        edge = 0.5 * (f[0] + f[-1])
        if np.max(np.abs(f[strip] - edge)) > rtol * scale:
            ctx.warn(f"{name} varies within {margin:.4g} of the periodic wrap "
                     "(kernel support plus t_end*sup|u0|); widen the domain to keep "
                     "wrap effects out of the results")


def gmax_warning(ctx: Context, init: State, grid: Grid1D, scheme: SchemeConfig) -> None:
    cap = resolvable_gradient(init, grid)
    if scheme.G_max >= cap:
        ctx.warn(f"G_max={scheme.G_max:.4g} exceeds the largest gradient this grid can "
                 f"represent for the velocity range ({cap:.4g}); the threshold trigger "
                 "cannot fire")


def _run_job(job):
    init, scheme, spec, grid = job
    k = discretize_kernel(spec, grid) if spec is not None else None
    props = None
    if spec is not None and scheme.system != "limit":
        props = validate_kernel(spec)
    return run(init, scheme, k, grid, kprops=props)


def trajectory_summary(traj: Trajectory, verdict) -> dict:
    out = {"steps": traj.steps, "t_end_reached": traj.t_end_reached,
           "mass_drift": traj.mass_drift, "wall_time_ms": traj.wall_time_ms,
           "t_final": traj.final().t, "blowup": None}
    if traj.blowup is not None:
        b = traj.blowup.to_dict()
        if verdict is not None and verdict.blowup_upper_bound is not None:
            b["upper_bound"] = verdict.blowup_upper_bound
            b["within_bound"] = traj.blowup.t_blow <= BLOWUP_MARGIN * verdict.blowup_upper_bound
        out["blowup"] = b
    if traj.diagnostics is not None:
        out["diagnostics"] = traj.diagnostics.to_dict()
    return out


def exit_for_run(traj: Trajectory, verdict, summary: dict, ctx: Context) -> int:
    """Exit-code contract for a single simulation."""
    if traj.blowup is not None and verdict.subcritical:
        summary["failure"] = "blow-up detected on subcritical data"
        return EXIT_SUBCRITICAL_BLOWUP
    reasons = []
    if traj.diagnostics is not None and not traj.diagnostics.all_ok:
        reasons.append("a-priori bound violated")
    if verdict.blowup_upper_bound is not None:
        limit = BLOWUP_MARGIN * verdict.blowup_upper_bound
        if traj.blowup is not None and traj.blowup.t_blow > limit:
            reasons.append("blow-up later than the predicted upper bound")
        if traj.blowup is None and traj.final().t > limit:
            reasons.append("no blow-up detected past the predicted upper bound")
    if reasons:
        summary["failure"] = "; ".join(reasons)
        return EXIT_BOUND
    return EXIT_OK


def write_trajectory(ctx: Context, traj: Trajectory) -> None:
    grid = traj.grid
    snap_dir = ctx.out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    index = []
    for j, s in enumerate(traj.snapshots):
        name = f"snapshot_{j:04d}.csv"
        write_snapshot_csv(snap_dir / name, s, grid)
        index.append((j, s.t, name))
    write_rows(ctx.out / "snapshots.csv", ["index", "t", "file"],
               [(str(j), t, name) for j, t, name in index])
    plotting.plot_snapshots(ctx.out / "snapshots.png", grid.x, traj.snapshots)
    rep = traj.diagnostics
    if rep is not None:
        rows = zip(rep.times, rep.u_min, rep.u_max, rep.density_ratios, rep.ux_ratios,
                   rep.energy_Y)
        write_rows(ctx.out / "diagnostics.csv",
                   ["t", "u_min", "u_max", "density_ratio", "ux_ratio", "energy_Y"], rows)
        plotting.plot_diagnostics(ctx.out / "diagnostics.png",
                                  [{"t": t, "density_ratio": d, "ux_ratio": x}
                                   for t, d, x in zip(rep.times, rep.density_ratios,
                                                      rep.ux_ratios)])


# -- experiments --------------------------------------------------------------------

def exp_validate_kernel(cfg: ExperimentConfig, ctx: Context) -> int:
    tol = cfg.params["tol"]
    spec = cfg.kernel
    summary = {"experiment": "validate_kernel", "kernel": spec.to_dict(), "tol": tol}
    radius = support_radius(spec)
    x = np.linspace(-radius, radius, 801)
    q = eval_kernel(spec, x)
    write_rows(ctx.out / "kernel.csv", ["x", "Q"], zip(x, q))
    plotting.plot_kernel(ctx.out / "kernel.png", x, q, spec.family)
    try:
        props = validate_kernel(spec, tol=tol)
    except KernelHypothesisError as exc:
        summary.update(valid=False, violations=exc.violations)
        write_summary(ctx, summary)
        return EXIT_BOUND
    summary.update(valid=True, props=props.to_dict())
    write_summary(ctx, summary)
    return EXIT_OK


def exp_classify(cfg: ExperimentConfig, ctx: Context) -> int:
    grid = cfg.grid
    init = cfg.initial_state()
    v = classify(init, grid)
    variants = {"burgers": classify_burgers(init, grid).to_dict()}
    if cfg.params.get("eps") is not None:
        variants["rescaled"] = classify_rescaled(init, grid, cfg.params["eps"]).to_dict()
    if cfg.params.get("gamma") is not None:
        variants["limit"] = classify_limit(init, grid, cfg.params["gamma"]).to_dict()
    d0 = derivative(init.u, grid) + init.rho
    write_rows(ctx.out / "threshold.csv", ["x", "d0"], zip(grid.x, d0))
    plotting.plot_threshold(ctx.out / "threshold.png", grid.x, d0, v.tol_grid)
    write_summary(ctx, {"experiment": "classify", "verdict": v.kind,
                        "threshold": v.to_dict(), "variants": variants})
    return EXIT_OK


def _simulate(cfg: ExperimentConfig, ctx: Context, scheme: SchemeConfig):
    grid = cfg.grid
    props = kernel_props(cfg)
    init = cfg.initial_state()
    padding_warnings(ctx, init, grid, props.support_radius, scheme.t_end)
    verdict = classify(init, grid)
    if not verdict.subcritical:
        gmax_warning(ctx, init, grid, scheme)
    if verdict.marginal:
        ctx.warn(f"near-critical data: |d0_min|={abs(verdict.d0_min):.3g} "
                 f"is inside the grid tolerance {verdict.tol_grid:.3g}")
    ctx.say(f"classified {verdict.kind} (d0_min={verdict.d0_min:.6g}); running to t={scheme.t_end}")
    k = discretize_kernel(cfg.kernel, grid)
    traj = run(init, scheme, k, grid, kprops=props)
    ctx.say(f"finished after {traj.steps} steps at t={traj.final().t:.6g}")
    return traj, verdict, props


def exp_simulate(cfg: ExperimentConfig, ctx: Context) -> int:
    traj, verdict, props = _simulate(cfg, ctx, cfg.scheme)
    write_trajectory(ctx, traj)
    summary = {"experiment": "simulate", "verdict": verdict.kind,
               "threshold": verdict.to_dict(), "kernel": props.to_dict(),
               **trajectory_summary(traj, verdict)}
    code = exit_for_run(traj, verdict, summary, ctx)
    summary["exit_code"] = code
    write_summary(ctx, summary)
    return code


def exp_characteristics(cfg: ExperimentConfig, ctx: Context) -> int:
    p = cfg.params
    grid = cfg.grid
    scheme = cfg.scheme
    if not scheme.output_times:
        m = int(math.floor(scheme.t_end / p["snapshot_interval"] + 1e-9))
        times = tuple(p["snapshot_interval"] * np.arange(1, m + 1))
        scheme = SchemeConfig(scheme.cfl, scheme.t_end, scheme.max_steps, scheme.G_max,
                              times, scheme.system, scheme.eps, scheme.gamma)
    traj, verdict, props = _simulate(cfg, ctx, scheme)
    spacing = float(np.max(np.diff(traj.times))) if len(traj.snapshots) > 1 else scheme.t_end
    dt_ode = p["dt_ode"] or spacing / 4.0
    count = min(p["n_traces"], grid.n)
    alphas = grid.x[np.linspace(0, grid.n, count, endpoint=False).astype(int)]
    traces = integrate_characteristics(traj, alphas, dt_ode)
    t_max = p["t_max"] if p["t_max"] is not None else min(2.0, scheme.t_end)
    rep = consistency_check(traj, traces, math.inf, t_max=t_max)
    tol = p["rel_tol"] * rep.sup_d
    passed = rep.max_discrepancy < tol
    write_traces_csv(ctx.out / "traces.csv", traces)
    plotting.plot_traces(ctx.out / "traces.png", traces)
    write_trajectory(ctx, traj)
    blown = [tr.t_c_est for tr in traces if tr.t_c_est is not None]
    summary = {"experiment": "characteristics", "verdict": verdict.kind,
               "threshold": verdict.to_dict(), "kernel": props.to_dict(),
               "consistency": {"max_discrepancy": rep.max_discrepancy, "sup_d": rep.sup_d,
                               "tol": tol, "passed": passed, "compared": rep.compared,
                               "t_max": t_max, "dt_ode": dt_ode},
               "trace_blowup_min_t": min(blown) if blown else None,
               **trajectory_summary(traj, verdict)}
    code = exit_for_run(traj, verdict, summary, ctx)
    if code == EXIT_OK and not passed:
        summary["failure"] = "characteristic consistency check failed"
        code = EXIT_BOUND
    summary["exit_code"] = code
    write_summary(ctx, summary)
    return code


def exp_epsilon_sweep(cfg: ExperimentConfig, ctx: Context) -> int:
    p = cfg.params
    grid = cfg.grid
    props = kernel_props(cfg)
    init = cfg.initial_state()
    T = p["T_cmp"]
    gamma = limit_gamma(props.gamma)
    limit_scheme = SchemeConfig(cfl=cfg.scheme.cfl, t_end=T, max_steps=cfg.scheme.max_steps,
                                G_max=cfg.scheme.G_max, system="limit", gamma=gamma)
    jobs = [(init, limit_scheme, None, grid)]
    labels = ["limit"]
    rows_meta = []
    for eps in p["eps_list"]:
        spec = rescale_kernel(cfg.kernel, eps)
        try:
            discretize_kernel(spec, grid)
        except ValueError as exc:
            rows_meta.append((eps, f"kernel: {exc}"))
            continue
        scheme = SchemeConfig(cfl=cfg.scheme.cfl, t_end=T, max_steps=cfg.scheme.max_steps,
                              G_max=cfg.scheme.G_max, system="rescaled", eps=eps)
        jobs.append((init, scheme, spec, grid))
        labels.append(eps)
        rows_meta.append((eps, None))
    ctx.say(f"running {len(jobs)} simulations to T_cmp={T} (limit gamma={gamma:.6g})")
    trajs = dict(zip(labels, _map(_run_job, jobs)))

    lim = trajs["limit"]
    rows, table = [], []
    flags = {}
    if not lim.t_end_reached:
        flags["limit"] = "limit system broke down before T_cmp"
    for eps, err in rows_meta:
        if err is None and not trajs[eps].t_end_reached:
            err = "blow-up before T_cmp"
        if err is None and "limit" in flags:
            err = flags["limit"]
        if err is not None:
            flags[fmt(eps)] = err
            rows.append((eps, math.nan, math.nan))
            continue
        f, g = trajs[eps].final(), lim.final()
        rows.append((eps, float(np.max(np.abs(f.rho - g.rho))), float(np.max(np.abs(f.u - g.u)))))
        ctx.say(f"eps={eps:g}: sup err rho={rows[-1][1]:.3e}, u={rows[-1][2]:.3e}")
    write_rows(ctx.out / "error_vs_eps.csv", ["eps", "sup_err_rho", "sup_err_u"], rows)
    good = [r for r in rows if not math.isnan(r[1])]
    if good:
        plotting.plot_error_vs_eps(ctx.out / "error_vs_eps.png", [r[0] for r in good],
                                   [r[1] for r in good], [r[2] for r in good])
    combined = [max(r[1], r[2]) for r in good]
    monotone = all(b <= a for a, b in zip(combined, combined[1:]))
    summary = {"experiment": "epsilon_sweep", "T_cmp": T, "kernel": props.to_dict(),
               "limit_gamma": gamma,
               "limit_threshold": classify_limit(init, grid, gamma).to_dict(),
               "rows": [{"eps": e, "sup_err_rho": r, "sup_err_u": u} for e, r, u in rows],
               "flags": flags, "nonincreasing": monotone}
    code = EXIT_OK
    if flags or not monotone:
        summary["failure"] = "sweep incomplete" if flags else "differences not nonincreasing in eps"
        code = EXIT_BOUND
    summary["exit_code"] = code
    write_summary(ctx, summary)
    return code


def direct_discretization_error(init_fn, spec, grid: Grid1D, scheme: SchemeConfig):
    """Direct solution at ``grid`` and its sup-norm distance to the 2n solution."""
    fine = grid.refine(2)
    coarse_traj, fine_traj = _map(_run_job, [(init_fn(grid), scheme, spec, grid),
                                             (init_fn(fine), scheme, spec, fine)])
    c, f = coarse_traj.final(), fine_traj.final()
    err = max(float(np.max(np.abs(restrict(f.rho) - c.rho))),
              float(np.max(np.abs(restrict(f.u) - c.u))))
    return coarse_traj, err


def exp_picard(cfg: ExperimentConfig, ctx: Context) -> int:
    p = cfg.params
    grid = cfg.grid
    props = kernel_props(cfg)
    init = cfg.initial_state()
    k = discretize_kernel(cfg.kernel, grid)
    pcfg = PicardConfig(T_iter=p["T_iter"], max_iters=p["max_iters"],
                        tol_fixed_point=p["tol_fixed_point"], scheme=cfg.scheme)
    summary = {"experiment": "picard", "kernel": props.to_dict()}
    try:
        res = picard_solve(init, k, grid, pcfg, beta=props.beta)
    except NonContraction as exc:
        summary.update(failure=str(exc), T_iter=exc.T_iter, ratios=exc.ratios,
                       exit_code=EXIT_BOUND)
        write_summary(ctx, summary)
        return EXIT_BOUND
    ctx.say(f"fixed point after {res.iters} iterations at T_iter={res.T_iter_used:.6g}")
    scheme = SchemeConfig(cfl=cfg.scheme.cfl, t_end=res.T_iter_used)
    direct, disc = direct_discretization_error(cfg.initial_state, cfg.kernel, grid, scheme)
    f = direct.final()
    agreement = max(float(np.max(np.abs(res.rho[-1] - f.rho))),
                    float(np.max(np.abs(res.u[-1] - f.u))))
    rows = [(str(i + 1), d, res.ratios[i - 1] if 0 < i <= len(res.ratios) else math.nan)
            for i, d in enumerate(res.deltas)]
    write_rows(ctx.out / "picard.csv", ["iter", "delta", "ratio"], rows)
    plotting.plot_picard(ctx.out / "picard.png", res.deltas)
    summary.update(res.report(agreement))
    summary["direct_discretization_error"] = disc
    summary["agreement_ok"] = agreement <= 5.0 * disc
    code = EXIT_OK
    if not (res.density_bound_ok and res.max_principle_ok):
        summary["failure"] = "iterate bounds violated"
        code = EXIT_BOUND
    summary["exit_code"] = code
    write_summary(ctx, summary)
    return code


def l1_self_errors(finals: list[State], grids: list[Grid1D]):
    """L1 distances between consecutive grids after restricting the finer field."""
    out = []
    for (c, gc), (f, gf) in zip(zip(finals, grids), zip(finals[1:], grids[1:])):
        r = gf.n // gc.n
        out.append((gc.dx * float(np.sum(np.abs(restrict(f.rho, r) - c.rho))),
                    gc.dx * float(np.sum(np.abs(restrict(f.u, r) - c.u)))))
    return out


def observed_orders(errors, ratios):
    orders = []
    for (e0, e1), r in zip(zip(errors, errors[1:]), ratios):
        orders.append(tuple(math.log(a / b) / math.log(r) if a > 0 and b > 0 else math.nan
                            for a, b in zip(e0, e1)))
    return orders


def exp_convergence(cfg: ExperimentConfig, ctx: Context) -> int:
    ns = cfg.params["grid_list"]
    props = kernel_props(cfg)
    grids = [Grid1D(cfg.grid.a, cfg.grid.b, n) for n in ns]
    inits = [cfg.initial_state(g) for g in grids]
    verdict = classify(inits[-1], grids[-1])
    ctx.say(f"running {len(grids)} grids to t={cfg.scheme.t_end}")
    trajs = _map(_run_job, [(i, cfg.scheme, cfg.kernel, g) for i, g in zip(inits, grids)])
    summary = {"experiment": "convergence", "verdict": verdict.kind, "kernel": props.to_dict(),
               "grid_list": ns}
    if any(t.blowup is not None or not t.t_end_reached for t in trajs):
        summary["failure"] = "a run stopped before t_end"
        code = EXIT_SUBCRITICAL_BLOWUP if verdict.subcritical else EXIT_BOUND
        summary["exit_code"] = code
        write_summary(ctx, summary)
        return code
    errors = l1_self_errors([t.final() for t in trajs], grids)
    ratios = [b // a for a, b in zip(ns[1:], ns[2:])]
    orders = observed_orders(errors, ratios)
    rows = []
    for i, (er, eu) in enumerate(errors):
        o = orders[i - 1] if i > 0 else (math.nan, math.nan)
        rows.append((str(ns[i]), grids[i].dx, er, eu, o[0], o[1]))
    write_rows(ctx.out / "convergence.csv",
               ["n", "dx", "l1_err_rho", "l1_err_u", "order_rho", "order_u"], rows)
    plotting.plot_convergence(ctx.out / "convergence.png", [g.dx for g in grids[:-1]],
                              [e[0] for e in errors], [e[1] for e in errors])
    summary["errors"] = [{"n": n, "l1_err_rho": e[0], "l1_err_u": e[1]}
                         for n, e in zip(ns, errors)]
    summary["orders"] = [{"order_rho": o[0], "order_u": o[1]} for o in orders]
    summary["min_order"] = min((min(o) for o in orders), default=None)
    code = EXIT_OK
    if not all(t.diagnostics is None or t.diagnostics.all_ok for t in trajs):
        summary["failure"] = "a-priori bound violated"
        code = EXIT_BOUND
    summary["exit_code"] = code
    write_summary(ctx, summary)
    return code


RUNNERS = {
    "validate_kernel": exp_validate_kernel,
    "classify": exp_classify,
    "simulate": exp_simulate,
    "characteristics": exp_characteristics,
    "epsilon_sweep": exp_epsilon_sweep,
    "picard": exp_picard,
    "convergence": exp_convergence,
}


def run_experiment(cfg: ExperimentConfig, out_dir, quiet: bool = False) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(out, quiet)
    started = time.perf_counter()
    code = RUNNERS[cfg.experiment](cfg, ctx)
    ctx.say(f"{cfg.experiment}: exit {code} in {time.perf_counter() - started:.2f}s, "
            f"outputs in {out}")
    return code
