"""Interaction kernels Q, their structural checks and derived constants.

A kernel is described by a :class:`KernelSpec`.  Parametric families are
normalized to unit mass analytically; tabulated kernels are evaluated by
linear interpolation and must be normalized by the caller (see
:func:`asymmetric_bump_table` for a ready-made one).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import k1

TRUNCATION_FLOOR = 1e-14

FAMILIES = ("gaussian", "tent", "exponential-smoothed", "table")

# 2*K1(1): integral of exp(-sqrt(1+s^2)) over the real line
_EXP_SMOOTH_NORM = 2.0 * float(k1(1.0))


class KernelSpecError(ValueError):
    """The kernel description itself is malformed."""


class KernelHypothesisError(ValueError):
    """A kernel violates one or more structural hypotheses.

    ``violations`` holds the names of the failed checks, drawn from
    ``negative``, ``asymmetric``, ``nonmonotone`` and ``mass``.
    """

    def __init__(self, violations: dict[str, float]):
        self.violations = dict(violations)
        detail = ", ".join(f"{k} (worst {v:.3e})" for k, v in self.violations.items())
        super().__init__(f"kernel hypotheses violated: {detail}")


@dataclass(frozen=True)
class KernelSpec:
    family: str
    width: float = 1.0
    table: tuple[tuple[float, float], ...] | None = None
    allow_asymmetric: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise KernelSpecError(f"unknown kernel family {self.family!r}")
        if not (self.width > 0 and math.isfinite(self.width)):
            raise KernelSpecError(f"kernel width must be positive, got {self.width}")
        if self.family == "table":
            if self.table is None or len(self.table) < 2:
                raise KernelSpecError("table kernel needs at least two (x, Q) samples")
            tab = tuple((float(x), float(q)) for x, q in self.table)
            xs = np.array([p[0] for p in tab])
            qs = np.array([p[1] for p in tab])
            if not np.all(np.isfinite(xs)) or not np.all(np.diff(xs) > 0):
                raise KernelSpecError("table x values must be finite and strictly increasing")
            if not np.all(np.isfinite(qs)) or np.any(qs < 0):
                raise KernelSpecError("table Q values must be finite and nonnegative")
            object.__setattr__(self, "table", tab)
        elif self.table is not None:
            raise KernelSpecError(f"family {self.family!r} does not take a table")

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        table = d.get("table")
        if table is not None:
            table = tuple((float(x), float(q)) for x, q in table)
        return cls(
            family=d["family"],
            width=float(d.get("width", 1.0)),
            table=table,
            allow_asymmetric=bool(d.get("allow_asymmetric", False)),
        )

    def to_dict(self) -> dict:
        out = {"family": self.family, "width": self.width,
               "allow_asymmetric": self.allow_asymmetric}
        if self.table is not None:
            out["table"] = [list(p) for p in self.table]
        return out

    def _table_arrays(self):
        xs = np.array([p[0] for p in self.table])
        qs = np.array([p[1] for p in self.table])
        return xs, qs


@dataclass(frozen=True)
class KernelProps:
    mass: float
    beta: float
    gamma: float
    support_radius: float

    def to_dict(self) -> dict:
        return {"mass": self.mass, "beta": self.beta, "gamma": self.gamma,
                "support_radius": self.support_radius}


def eval_kernel(spec: KernelSpec, x):
    """Evaluate Q at ``x`` (scalar or array)."""
    x = np.asarray(x, dtype=float)
    w = spec.width
    if spec.family == "gaussian":
        q = np.exp(-0.5 * (x / w) ** 2) / (w * math.sqrt(2.0 * math.pi))
    elif spec.family == "tent":
        q = np.maximum(0.0, 1.0 - np.abs(x) / w) / w
    elif spec.family == "exponential-smoothed":
        q = np.exp(-np.sqrt(1.0 + (x / w) ** 2)) / (w * _EXP_SMOOTH_NORM)
    else:
        xs, qs = spec._table_arrays()
        q = np.interp(x, xs, qs, left=0.0, right=0.0)
    return float(q) if q.ndim == 0 else q


def support_radius(spec: KernelSpec, floor: float = TRUNCATION_FLOOR) -> float:
    """Smallest R with Q(x) < floor for all |x| > R."""
    w = spec.width
    if spec.family == "gaussian":
        peak = 1.0 / (w * math.sqrt(2.0 * math.pi))
        if peak <= floor:
            return 0.0
        return w * math.sqrt(2.0 * math.log(peak / floor))
    if spec.family == "tent":
        return w
    if spec.family == "exponential-smoothed":
        c = math.log(1.0 / (floor * w * _EXP_SMOOTH_NORM))
        return w * math.sqrt(max(c * c - 1.0, 0.0))
    xs, qs = spec._table_arrays()
    above = qs >= floor
    # linear interpolation stays above the floor up to the neighbouring node
    live = above.copy()
    live[1:] |= above[:-1]
    live[:-1] |= above[1:]
    if not live.any():
        return 0.0
    return float(np.max(np.abs(xs[live])))


def quadrature_nodes(spec: KernelSpec, dx: float, radius: float | None = None) -> np.ndarray:
    """Symmetric uniform nodes j*dx covering the support, plus table breakpoints."""
    if radius is None:
        radius = support_radius(spec)
    m = int(math.ceil(radius / dx)) + 1
    x = np.arange(-m, m + 1) * dx
    if spec.family == "table":
        xs, _ = spec._table_arrays()
        x = np.union1d(x, xs)
    return x


def validate_kernel(spec: KernelSpec, tol: float = 1e-8, dx: float | None = None) -> KernelProps:
    """Check nonnegativity, evenness, radial monotonicity and unit mass.

    ``dx`` is the quadrature spacing; it defaults to support_radius/256.
    Raises :class:`KernelHypothesisError` listing every failed check.
    """
    radius = support_radius(spec)
    if radius <= 0:
        raise KernelSpecError("kernel has empty support above the truncation floor")
    if dx is None:
        dx = radius / 256.0
    m = int(math.ceil(radius / dx)) + 1
    j = np.arange(-m, m + 1)
    xu = j * dx
    qu = eval_kernel(spec, xu)

    violations: dict[str, float] = {}
    if qu.min() < -tol:
        violations["negative"] = float(-qu.min())

    if not spec.allow_asymmetric:
        asym = float(np.max(np.abs(qu - qu[::-1])))
        if asym > tol:
            violations["asymmetric"] = asym

    right = qu[m:]
    rise = float(np.max(np.diff(right), initial=0.0))
    if spec.allow_asymmetric:
        left = qu[: m + 1][::-1]
        rise = max(rise, float(np.max(np.diff(left), initial=0.0)))
    if rise > tol:
        violations["nonmonotone"] = rise

    x = quadrature_nodes(spec, dx, radius)
    q = eval_kernel(spec, x)
    mass = float(np.trapezoid(q, x))
    if abs(mass - 1.0) > tol:
        violations["mass"] = abs(mass - 1.0)

    if violations:
        raise KernelHypothesisError(violations)

    gamma = float(np.trapezoid(x * q, x))
    tv = float(np.sum(np.abs(np.diff(np.concatenate(([0.0], q, [0.0]))))))
    return KernelProps(mass=mass, beta=mass + tv, gamma=gamma, support_radius=radius)


def rescale_kernel(spec: KernelSpec, eps: float) -> KernelSpec:
    """Kernel evaluating to Q(x/eps)/eps."""
    if not eps > 0:
        raise KernelSpecError(f"eps must be positive, got {eps}")
    if spec.family == "table":
        table = tuple((x * eps, q / eps) for x, q in spec.table)
        return replace(spec, table=table)
    return replace(spec, width=spec.width * eps)


def asymmetric_bump_table(left: float, right: float, samples: int = 2001) -> tuple:
    """Normalized cos^2 bump peaked at 0 with different left/right half-widths.

    Q(y) = h cos^2(pi y / (2 right)) on [0, right] and h cos^2(pi y / (2 left))
    on [-left, 0], with h = 2 / (left + right).  Its first moment is
    h (right^2 - left^2) (1/4 - 1/pi^2).
    """
    h = 2.0 / (left + right)
    y = np.concatenate((np.linspace(-left, 0.0, samples)[:-1], np.linspace(0.0, right, samples)))
    half = np.where(y < 0, left, right)
    q = h * np.cos(0.5 * np.pi * y / half) ** 2
    q[0] = q[-1] = 0.0
    q /= np.trapezoid(q, y)
    return tuple(zip(y.tolist(), q.tolist()))
