"""Measurement layer: weighted ball energies, oscillation seminorms,
log-log growth fits, sub-mean-value monotonicity checks, the dyadic
iteration lemma, and thin-gradient traces.

Conventions: ball quantities refer to the full reflected ball (twice the
upper-half integral).  Discrete gradients are centered differences in x on
each layer; the cell quadrature clips cells to the ball and integrates the
|y|^a factor exactly in y.  The admissible radius window is
[8 * h_max, R_domain / 4]: below it discretization noise dominates, above
it boundary effects contaminate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BallOutsideDomain,
    HypothesisFailed,
    NoConvergence,
    ParameterError,
    WindowTooSmall,
)
from .grids import Grid, GridField
from .weights import (
    BallSpec,
    WeightParam,
    clipped_ball_quadrature,
    weighted_ball_average,
    weighted_volume,
)

__all__ = [
    "GrowthFit",
    "HLParams",
    "RadiiSpec",
    "ball_energy",
    "campanato_seminorm",
    "fit_growth",
    "fit_loglog",
    "monotonicity_check",
    "MonotonicityReport",
    "hl_iterate",
    "HLReport",
    "gradient_trace",
    "cell_gradients",
    "thin_gradient_fields",
    "weighted_normal_field",
]


@dataclass(frozen=True)
class RadiiSpec:
    """Geometric radius ladder inside the admissible window."""

    r_min: float
    r_max: float
    count: int = 8

    def radii(self) -> np.ndarray:
        if self.count < 2 or self.r_min <= 0 or self.r_max <= self.r_min:
            raise ParameterError(f"bad radius ladder {self}")
        return np.geomspace(self.r_min, self.r_max, self.count)

    @classmethod
    def admissible(cls, grid: Grid, center=None, count: int = 8,
                   h_factor: float = 8.0) -> "RadiiSpec":
        """Window [h_factor * h_max, R_domain / 4] around a thin center."""
        c = np.zeros(grid.n) if center is None else np.atleast_1d(np.asarray(center, float))
        r_dom = min(
            min(c[k] - grid.x_min[k], grid.x_max[k] - c[k]) for k in range(grid.n)
        )
        r_dom = min(r_dom, grid.y_max)
        lo = h_factor * grid.hmax
        hi = r_dom / 4.0
        if hi <= lo:
            raise WindowTooSmall(
                f"admissible window empty: [{lo:.4g}, {hi:.4g}] at center {tuple(c)}"
            )
        return cls(lo, hi, count)


def cell_gradients(u: GridField) -> list:
    """Cell-centered first differences along every axis (x axes, then y)."""
    v = u.values
    nd = v.ndim
    grid = u.grid
    hs = list(grid.hx) + [grid.hy]
    grads = []
    for axis in range(nd):
        lo = [slice(None)] * nd
        hi = [slice(None)] * nd
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        g = (v[tuple(hi)] - v[tuple(lo)]) / hs[axis]
        # average over the remaining axes to land on cell centers
        for other in range(nd):
            if other == axis:
                continue
            lo2 = [slice(None)] * nd
            hi2 = [slice(None)] * nd
            lo2[other] = slice(None, -1)
            hi2[other] = slice(1, None)
            g = 0.5 * (g[tuple(lo2)] + g[tuple(hi2)])
        grads.append(g)
    return grads


def thin_gradient_fields(u: GridField) -> list:
    """Nodal centered x-differences per layer, as GridFields (one per axis)."""
    v = u.values
    grid = u.grid
    out = []
    for axis in range(grid.n):
        g = np.zeros_like(v)
        lo = [slice(None)] * v.ndim
        hi = [slice(None)] * v.ndim
        ce = [slice(None)] * v.ndim
        lo[axis] = slice(None, -2)
        hi[axis] = slice(2, None)
        ce[axis] = slice(1, -1)
        g[tuple(ce)] = (v[tuple(hi)] - v[tuple(lo)]) / (2.0 * grid.hx[axis])
        # one-sided at the two x-faces keeps the field defined everywhere
        first = [slice(None)] * v.ndim
        second = [slice(None)] * v.ndim
        first[axis] = 0
        second[axis] = 1
        g[tuple(first)] = (v[tuple(second)] - v[tuple(first)]) / grid.hx[axis]
        first[axis] = -1
        second[axis] = -2
        g[tuple(first)] = (v[tuple(first)] - v[tuple(second)]) / grid.hx[axis]
        out.append(GridField(grid, g))
    return out


def weighted_normal_field(u: GridField, w: WeightParam) -> GridField:
    """y^a * d_y u as a field: centered differences, thin-flux at y = 0.

    Even in y; its natural geometry is the flipped weight -a.
    """
    from .solver import thin_flux

    v = u.values
    grid = u.grid
    ys = grid.y_nodes
    g = np.zeros_like(v)
    g[..., 1:-1] = (v[..., 2:] - v[..., :-2]) / (2.0 * grid.hy)
    g[..., -1] = (v[..., -1] - v[..., -2]) / grid.hy
    g[..., 1:] *= ys[1:] ** w.af
    g[..., 0] = thin_flux(u, w)
    return GridField(grid, g)


def ball_energy(u: GridField, ball: BallSpec, w: WeightParam,
                mode: str = "full") -> float:
    """Weighted squared-gradient energy over the reflected ball.

    mode selects |grad u|^2 (full), |grad_x u|^2 (tangential) or |d_y u|^2
    (normal).
    """
    if mode not in ("full", "tangential", "normal"):
        raise ParameterError(f"unknown energy mode {mode!r}")
    _check_ball(u.grid, ball)
    grads = cell_gradients(u)
    n = u.grid.n
    if mode == "tangential":
        integrand = sum(g**2 for g in grads[:n])
    elif mode == "normal":
        integrand = grads[n] ** 2
    else:
        integrand = sum(g**2 for g in grads)
    return 2.0 * clipped_ball_quadrature(u.grid, ball, w, integrand)


def _check_ball(grid: Grid, ball: BallSpec):
    r = float(ball.radius)
    for k, ax in enumerate(grid.x_axes):
        c = ball.center[k]
        if c - r < ax[0] - 1e-12 or c + r > ax[-1] + 1e-12:
            raise BallOutsideDomain(f"ball r={r} at {ball.center} leaves axis {k}")
    if r > grid.y_max + 1e-12:
        raise BallOutsideDomain(f"ball r={r} exceeds grid height {grid.y_max}")


def campanato_seminorm(u: GridField, ball: BallSpec, w: WeightParam) -> float:
    """Mean-oscillation energy of the thin gradient over the ball.

    integral over B_r of |grad_x u - <grad_x u>|^2 |y|^a with the weighted
    ball mean subtracted componentwise.
    """
    _check_ball(u.grid, ball)
    total = 0.0
    for g in thin_gradient_fields(u):
        mean = weighted_ball_average(g, ball, w)
        vals = (g.cell_values() - mean) ** 2
        total += clipped_ball_quadrature(u.grid, ball, w, vals)
    return 2.0 * total


@dataclass
class GrowthFit:
    """Log-log regression of a radial functional against radius."""

    radii: np.ndarray
    values: np.ndarray
    slope: float
    intercept: float
    residual: float
    window: tuple

    def to_rows(self):
        rows = []
        logs = np.log(self.values)
        logr = np.log(self.radii)
        for i in range(len(self.radii)):
            local = (
                (logs[i + 1] - logs[i]) / (logr[i + 1] - logr[i])
                if i + 1 < len(self.radii)
                else float("nan")
            )
            rows.append((float(self.radii[i]), float(self.values[i]), local))
        return rows


def fit_loglog(radii: np.ndarray, values: np.ndarray) -> GrowthFit:
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(radii) < 6:
        raise WindowTooSmall(f"need at least 6 radii for a growth fit, got {len(radii)}")
    if np.any(values <= 0):
        raise ParameterError("growth fit needs strictly positive values")
    lr, lv = np.log(radii), np.log(values)
    slope, intercept = np.polyfit(lr, lv, 1)
    resid = float(np.max(np.abs(lv - (slope * lr + intercept))))
    return GrowthFit(radii, values, float(slope), float(intercept), resid,
                     (float(radii[0]), float(radii[-1])))


_FUNCTIONALS = {
    "full": lambda u, b, w: ball_energy(u, b, w, "full"),
    "tangential": lambda u, b, w: ball_energy(u, b, w, "tangential"),
    "normal": lambda u, b, w: ball_energy(u, b, w, "normal"),
    "oscillation": campanato_seminorm,
}


def _poly_energy(p, ball: BallSpec, w: WeightParam, mode: str) -> float:
    from .weights import ball_moment_fraction, kappa

    n = p.n
    if mode == "tangential":
        parts = [p.diff(k) for k in range(n)]
    elif mode == "normal":
        parts = [p.diff(n)]
    else:
        parts = [p.diff(k) for k in range(n + 1)]
    r = ball.radius
    total = 0.0
    base = w.n + 1 + w.af
    for g in parts:
        sq = g * g
        for mono, c in sq.coeffs.items():
            f = ball_moment_fraction(w, mono)
            if f:
                total += float(c) * float(f) * r ** (base + sum(mono))
    return total * kappa(w)


def fit_growth(u, center, radii_spec: RadiiSpec, functional: str,
               w: WeightParam) -> GrowthFit:
    """Fitted growth exponent of a ball functional over the radius ladder.

    `u` is a GridField (quadrature path) or a WeightedPoly (exact moment
    path); `functional` is full | tangential | normal | oscillation.
    """
    if functional not in _FUNCTIONALS:
        raise ParameterError(f"unknown functional {functional!r}")
    radii = radii_spec.radii()
    if len(radii) < 6:
        raise WindowTooSmall("fit_growth needs at least 6 radii")
    vals = []
    for r in radii:
        ball = BallSpec(tuple(np.atleast_1d(center)), float(r))
        if isinstance(u, GridField):
            vals.append(_FUNCTIONALS[functional](u, ball, w))
        else:
            if functional == "oscillation":
                mean_removed = _poly_center_gradient_removed(u, ball, w)
                vals.append(_poly_energy(mean_removed, ball, w, "tangential"))
            else:
                vals.append(_poly_energy(u, ball, w, functional))
    return fit_loglog(radii, np.array(vals))


def _poly_center_gradient_removed(p, ball: BallSpec, w: WeightParam):
    from .poly import WeightedPoly
    from .weights import weighted_ball_average_exact

    out = p
    for k in range(p.n):
        g = p.diff(k)
        mean = weighted_ball_average_exact(g, ball, w)
        key = [0] * (p.n + 1)
        key[k] = 1
        out = out - WeightedPoly.monomial(p.n, tuple(key), mean)
    return out


@dataclass
class MonotonicityReport:
    radii: np.ndarray
    values: np.ndarray
    exponent: float
    scaled: np.ndarray
    violations: list
    slack: float

    @property
    def passed(self) -> bool:
        return not self.violations


def monotonicity_check(u, center, radii_spec: RadiiSpec, exponent: float,
                       functional: str, w: WeightParam,
                       slack: float = 1e-3) -> MonotonicityReport:
    """Verify r -> r^{-exponent} * functional(r) is nondecreasing (sub-mean
    value property); relative dips up to `slack` between consecutive radii
    are tolerated, larger ones are recorded as violations.
    """
    radii = radii_spec.radii()
    vals = []
    for r in radii:
        ball = BallSpec(tuple(np.atleast_1d(center)), float(r))
        vals.append(_FUNCTIONALS[functional](u, ball, w))
    vals = np.array(vals)
    scaled = vals / radii**exponent
    violations = []
    for i in range(len(radii) - 1):
        ref = max(abs(scaled[i]), 1e-300)
        if scaled[i + 1] < scaled[i] - slack * ref:
            violations.append((float(radii[i]), float(radii[i + 1]),
                               float(scaled[i]), float(scaled[i + 1])))
    return MonotonicityReport(radii, vals, exponent, scaled, violations, slack)


# ---------------------------------------------------------------------------
# Dyadic iteration lemma
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HLParams:
    """Parameters of the dyadic iteration lemma."""

    a_hl: float
    gamma: float
    beta: float
    b_hl: float = 0.0
    r0: float = 1.0

    def __post_init__(self):
        if not (self.gamma > self.beta > 0):
            raise ParameterError(f"need gamma > beta > 0, got {self.gamma}, {self.beta}")
        if self.a_hl <= 0 or self.b_hl < 0 or self.r0 <= 0:
            raise ParameterError("need a > 0, b >= 0, r0 > 0")


@dataclass
class HLReport:
    epsilon_used: float
    tau: float
    beta_prime: float
    c_out: float
    hypothesis_ok: bool
    bound_curve: np.ndarray
    witness: tuple | None


def hl_iterate(radii, phi, p: HLParams) -> HLReport:
    """Check the iteration-lemma hypothesis on all sampled pairs and verify
    the concluded decay bound with explicit constants.

    epsilon comes from the standard dyadic choice: tau with
    2 a tau^gamma <= tau^{beta'} (beta' the midpoint of beta and gamma) and
    epsilon = tau^gamma; the output constant is
    c = tau^{-2 beta} (1 + 1/(1 - tau^{beta'-beta})).
    Raises HypothesisFailed with the violating pair; nondecreasing input is
    part of the hypothesis.
    """
    radii = np.asarray(radii, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if radii.ndim != 1 or radii.shape != phi.shape or len(radii) < 2:
        raise ParameterError("need matching 1-d radius/value samples")
    if np.any(np.diff(radii) <= 0):
        raise ParameterError("radii must be strictly increasing")
    if np.any(radii >= p.r0) or np.any(radii <= 0):
        raise ParameterError("samples must lie in (0, r0)")
    if np.any(phi < 0):
        raise ParameterError("phi must be nonnegative")

    beta_prime = 0.5 * (p.beta + p.gamma)
    tau = min(0.5, (2.0 * p.a_hl) ** (-1.0 / (p.gamma - beta_prime)))
    eps = tau**p.gamma
    c_out = tau ** (-2.0 * p.beta) * (1.0 + 1.0 / (1.0 - tau ** (beta_prime - p.beta)))

    for i in range(len(radii)):
        for j in range(i, len(radii)):
            rho, r = radii[i], radii[j]
            if i < j and phi[j] < phi[i] * (1.0 - 1e-12):
                raise HypothesisFailed(
                    f"phi not nondecreasing at ({rho:.4g}, {r:.4g})",
                    witness=(float(rho), float(r)),
                )
            bound = p.a_hl * ((rho / r) ** p.gamma + eps) * phi[j] + p.b_hl * r**p.beta
            if phi[i] > bound * (1.0 + 1e-12):
                raise HypothesisFailed(
                    f"hypothesis fails at (rho={rho:.4g}, r={r:.4g}): "
                    f"{phi[i]:.4g} > {bound:.4g}",
                    witness=(float(rho), float(r)),
                )

    r_top = radii[-1]
    curve = c_out * ((radii / r_top) ** p.beta * phi[-1] + p.b_hl * radii**p.beta)
    ok = bool(np.all(phi <= curve * (1.0 + 1e-12)))
    if not ok:
        raise NoConvergence("concluded bound curve fails pointwise; constants inconsistent")
    return HLReport(float(eps), float(tau), float(beta_prime), float(c_out),
                    True, curve, None)


# ---------------------------------------------------------------------------
# Trace of the thin gradient by shrinking averages
# ---------------------------------------------------------------------------


@dataclass
class TraceResult:
    value: np.ndarray
    radii: np.ndarray
    averages: np.ndarray
    cauchy_rates: np.ndarray
    error_estimate: float


def gradient_trace(u: GridField, point, radii_spec: RadiiSpec, w: WeightParam,
                   fields: list | None = None, rtol: float = 0.35) -> TraceResult:
    """Limit of weighted ball averages of the thin gradient at a thin point.

    Averages over the shrinking ladder are extrapolated by a power-law fit
    of their differences; NoConvergence when the differences do not decay.
    `fields` overrides the default thin-gradient components (e.g. the
    weighted normal derivative in the flipped geometry).
    """
    comps = fields if fields is not None else thin_gradient_fields(u)
    radii = radii_spec.radii()[::-1]  # descending
    table = np.empty((len(comps), len(radii)))
    for ci, g in enumerate(comps):
        for ri, r in enumerate(radii):
            table[ci, ri] = weighted_ball_average(
                g, BallSpec(tuple(np.atleast_1d(point)), float(r)), w
            )
    diffs = np.abs(np.diff(table, axis=1))
    scale = max(float(np.max(np.abs(table))), 1e-300)
    rates = np.full(len(comps), np.nan)
    values = table[:, -1].copy()
    err = 0.0
    for ci in range(len(comps)):
        d = diffs[ci]
        nz = d > 1e-14 * scale
        if nz.sum() >= 2:
            # fit d_k ~ C q^k; q < 1 required for a Cauchy ladder
            dk = np.log(d[nz])
            ks = np.arange(len(d))[nz]
            q = math.exp(np.polyfit(ks, dk, 1)[0])
            rates[ci] = q
            if q >= 1.0 - 1e-9:
                if d[-1] > rtol * scale:
                    raise NoConvergence(
                        f"averages not Cauchy at {point}: last diff {d[-1]:.3e}"
                    )
                err = max(err, float(d[-1]))
            else:
                tail = float(d[-1]) * q / (1.0 - q)
                values[ci] = table[ci, -1] + math.copysign(
                    tail, table[ci, -1] - table[ci, -2]
                )
                err = max(err, tail + float(d[-1]))
        else:
            err = max(err, float(d[-1]) if len(d) else 0.0)
    return TraceResult(values, radii, table, rates, err)
