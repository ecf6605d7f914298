"""Geometry of the |y|^a weight: moments, weighted volumes, ball averages.

Coordinates are X = (x_1..x_n, y) in R^{n+1}; the weight |y|^a with
a = 1 - 2s in (-1, 1) degenerates (a > 0) or blows up (a < 0) on the thin
space {y = 0}.  Every nonzero moment of a monomial over the weighted unit
sphere is a rational multiple of one transcendental constant

    kappa(n, a) = 2 pi^{n/2} Gamma((a+1)/2) / Gamma((n+1+a)/2),

so with rational a all moment *ratios* (hence Gram matrices, mean values,
averages) are exact rationals.  The `*_fraction` functions return the
rational coefficient of kappa; the plain functions return floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np

from .errors import BallOutsideDomain, ParameterError

__all__ = [
    "WeightParam",
    "MonomialExponent",
    "BallSpec",
    "kappa",
    "sphere_moment",
    "sphere_moment_fraction",
    "ball_moment",
    "ball_moment_fraction",
    "weighted_volume",
    "weighted_ball_average",
    "weighted_ball_average_exact",
    "y_interval_mass",
    "clipped_ball_quadrature",
]

_Rat = (int, Fraction)


@dataclass(frozen=True)
class WeightParam:
    """The triple (n, s, a = 1 - 2s); single source of truth for the weight.

    s and a are kept together and validated for mutual consistency.  When
    either is supplied as a Fraction the pair is exact and downstream
    modules may run in exact rational arithmetic.
    """

    n: int
    s: object
    a: object

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise ParameterError(f"thin dimension must be a positive integer, got {self.n!r}")
        sf, af = float(self.s), float(self.a)
        if not 0.0 < sf < 1.0:
            raise ParameterError(f"s must lie in (0, 1), got {sf}")
        if not -1.0 < af < 1.0:
            raise ParameterError(f"a must lie in (-1, 1), got {af}")
        if self.is_rational:
            if Fraction(self.a) + 2 * Fraction(self.s) != 1:
                raise ParameterError(f"a + 2s != 1 exactly: a={self.a}, s={self.s}")
        elif abs(af + 2.0 * sf - 1.0) > 1e-12:
            raise ParameterError(f"a + 2s != 1: a={af}, s={sf}")

    @classmethod
    def from_s(cls, n: int, s) -> "WeightParam":
        if isinstance(s, _Rat):
            s = Fraction(s)
            return cls(n, s, 1 - 2 * s)
        return cls(n, float(s), 1.0 - 2.0 * float(s))

    @classmethod
    def from_a(cls, n: int, a) -> "WeightParam":
        if isinstance(a, _Rat):
            a = Fraction(a)
            return cls(n, Fraction(1 - a, 2), a)
        return cls(n, (1.0 - float(a)) / 2.0, float(a))

    @property
    def is_rational(self) -> bool:
        return isinstance(self.a, _Rat) and isinstance(self.s, _Rat)

    @property
    def af(self) -> float:
        return float(self.a)

    @property
    def sf(self) -> float:
        return float(self.s)

    def flip(self) -> "WeightParam":
        """Weight with a -> -a (the conjugate L_{-a} geometry)."""
        if isinstance(self.a, _Rat):
            return WeightParam.from_a(self.n, -Fraction(self.a))
        return WeightParam.from_a(self.n, -self.af)


class MonomialExponent(NamedTuple):
    """Exponents of the monomial x^alpha * y^b."""

    alpha: tuple
    b: int

    @property
    def degree(self) -> int:
        return sum(self.alpha) + self.b


def _as_exponent(w: WeightParam, m) -> MonomialExponent:
    if isinstance(m, MonomialExponent):
        me = m
    else:
        flat = tuple(int(v) for v in m)
        if len(flat) != w.n + 1:
            raise ParameterError(f"exponent tuple has length {len(flat)}, expected {w.n + 1}")
        me = MonomialExponent(flat[:-1], flat[-1])
    if len(me.alpha) != w.n:
        raise ParameterError(f"alpha has length {len(me.alpha)}, expected n={w.n}")
    if me.b < 0 or any(v < 0 for v in me.alpha):
        raise ParameterError(f"negative exponent in {me}")
    return me


@dataclass(frozen=True)
class BallSpec:
    """Ball B_r(x0) with center on the thin space {y = 0}."""

    center: tuple
    radius: float

    def __post_init__(self):
        c = self.center
        if np.isscalar(c):
            c = (float(c),)
        else:
            c = tuple(float(v) for v in c)
        object.__setattr__(self, "center", c)
        if self.radius <= 0:
            raise ParameterError(f"ball radius must be positive, got {self.radius}")

    @classmethod
    def thin(cls, center, radius, n: int | None = None) -> "BallSpec":
        """Build a thin-centered ball; rejects centers off {y = 0}."""
        c = (center,) if np.isscalar(center) else tuple(float(v) for v in center)
        if n is not None and len(c) == n + 1:
            if c[-1] != 0.0:
                raise ParameterError(f"ball center must lie on the thin space, got y={c[-1]}")
            c = c[:-1]
        return cls(c, float(radius))


def _half_factorial_fraction(k: int) -> Fraction:
    # Gamma(k + 1/2) / sqrt(pi) = (2k)! / (4^k k!)
    return Fraction(math.factorial(2 * k), 4**k * math.factorial(k))


def kappa(w: WeightParam) -> float:
    """Common factor 2 pi^{n/2} Gamma((a+1)/2) / Gamma((n+1+a)/2)."""
    a = w.af
    return (
        2.0
        * math.pi ** (w.n / 2.0)
        * math.exp(math.lgamma((a + 1.0) / 2.0) - math.lgamma((w.n + 1.0 + a) / 2.0))
    )


def sphere_moment_fraction(w: WeightParam, m) -> Fraction:
    """Rational coefficient of kappa(n,a) in the weighted sphere moment.

    The moment integral_{S^n} x^alpha y^b |y|^a dS vanishes when any
    exponent is odd; otherwise it equals the returned Fraction times
    kappa(n, a).  Requires rational a.
    """
    if not w.is_rational:
        raise ParameterError("exact sphere moments need a rational weight exponent")
    me = _as_exponent(w, m)
    if me.b % 2 == 1 or any(v % 2 == 1 for v in me.alpha):
        return Fraction(0)
    ks = [v // 2 for v in me.alpha]
    mm = me.b // 2
    a = Fraction(w.a)
    coeff = Fraction(1)
    for k in ks:
        coeff *= _half_factorial_fraction(k)
    half = (a + 1) / 2
    for j in range(mm):
        coeff *= half + j
    base = Fraction(w.n + 1 + a, 2)
    for j in range(sum(ks) + mm):
        coeff /= base + j
    return coeff


def sphere_moment(w: WeightParam, m) -> float:
    """integral_{S^n subset R^{n+1}} x^alpha y^b |y|^a dS.

    Exact Gamma-ratio arithmetic when a is rational, 50-digit numerics
    otherwise.
    """
    me = _as_exponent(w, m)
    if w.is_rational:
        return float(sphere_moment_fraction(w, me)) * kappa(w)
    if me.b % 2 == 1 or any(v % 2 == 1 for v in me.alpha):
        return 0.0
    import mpmath as mp

    with mp.workdps(50):
        p = [mp.mpf(v) for v in me.alpha] + [me.b + mp.mpf(w.af)]
        val = mp.mpf(2)
        for pi in p:
            val *= mp.gamma((pi + 1) / 2)
        val /= mp.gamma((w.n + 1 + mp.fsum(p)) / 2)
        return float(val)


def ball_moment_fraction(w: WeightParam, m) -> Fraction:
    """Unit-ball moment in kappa units: sphere_moment / (n+1+a+deg)."""
    me = _as_exponent(w, m)
    return sphere_moment_fraction(w, me) / (w.n + 1 + Fraction(w.a) + me.degree)


def ball_moment(w: WeightParam, m, r: float = 1.0) -> float:
    """integral_{B_r} x^alpha y^b |y|^a dX = r^{n+1+a+deg} * sphere / (n+1+a+deg)."""
    if r <= 0:
        raise ParameterError(f"ball radius must be positive, got {r}")
    me = _as_exponent(w, m)
    d = w.n + 1 + w.af + me.degree
    return float(r) ** d * sphere_moment(w, me) / d


def weighted_volume(w: WeightParam) -> float:
    """omega_{n+1+a}: the |y|^a-weighted volume of the unit ball."""
    return ball_moment(w, MonomialExponent((0,) * w.n, 0), 1.0)


def y_interval_mass(a, lo: float, hi: float) -> float:
    """integral_lo^hi t^a dt for 0 <= lo <= hi (exact closed form)."""
    af = float(a)
    if lo < 0 or hi < lo:
        raise ParameterError(f"bad y interval [{lo}, {hi}]")
    return (hi ** (1.0 + af) - lo ** (1.0 + af)) / (1.0 + af)


# ---------------------------------------------------------------------------
# Ball-clipped cell quadrature over tensor grids.
#
# Cells are treated as constant-integrand boxes; the |y|^a factor is
# integrated exactly in y on every (sub)cell, which keeps O(h^2) accuracy
# despite the degenerate weight.  Cells straddling the sphere are split
# two levels (4 per axis) and subcells are kept by a midpoint test.
# ---------------------------------------------------------------------------

_SPLIT = 4  # 2 subdivision levels per axis


def _axis_dist_parts(edges: np.ndarray, c: float):
    lo, hi = edges[:-1], edges[1:]
    dmin = np.maximum(np.maximum(lo - c, c - hi), 0.0)
    dmax = np.maximum(np.abs(lo - c), np.abs(hi - c))
    return dmin**2, dmax**2


def clipped_ball_quadrature(grid, ball: BallSpec, w: WeightParam, cell_values: np.ndarray) -> float:
    """Sum of cell_values * (|y|^a-mass of cell intersect B_r) over all cells.

    `grid` provides x_axes (list of node arrays) and y_nodes; `cell_values`
    has one entry per grid cell.  Returns the weighted integral of the
    piecewise-constant integrand over (the upper half of) the ball.
    """
    axes = list(grid.x_axes) + [grid.y_nodes]
    center = tuple(ball.center) + (0.0,)
    r = float(ball.radius)
    d = len(axes)
    if cell_values.shape != tuple(len(ax) - 1 for ax in axes):
        raise ParameterError(
            f"cell_values shape {cell_values.shape} does not match grid cells"
        )

    mins, maxs = [], []
    for ax, c in zip(axes, center):
        mn, mx = _axis_dist_parts(np.asarray(ax, dtype=float), c)
        mins.append(mn)
        maxs.append(mx)
    # outer sums of per-axis squared distances
    shape = [1] * d
    min2 = np.zeros(tuple(len(m) for m in mins))
    max2 = np.zeros_like(min2)
    for k in range(d):
        shp = shape.copy()
        shp[k] = -1
        min2 = min2 + mins[k].reshape(shp)
        max2 = max2 + maxs[k].reshape(shp)

    inside = max2 <= r * r
    outside = min2 >= r * r
    straddle = ~(inside | outside)

    xa = [np.asarray(ax, dtype=float) for ax in axes[:-1]]
    ys = np.asarray(axes[-1], dtype=float)
    dxs = [np.diff(ax) for ax in xa]
    iy = np.array([y_interval_mass(w.a, ys[j], ys[j + 1]) for j in range(len(ys) - 1)])

    # full-cell measure = prod dx * exact y-mass
    meas = np.ones(())
    for k, dx in enumerate(dxs):
        shp = [1] * d
        shp[k] = -1
        meas = meas * dx.reshape(shp)
    shp = [1] * d
    shp[-1] = -1
    meas = meas * iy.reshape(shp)

    total = float(np.sum(cell_values * meas * inside))

    idxs = np.argwhere(straddle)
    if idxs.size:
        # subcell center offsets per axis, unit cell coordinates
        frac = (np.arange(_SPLIT) + 0.5) / _SPLIT
        sub_edges = np.arange(_SPLIT + 1) / _SPLIT
        for idx in idxs:
            lo = [axes[k][idx[k]] for k in range(d)]
            hi = [axes[k][idx[k] + 1] for k in range(d)]
            # subcell center coordinate arrays per axis
            cts = [lo[k] + (hi[k] - lo[k]) * frac for k in range(d)]
            dist2 = np.zeros((_SPLIT,) * d)
            for k in range(d):
                shp = [1] * d
                shp[k] = -1
                dist2 = dist2 + ((cts[k] - center[k]) ** 2).reshape(shp)
            keep = dist2 <= r * r
            if not keep.any():
                continue
            subvol = np.ones(())
            for k in range(d - 1):
                shp = [1] * d
                shp[k] = -1
                subvol = subvol * np.full(_SPLIT, (hi[k] - lo[k]) / _SPLIT).reshape(shp)
            ylo = lo[-1] + (hi[-1] - lo[-1]) * sub_edges
            ymass = np.array(
                [y_interval_mass(w.a, ylo[t], ylo[t + 1]) for t in range(_SPLIT)]
            )
            shp = [1] * d
            shp[-1] = -1
            subvol = subvol * ymass.reshape(shp)
            total += float(cell_values[tuple(idx)] * np.sum(subvol * keep))
    return total


def _require_ball_in_grid(grid, ball: BallSpec):
    r = float(ball.radius)
    for k, ax in enumerate(grid.x_axes):
        c = ball.center[k]
        if c - r < ax[0] - 1e-12 or c + r > ax[-1] + 1e-12:
            raise BallOutsideDomain(
                f"ball (center={ball.center}, r={r}) exceeds grid axis {k} [{ax[0]}, {ax[-1]}]"
            )
    if r > grid.y_nodes[-1] + 1e-12:
        raise BallOutsideDomain(f"ball radius {r} exceeds grid height {grid.y_nodes[-1]}")


def weighted_ball_average(f, ball: BallSpec, w: WeightParam) -> float:
    """|y|^a-weighted integral mean of f over the (reflected) ball.

    Exact moment arithmetic for polynomials; self-normalized clipped-cell
    quadrature for grid fields, so constants average to themselves exactly.
    """
    if hasattr(f, "coeffs"):  # WeightedPoly
        return float(weighted_ball_average_exact(f, ball, w))
    if hasattr(f, "grid"):  # GridField
        grid = f.grid
        _require_ball_in_grid(grid, ball)
        vals = f.cell_values()
        num = clipped_ball_quadrature(grid, ball, w, vals)
        den = clipped_ball_quadrature(grid, ball, w, np.ones_like(vals))
        if den <= 0:
            raise BallOutsideDomain("ball does not cover any grid cell")
        return num / den
    raise ParameterError(f"cannot average object of type {type(f).__name__}")


def weighted_ball_average_exact(poly, ball: BallSpec, w: WeightParam) -> Fraction:
    """Exact weighted mean of a polynomial over a thin-centered ball.

    The kappa factor cancels between numerator and normalization, so the
    result is an exact rational whenever a, the center and the radius are
    rational.
    """
    if not w.is_rational:
        raise ParameterError("exact ball averages need a rational weight exponent")
    center = [Fraction(c).limit_denominator(10**12) if not isinstance(c, _Rat) else Fraction(c)
              for c in ball.center]
    shifted = poly.shift_thin(center)
    r = Fraction(ball.radius).limit_denominator(10**12)
    num = Fraction(0)
    for mono, c in shifted.coeffs.items():
        cf = c if isinstance(c, Fraction) else Fraction(c).limit_denominator(10**15)
        bm = ball_moment_fraction(w, mono)
        if bm:
            num += cf * bm * r ** (sum(mono))
    den = ball_moment_fraction(w, MonomialExponent((0,) * w.n, 0))
    return num / den
