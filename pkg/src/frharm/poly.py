"""Exact algebra of polynomials even in y under the reduced weighted operator.

The reduced operator is

    R_a p = |y|^{-a} div(|y|^a grad p) = Lap(p) + a * (d_y p) / y,

a polynomial-to-polynomial map on polynomials even in y (the division by y
is exact because d_y p is odd).  On top of it sit the constructive
Dirichlet solve on the unit ball via the bijection

    T q = R_a((1 - |x|^2 - y^2) q)

on even polynomials of bounded degree, orthogonal homogeneous bases on the
weighted sphere, boundary-data expansions, and the even/odd representation
u = phi + y|y|^{-a} psi.

All coefficient arithmetic is exact (fractions.Fraction) whenever the
weight exponent a is rational, so "residual == 0" is literal equality.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.special import roots_jacobi

from .errors import (
    ParameterError,
    ParityError,
    PreconditionError,
    QuadratureFailure,
    SingularSystem,
)
from .grids import Grid, GridField
from .weights import (
    MonomialExponent,
    WeightParam,
    kappa,
    sphere_moment_fraction,
)

__all__ = [
    "WeightedPoly",
    "HarmonicBasis",
    "ExpansionReport",
    "reduce_la",
    "t_map",
    "poly_dirichlet_solve",
    "harmonic_basis",
    "expand",
    "even_odd_split",
    "uniqueness_check",
    "sphere_quadrature",
    "canonical_quadratic",
    "sphere_defect_poly",
]


def _coerce(c):
    if isinstance(c, (int, Fraction)):
        return Fraction(c)
    return float(c)


class WeightedPoly:
    """Polynomial in (x_1..x_n, y) with exact-rational or float coefficients.

    Coefficients are keyed by flat exponent tuples (alpha_1..alpha_n, b).
    """

    __slots__ = ("n", "coeffs")

    def __init__(self, n: int, coeffs: dict | None = None):
        self.n = int(n)
        self.coeffs = {}
        if coeffs:
            for key, c in coeffs.items():
                key = tuple(int(v) for v in key)
                if len(key) != self.n + 1:
                    raise ParameterError(f"key {key} has wrong length for n={self.n}")
                c = _coerce(c)
                if c != 0:
                    self.coeffs[key] = c

    # -- constructors --------------------------------------------------------

    @classmethod
    def monomial(cls, n: int, key, coeff=1) -> "WeightedPoly":
        return cls(n, {tuple(key): coeff})

    @classmethod
    def constant(cls, n: int, value) -> "WeightedPoly":
        return cls(n, {(0,) * (n + 1): value})

    @classmethod
    def zero(cls, n: int) -> "WeightedPoly":
        return cls(n, {})

    # -- basic structure -----------------------------------------------------

    @property
    def degree(self) -> int:
        return max((sum(k) for k in self.coeffs), default=0)

    @property
    def parity(self) -> str:
        bs = {k[-1] % 2 for k in self.coeffs}
        if bs <= {0}:
            return "even"
        if bs == {1}:
            return "odd"
        return "mixed"

    @property
    def is_exact(self) -> bool:
        return all(isinstance(c, Fraction) for c in self.coeffs.values())

    def is_zero(self, tol=0) -> bool:
        if tol == 0:
            return not self.coeffs
        return all(abs(float(c)) <= tol for c in self.coeffs.values())

    def homogeneous_part(self, k: int) -> "WeightedPoly":
        return WeightedPoly(self.n, {m: c for m, c in self.coeffs.items() if sum(m) == k})

    def restrict_thin(self) -> "WeightedPoly":
        """Coefficients surviving at y = 0 (keys with b = 0)."""
        return WeightedPoly(self.n, {m: c for m, c in self.coeffs.items() if m[-1] == 0})

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other: "WeightedPoly") -> "WeightedPoly":
        out = dict(self.coeffs)
        for k, c in other.coeffs.items():
            out[k] = out.get(k, 0) + c
        return WeightedPoly(self.n, out)

    def __sub__(self, other: "WeightedPoly") -> "WeightedPoly":
        return self + (-other)

    def __neg__(self) -> "WeightedPoly":
        return WeightedPoly(self.n, {k: -c for k, c in self.coeffs.items()})

    def __mul__(self, other) -> "WeightedPoly":
        if isinstance(other, WeightedPoly):
            out: dict = {}
            for k1, c1 in self.coeffs.items():
                for k2, c2 in other.coeffs.items():
                    k = tuple(a + b for a, b in zip(k1, k2))
                    out[k] = out.get(k, 0) + c1 * c2
            return WeightedPoly(self.n, out)
        return WeightedPoly(self.n, {k: c * _coerce(other) for k, c in self.coeffs.items()})

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        return isinstance(other, WeightedPoly) and self.n == other.n and self.coeffs == other.coeffs

    def __repr__(self) -> str:
        if not self.coeffs:
            return "WeightedPoly(0)"
        terms = []
        for k in sorted(self.coeffs):
            mono = "*".join(
                [f"x{i+1}^{e}" for i, e in enumerate(k[:-1]) if e]
                + ([f"y^{k[-1]}"] if k[-1] else [])
            )
            terms.append(f"{self.coeffs[k]}{'*' + mono if mono else ''}")
        return "WeightedPoly(" + " + ".join(terms) + ")"

    def diff(self, axis: int) -> "WeightedPoly":
        """Partial derivative; axis n means y."""
        out = {}
        for k, c in self.coeffs.items():
            e = k[axis]
            if e:
                kk = list(k)
                kk[axis] = e - 1
                kk = tuple(kk)
                out[kk] = out.get(kk, 0) + c * e
        return WeightedPoly(self.n, out)

    def dilate(self, lam) -> "WeightedPoly":
        """p(lam * X)."""
        lam = _coerce(lam)
        return WeightedPoly(self.n, {k: c * lam ** sum(k) for k, c in self.coeffs.items()})

    def shift_thin(self, offsets: Sequence) -> "WeightedPoly":
        """p(x + offset, y), exact for rational offsets."""
        out = self
        for axis, off in enumerate(offsets):
            off = _coerce(off)
            if off == 0:
                continue
            new: dict = {}
            for k, c in out.coeffs.items():
                e = k[axis]
                for i in range(e + 1):
                    kk = list(k)
                    kk[axis] = i
                    kk = tuple(kk)
                    term = c * math.comb(e, i) * off ** (e - i)
                    new[kk] = new.get(kk, 0) + term
            out = WeightedPoly(self.n, new)
        return out

    def __call__(self, *coords):
        """Evaluate at coordinate arrays (x_1..x_n, y)."""
        coords = [np.asarray(c, dtype=float) for c in coords]
        if len(coords) == 1 and coords[0].ndim and coords[0].shape[-1] == self.n + 1:
            pts = coords[0]
            coords = [pts[..., k] for k in range(self.n + 1)]
        if len(coords) != self.n + 1:
            raise ParameterError(f"need {self.n + 1} coordinates")
        out = np.zeros(np.broadcast(*coords).shape)
        for k, c in self.coeffs.items():
            term = float(c) * np.ones_like(out)
            for e, ax in zip(k, coords):
                if e:
                    term = term * ax**e
            out = out + term
        return out

    def eval_exact(self, point: Sequence) -> Fraction:
        pt = [Fraction(v) for v in point]
        total = Fraction(0)
        for k, c in self.coeffs.items():
            term = Fraction(c)
            for e, v in zip(k, pt):
                term *= v**e
            total += term
        return total

    def scale_to_integers(self) -> "WeightedPoly":
        """Clear denominators and common factors (exact polys only)."""
        if not self.coeffs or not self.is_exact:
            return self
        den = 1
        for c in self.coeffs.values():
            den = den * c.denominator // math.gcd(den, c.denominator)
        nums = [abs(int(c * den)) for c in self.coeffs.values()]
        g = 0
        for v in nums:
            g = math.gcd(g, v)
        g = g or 1
        lead = self.coeffs[max(self.coeffs)]
        sign = -1 if lead < 0 else 1
        return WeightedPoly(
            self.n, {k: Fraction(int(c * den) * sign, g) for k, c in self.coeffs.items()}
        )


def sphere_defect_poly(n: int) -> WeightedPoly:
    """1 - |x|^2 - y^2, the factor vanishing on the unit sphere."""
    coeffs = {(0,) * (n + 1): Fraction(1)}
    for axis in range(n + 1):
        key = [0] * (n + 1)
        key[axis] = 2
        coeffs[tuple(key)] = Fraction(-1)
    return WeightedPoly(n, coeffs)


def canonical_quadratic(w: WeightParam, axis: int = 0) -> WeightedPoly:
    """x_axis^2 - y^2/(1+a): the canonical degree-2 harmonic polynomial."""
    a = Fraction(w.a) if w.is_rational else w.af
    key = [0] * (w.n + 1)
    key[axis] = 2
    ykey = [0] * w.n + [2]
    one = Fraction(1) if w.is_rational else 1.0
    return WeightedPoly(w.n, {tuple(key): one, tuple(ykey): -one / (1 + a)})


# ---------------------------------------------------------------------------
# Reduced operator and the polynomial Dirichlet solve
# ---------------------------------------------------------------------------


def reduce_la(p: WeightedPoly, w: WeightParam) -> WeightedPoly:
    """|y|^{-a} L_a p = Lap(p) + a (d_y p)/y for p even in y.

    Exact: the y^b term maps to b (b - 1 + a) y^{b-2}, so the result is a
    polynomial even in y of degree deg(p) - 2.
    """
    if p.parity not in ("even",):
        raise ParityError(f"reduce_la needs a polynomial even in y, got parity {p.parity}")
    a = Fraction(w.a) if (w.is_rational and p.is_exact) else w.af
    out: dict = {}
    for k, c in p.coeffs.items():
        for axis in range(w.n):
            e = k[axis]
            if e >= 2:
                kk = list(k)
                kk[axis] = e - 2
                kk = tuple(kk)
                out[kk] = out.get(kk, 0) + c * e * (e - 1)
        b = k[-1]
        if b >= 2:
            kk = k[:-1] + (b - 2,)
            out[kk] = out.get(kk, 0) + c * b * (b - 1 + a)
    return WeightedPoly(p.n, out)


def t_map(q: WeightedPoly, w: WeightParam) -> WeightedPoly:
    """T q = |y|^{-a} L_a((1 - |x|^2 - y^2) q), a bijection on even polys."""
    if q.parity not in ("even",):
        raise ParityError(f"t_map needs a polynomial even in y, got parity {q.parity}")
    return reduce_la(sphere_defect_poly(q.n) * q, w)


def _even_monomials(n: int, max_degree: int, homogeneous: int | None = None) -> list:
    """Sorted exponent keys of monomials even in y (degree filter)."""
    keys = []

    def rec(prefix, rem):
        if len(prefix) == n:
            for b in range(0, rem + 1, 2):
                if homogeneous is None or sum(prefix) + b == homogeneous:
                    keys.append(tuple(prefix) + (b,))
            return
        for e in range(rem + 1):
            rec(prefix + [e], rem - e)

    deg = max_degree if homogeneous is None else homogeneous
    rec([], deg)
    if homogeneous is None:
        keys = [k for k in keys if sum(k) <= max_degree]
    return sorted(set(keys))


def _poly_to_vec(p: WeightedPoly, basis_keys: list, exact: bool) -> list:
    idx = {k: i for i, k in enumerate(basis_keys)}
    vec = [Fraction(0) if exact else 0.0] * len(basis_keys)
    for k, c in p.coeffs.items():
        if k not in idx:
            raise ParameterError(f"monomial {k} outside the expected space")
        vec[idx[k]] = c
    return vec


def _invert_fraction_matrix(mat: list) -> list:
    """Gauss-Jordan inverse over Fractions; raises SingularSystem."""
    k = len(mat)
    aug = [list(row) + [Fraction(int(i == j)) for j in range(k)] for i, row in enumerate(mat)]
    for col in range(k):
        piv = None
        best = None
        for r in range(col, k):
            v = aug[r][col]
            if v != 0:
                size = abs(v.numerator) + v.denominator
                if piv is None or size < best:
                    piv, best = r, size
        if piv is None:
            raise SingularSystem(f"exact elimination hit a zero pivot at column {col}")
        aug[col], aug[piv] = aug[piv], aug[col]
        pv = aug[col][col]
        aug[col] = [v / pv for v in aug[col]]
        for r in range(k):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [vr - f * vc for vr, vc in zip(aug[r], aug[col])]
    return [row[k:] for row in aug]


def _nullspace_fraction(rows: list, ncols: int) -> list:
    """Nullspace basis of a Fraction matrix given as a list of rows."""
    mat = [list(r) for r in rows]
    pivots = []
    r = 0
    for c in range(ncols):
        piv = None
        for rr in range(r, len(mat)):
            if mat[rr][c] != 0:
                piv = rr
                break
        if piv is None:
            continue
        mat[r], mat[piv] = mat[piv], mat[r]
        pv = mat[r][c]
        mat[r] = [v / pv for v in mat[r]]
        for rr in range(len(mat)):
            if rr != r and mat[rr][c] != 0:
                f = mat[rr][c]
                mat[rr] = [v - f * vc for v, vc in zip(mat[rr], mat[r])]
        pivots.append(c)
        r += 1
        if r == len(mat):
            break
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fc in free:
        vec = [Fraction(0)] * ncols
        vec[fc] = Fraction(1)
        for rr, pc in enumerate(pivots):
            vec[pc] = -mat[rr][fc]
        basis.append(vec)
    return basis


_T_INV_CACHE: dict = {}


def _t_inverse(w: WeightParam, m: int):
    """Cached exact inverse of T on the even polynomials of degree <= m-2."""
    key = (w.n, Fraction(w.a), m)
    hit = _T_INV_CACHE.get(key)
    if hit is not None:
        return hit
    basis_keys = _even_monomials(w.n, m - 2)
    cols = []
    for bk in basis_keys:
        img = t_map(WeightedPoly.monomial(w.n, bk, Fraction(1)), w)
        cols.append(_poly_to_vec(img, basis_keys, exact=True))
    mat = [[cols[j][i] for j in range(len(basis_keys))] for i in range(len(basis_keys))]
    inv = _invert_fraction_matrix(mat)
    _T_INV_CACHE[key] = (basis_keys, inv)
    return basis_keys, inv


def poly_dirichlet_solve(p: WeightedPoly, w: WeightParam) -> WeightedPoly:
    """Harmonic-in-the-weighted-sense replacement of p on the unit ball.

    Returns ptilde = p - (1 - |x|^2 - y^2) * T^{-1}(R_a p), which satisfies
    R_a(ptilde) = 0 exactly and agrees with p on the unit sphere.
    """
    if p.parity not in ("even",):
        raise ParityError(f"poly_dirichlet_solve needs even parity, got {p.parity}")
    resid = reduce_la(p, w)
    if resid.is_zero():
        return p
    if not (w.is_rational and p.is_exact):
        return _poly_dirichlet_solve_float(p, w, resid)
    m = p.degree
    basis_keys, inv = _t_inverse(w, m)
    rhs = _poly_to_vec(resid, basis_keys, exact=True)
    sol = [sum(inv[i][j] * rhs[j] for j in range(len(rhs)) if rhs[j] != 0)
           for i in range(len(rhs))]
    g = WeightedPoly(w.n, {bk: s for bk, s in zip(basis_keys, sol) if s != 0})
    return p - sphere_defect_poly(w.n) * g


def _poly_dirichlet_solve_float(p: WeightedPoly, w: WeightParam, resid: WeightedPoly):
    basis_keys = _even_monomials(w.n, p.degree - 2)
    cols = []
    for bk in basis_keys:
        img = t_map(WeightedPoly.monomial(w.n, bk, 1.0), w)
        cols.append([float(v) for v in _poly_to_vec(img, basis_keys, exact=False)])
    mat = np.array(cols, dtype=float).T
    rhs = np.array([float(v) for v in _poly_to_vec(resid, basis_keys, exact=False)])
    try:
        sol = np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    g = WeightedPoly(w.n, {bk: s for bk, s in zip(basis_keys, sol) if s != 0.0})
    return p - sphere_defect_poly(w.n) * g


# ---------------------------------------------------------------------------
# Orthogonal homogeneous bases on the weighted sphere
# ---------------------------------------------------------------------------


def sphere_inner_fraction(p: WeightedPoly, q: WeightedPoly, w: WeightParam) -> Fraction:
    """Exact weighted-sphere inner product, in kappa(n, a) units."""
    prod = p * q
    total = Fraction(0)
    for k, c in prod.coeffs.items():
        mom = sphere_moment_fraction(w, k)
        if mom:
            total += Fraction(c) * mom
    return total


@dataclass
class HarmonicBasis:
    """Orthogonal homogeneous basis of even harmonic polynomials.

    Members are stored with exact integer coefficients and are exactly
    orthogonal on the weighted sphere; `norm2_fractions[i] * kappa` is the
    exact squared norm, so normalization happens only at evaluation time
    and never pollutes the exact polynomials.
    """

    w: WeightParam
    degree_max: int
    polys: list
    degrees: list
    norm2_fractions: list
    gram_normalized: bool = True

    def __len__(self) -> int:
        return len(self.polys)

    @property
    def normalizers(self) -> np.ndarray:
        kap = kappa(self.w)
        return np.array([1.0 / math.sqrt(float(f) * kap) for f in self.norm2_fractions])

    def gram_matrix(self) -> np.ndarray:
        """Normalized Gram matrix; exact zeros stay exact floats 0.0."""
        k = len(self.polys)
        g = np.zeros((k, k))
        for i in range(k):
            for j in range(i, k):
                frac = sphere_inner_fraction(self.polys[i], self.polys[j], self.w)
                if frac == 0:
                    continue
                val = float(frac) / math.sqrt(
                    float(self.norm2_fractions[i]) * float(self.norm2_fractions[j])
                )
                g[i, j] = g[j, i] = val
        return g

    def evaluate_normalized(self, pts: np.ndarray) -> np.ndarray:
        """Matrix of normalized basis values at points (N, n+1)."""
        pts = np.asarray(pts, dtype=float)
        norm = self.normalizers
        return np.stack([norm[i] * p(pts) for i, p in enumerate(self.polys)], axis=-1)

    def blocks(self) -> dict:
        out: dict = {}
        for i, d in enumerate(self.degrees):
            out.setdefault(d, []).append(i)
        return out

    # -- persistence ---------------------------------------------------------

    def to_json(self) -> str:
        def frac_str(v):
            f = Fraction(v)
            return f"{f.numerator}/{f.denominator}"

        doc = {
            "format": "frharm-basis-v1",
            "n": self.w.n,
            "a": frac_str(self.w.a) if self.w.is_rational else repr(self.w.af),
            "degree_max": self.degree_max,
            "gram_normalized": self.gram_normalized,
            "members": [
                {
                    "degree": d,
                    "norm2": frac_str(f),
                    "coeffs": {
                        ",".join(map(str, k)): frac_str(c) for k, c in sorted(p.coeffs.items())
                    },
                }
                for p, d, f in zip(self.polys, self.degrees, self.norm2_fractions)
            ],
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "HarmonicBasis":
        doc = json.loads(text)
        if doc.get("format") != "frharm-basis-v1":
            raise ParameterError("unknown basis document format")
        a = Fraction(doc["a"]) if "/" in doc["a"] else float(doc["a"])
        w = WeightParam.from_a(doc["n"], a)
        polys, degrees, norms = [], [], []
        for mem in doc["members"]:
            coeffs = {
                tuple(int(t) for t in k.split(",")): Fraction(v)
                for k, v in mem["coeffs"].items()
            }
            polys.append(WeightedPoly(doc["n"], coeffs))
            degrees.append(mem["degree"])
            norms.append(Fraction(mem["norm2"]))
        return cls(w, doc["degree_max"], polys, degrees, norms, doc["gram_normalized"])


def harmonic_basis(w: WeightParam, degree_max: int) -> HarmonicBasis:
    """Orthogonal basis of homogeneous even harmonic polynomials, by degree.

    Within each homogeneity degree the kernel of the reduced operator is
    computed by exact elimination and orthogonalized by classical
    Gram-Schmidt with exact sphere inner products; distinct degrees are
    orthogonal automatically.
    """
    if degree_max < 0:
        raise ParameterError("degree_max must be nonnegative")
    if not w.is_rational:
        raise ParameterError("harmonic_basis requires a rational weight exponent")
    polys, degrees, norms = [], [], []
    for k in range(degree_max + 1):
        monos = _even_monomials(w.n, k, homogeneous=k)
        if not monos:
            continue
        if k < 2:
            kernel = [
                _poly_to_vec(WeightedPoly.monomial(w.n, mk, Fraction(1)), monos, True)
                for mk in monos
            ]
        else:
            target = _even_monomials(w.n, k - 2, homogeneous=k - 2)
            rows = []
            cols = [
                _poly_to_vec(
                    reduce_la(WeightedPoly.monomial(w.n, mk, Fraction(1)), w), target, True
                )
                for mk in monos
            ]
            rows = [[cols[j][i] for j in range(len(monos))] for i in range(len(target))]
            kernel = _nullspace_fraction(rows, len(monos))
        members = [
            WeightedPoly(w.n, {mk: v for mk, v in zip(monos, vec) if v != 0}) for vec in kernel
        ]
        ortho: list = []
        for v in members:
            q = v
            for u in ortho:
                coef = sphere_inner_fraction(q, u, w) / sphere_inner_fraction(u, u, w)
                if coef:
                    q = q - u * coef
            if not q.is_zero():
                ortho.append(q.scale_to_integers())
        for q in ortho:
            polys.append(q)
            degrees.append(k)
            norms.append(sphere_inner_fraction(q, q, w))
    return HarmonicBasis(w, degree_max, polys, degrees, norms, gram_normalized=True)


# ---------------------------------------------------------------------------
# Weighted sphere quadrature and expansions
# ---------------------------------------------------------------------------


def sphere_quadrature(w: WeightParam, radial_order: int, angular_order: int | None = None):
    """Product rule for integral_{S^n} f |y|^a dS, n in {1, 2}.

    The |y|^a factor is absorbed as a Jacobi weight through u = y^2, so
    even polynomials of degree <= 2*radial_order - 1 (in u) integrate
    exactly; the angular factor is exact for the matching trig degree.
    """
    n, a = w.n, w.af
    if n not in (1, 2):
        raise ParameterError("sphere quadrature implemented for n in {1, 2}")
    A = (n - 2) / 2.0
    B = (a - 1.0) / 2.0
    xs, ws = roots_jacobi(radial_order, A, B)
    us = (1.0 + xs) / 2.0
    scale = 0.5 * 2.0 ** (-(A + B + 1.0))
    ts = np.sqrt(us)
    rs = np.sqrt(1.0 - us)
    pts, wts = [], []
    if n == 1:
        for u, t, r, wg in zip(us, ts, rs, ws):
            for sx in (-1.0, 1.0):
                for sy in (-1.0, 1.0):
                    pts.append((sx * r, sy * t))
                    wts.append(scale * wg)
    else:
        M = angular_order or (4 * radial_order + 4)
        phis = 2.0 * np.pi * np.arange(M) / M
        ang_w = 2.0 * np.pi / M
        for u, t, r, wg in zip(us, ts, rs, ws):
            for phi in phis:
                for sy in (-1.0, 1.0):
                    pts.append((r * np.cos(phi), r * np.sin(phi), sy * t))
                    wts.append(scale * wg * ang_w)
    return np.array(pts), np.array(wts)


@dataclass
class ExpansionReport:
    """Result of expanding boundary data in a harmonic basis."""

    coefficients: np.ndarray
    degrees: list
    truncation_degree: int
    block_energies: np.ndarray        # boundary energy per homogeneity degree
    tail_energies: np.ndarray         # cumulative tails (nonincreasing)
    half_ball_block_energies: np.ndarray  # blocks scaled by (1/2)^{2k}
    decay_ratios: np.ndarray
    quadrature_delta: float
    eval_points: np.ndarray
    eval_errors: np.ndarray

    def geometric_decay_ok(self, ratio: float = 0.9, skip: int = 2) -> bool:
        """True when half-ball block ratios eventually stay below `ratio`."""
        rs = self.decay_ratios[skip:]
        rs = rs[np.isfinite(rs)]
        if rs.size == 0:
            return True
        for start in range(rs.size):
            if np.all(rs[start:] < ratio):
                return True
        return False


def _eval_boundary_data(f, pts: np.ndarray) -> np.ndarray:
    if isinstance(f, WeightedPoly):
        return f(pts)
    if isinstance(f, GridField):
        return f.interp(pts)
    vals = f(pts)
    return np.asarray(vals, dtype=float)


def expand(f, basis: HarmonicBasis, reference: str = "auto",
           quad_tol: float = 1e-8) -> ExpansionReport:
    """Expansion coefficients of boundary data on the weighted unit sphere.

    Coefficients are weighted-sphere inner products against the normalized
    basis, by the product quadrature above; the quadrature is re-run at a
    higher order and QuadratureFailure is raised if the two disagree.
    Interior evaluation errors compare the truncated series against the
    harmonic solve carrying the same boundary data.
    """
    if not basis.gram_normalized:
        raise PreconditionError("expand requires a gram_normalized basis")
    w = basis.w
    q = basis.degree_max + 2
    pts, wts = sphere_quadrature(w, q)
    pts2, wts2 = sphere_quadrature(w, q + 4)
    fv = _eval_boundary_data(f, pts)
    fv2 = _eval_boundary_data(f, pts2)
    bv = basis.evaluate_normalized(pts)
    bv2 = basis.evaluate_normalized(pts2)
    coef = bv.T @ (wts * fv)
    coef2 = bv2.T @ (wts2 * fv2)
    scale = max(1.0, float(np.max(np.abs(coef))))
    delta = float(np.max(np.abs(coef - coef2))) / scale
    if delta > quad_tol:
        raise QuadratureFailure(
            f"sphere quadrature self-estimate {delta:.3e} exceeds {quad_tol:.1e}"
        )

    degs = np.array(basis.degrees)
    kmax = basis.degree_max
    blocks = np.array([float(np.sum(coef[degs == k] ** 2)) for k in range(kmax + 1)])
    tails = np.array([float(np.sum(blocks[k:])) for k in range(kmax + 1)])
    half_blocks = blocks * (0.25 ** np.arange(kmax + 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(half_blocks[:-1] > 0, half_blocks[1:] / half_blocks[:-1], np.nan)

    eval_pts, eval_err = _expansion_eval_errors(f, basis, coef, reference)
    return ExpansionReport(
        coefficients=coef,
        degrees=list(basis.degrees),
        truncation_degree=kmax,
        block_energies=blocks,
        tail_energies=tails,
        half_ball_block_energies=half_blocks,
        decay_ratios=ratios,
        quadrature_delta=delta,
        eval_points=eval_pts,
        eval_errors=eval_err,
    )


def _interior_sample_points(n: int) -> np.ndarray:
    dirs = []
    if n == 1:
        angs = np.linspace(0.15, np.pi - 0.15, 5)
        dirs = [(np.cos(t), np.sin(t)) for t in angs]
    else:
        for t in np.linspace(0.2, np.pi - 0.2, 5):
            dirs.append((np.cos(t) * 0.8, np.sin(t) * 0.6, abs(np.sin(t)) * 0.5 + 0.2))
        dirs = [np.array(d) / np.linalg.norm(d) for d in dirs]
    pts = []
    for r in (0.2, 0.45):
        for d in dirs:
            pts.append(r * np.asarray(d))
    return np.array(pts)


def _expansion_eval_errors(f, basis: HarmonicBasis, coef: np.ndarray, reference: str):
    w = basis.w
    pts = _interior_sample_points(w.n)
    series = basis.evaluate_normalized(pts) @ coef
    if reference == "none":
        return pts, np.full(len(pts), np.nan)
    if isinstance(f, WeightedPoly) and f.parity == "even":
        ref_poly = poly_dirichlet_solve(f, w)
        return pts, np.abs(series - ref_poly(pts))
    if reference == "auto" and w.n == 1:
        from .solver import solve_dirichlet

        grid = Grid.box(1, 1.05, 1.05, 129, 129, ball_radius=1.0)
        fld, _ = solve_dirichlet(grid, w, lambda x, y: _eval_boundary_data(
            f, np.stack([x, y], axis=-1)))
        return pts, np.abs(series - fld.interp(pts))
    return pts, np.full(len(pts), np.nan)


# ---------------------------------------------------------------------------
# Even/odd representation and uniqueness of the thin restriction
# ---------------------------------------------------------------------------


def even_odd_split(u, grid: Grid | None = None, w: WeightParam | None = None):
    """Split u into (phi, psi) with u = phi + y|y|^{-a} psi, both even in y.

    GridField inputs are even by convention, so they return (u, 0).  General
    fields are passed as a callable u(x.., y) sampled on `grid` and its
    mirror; psi at y = 0 is filled by even quadratic extrapolation.
    """
    if isinstance(u, GridField):
        return u.copy(), GridField.zeros(u.grid)
    if grid is None or w is None:
        raise ParameterError("callable input needs an explicit grid and weight")
    mesh = grid.meshgrid()
    up = np.asarray(u(*mesh), dtype=float)
    mesh_m = [m.copy() for m in mesh]
    mesh_m[-1] = -mesh_m[-1]
    um = np.asarray(u(*mesh_m), dtype=float)
    phi = 0.5 * (up + um)
    ys = grid.y_nodes
    psi = np.zeros_like(up)
    ypow = ys[1:] ** (w.af - 1.0)
    psi[..., 1:] = 0.5 * (up[..., 1:] - um[..., 1:]) * ypow
    psi[..., 0] = (4.0 * psi[..., 1] - psi[..., 2]) / 3.0
    return GridField(grid, phi), GridField(grid, psi)


def uniqueness_check(u: WeightedPoly, w: WeightParam, tol: float = 0.0) -> bool:
    """Thin-restriction uniqueness: u harmonic and u(., 0) == 0 force u == 0.

    Returns True when the implication holds for this u (vacuously when the
    thin restriction is nonzero).
    """
    resid = reduce_la(u, w)
    if not resid.is_zero(tol):
        raise PreconditionError("uniqueness_check needs a harmonic input")
    if u.restrict_thin().is_zero(tol):
        return u.is_zero(tol)
    return True
