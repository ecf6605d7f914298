"""Weighted finite differences on the upper half-space with even reflection.

The scheme is variational: the discrete energy is a sum of edge terms

    E(u) = 2 * sum_edges c_e (Delta_e u)^2 ~ int |grad u|^2 |y|^a,

with vertical conductances from exact cell integrals of t^a and horizontal
conductances from exact dual-cell integrals (finite at the thin layer for
every a in (-1,1), unlike the raw midpoint weight).  Dirichlet solves
minimize E by red-black SOR; the zero-obstacle thin constraint is handled
by projection after each sweep; drift problems replace the natural thin
condition by the discrete flux equation.

The discrete weighted flux at the thin layer is

    f(x) = (1 - a) * (u(x, hy) - u(x, 0)) / hy^{1-a},

which is exact on the boundary-layer profile c * y^{1-a} and reduces to a
one-sided difference at a = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence, ParameterError
from .grids import Grid, GridField
from .weights import WeightParam

__all__ = [
    "ComplementaritySpec",
    "SolveReport",
    "LaOperator",
    "assemble_la",
    "solve_dirichlet",
    "solve_signorini",
    "solve_drift",
    "solve_patch",
    "thin_flux",
    "edge_energy",
]

_A_LIMIT = 0.9  # stencil conditioning guard


class ComplementaritySpec:
    """Thin-layer condition: none, zero obstacle, and/or drift term.

    kind is one of none | signorini_zero | drift | drift_signorini; drift
    kinds carry the field b (callable on thin coordinates, constant vector
    or scalar) and the coupling drift_scale (1/c_frac from calibration).
    """

    def __init__(self, kind="none", b=None, drift_scale=1.0):
        if kind not in ("none", "signorini_zero", "drift", "drift_signorini"):
            raise ParameterError(f"unknown complementarity kind {kind!r}")
        self.kind = kind
        self.b = b
        self.drift_scale = float(drift_scale)

    @property
    def has_drift(self) -> bool:
        return self.kind in ("drift", "drift_signorini")

    @property
    def constrained(self) -> bool:
        return self.kind in ("signorini_zero", "drift_signorini")

    def drift_values(self, grid: Grid) -> np.ndarray:
        """b sampled on the thin nodes, shape (*shape_x, n)."""
        if self.b is None:
            raise ParameterError("drift kinds need a drift field b")
        axes = np.meshgrid(*grid.x_axes, indexing="ij")
        if callable(self.b):
            vals = self.b(*axes)
        else:
            vals = self.b
        vals = np.asarray(vals, dtype=float)
        if vals.ndim == 0 or vals.shape == (grid.n,):
            vals = np.broadcast_to(np.atleast_1d(vals), grid.shape_x + (grid.n,)).copy()
        elif vals.shape == grid.shape_x:
            vals = vals[..., None]
        if vals.shape != grid.shape_x + (grid.n,):
            raise ParameterError(f"drift field shape {vals.shape} unusable")
        if not np.all(np.isfinite(vals)):
            raise ParameterError("drift field must be bounded")
        return vals


@dataclass
class SolveReport:
    iterations: int
    update_norm: float
    pde_residual: float
    complementarity_residual: float
    active_set: np.ndarray | None
    energy: float
    converged: bool
    omega: float = 0.0


class LaOperator:
    """Assembled conductances and residual/flux evaluation for one grid."""

    def __init__(self, grid: Grid, w: WeightParam):
        if abs(w.af) > _A_LIMIT:
            raise ParameterError(
                f"|a| = {abs(w.af):.3f} outside stable range [0, {_A_LIMIT}]"
            )
        self.grid = grid
        self.w = w
        hx = grid.hx
        vol = float(np.prod(hx))
        my = grid.dual_y_masses(w)
        iy = grid.cell_y_masses(w)
        self.ch = [my * vol / h**2 for h in hx]   # per-layer, one per x axis
        self.cv = iy * vol / grid.hy**2           # per y-edge
        self.node_mass = my * vol                  # weighted dual volume per layer

    # -- sparse-free stencil application --------------------------------------

    def neighbor_sum(self, V: np.ndarray) -> np.ndarray:
        S = np.zeros_like(V)
        nd = V.ndim
        for k, ch in enumerate(self.ch):
            lo = [slice(None)] * nd
            hi = [slice(None)] * nd
            lo[k] = slice(None, -1)
            hi[k] = slice(1, None)
            lo, hi = tuple(lo), tuple(hi)
            S[hi] += ch * V[lo]
            S[lo] += ch * V[hi]
        S[..., 1:] += self.cv * V[..., :-1]
        S[..., :-1] += self.cv * V[..., 1:]
        return S

    def diagonal(self) -> np.ndarray:
        shp = self.grid.shape
        D = np.zeros(shp)
        nd = len(shp)
        for k, ch in enumerate(self.ch):
            cnt = np.full(shp[k], 2.0)
            cnt[0] = cnt[-1] = 1.0
            sl = [None] * nd
            sl[k] = slice(None)
            D = D + ch * cnt[tuple(sl)]
        vdeg = np.zeros(shp[-1])
        vdeg[:-1] += self.cv
        vdeg[1:] += self.cv
        D = D + vdeg
        return D

    def apply(self, u: GridField) -> np.ndarray:
        """Discrete |y|^{-a} L_a u (valid at nodes away from the boundary)."""
        V = u.values
        return (self.neighbor_sum(V) - self.diagonal() * V) / self.node_mass

    def thin_flux(self, u) -> np.ndarray:
        """Discrete d_y^a u on the thin layer, the (1-a)/h^{1-a} formula."""
        V = u.values if isinstance(u, GridField) else u
        a = self.w.af
        h = self.grid.hy
        return (1.0 - a) * (V[..., 1] - V[..., 0]) / h ** (1.0 - a)


def assemble_la(grid: Grid, w: WeightParam) -> LaOperator:
    """Flux-form discrete operator for div(|y|^a grad .) on the grid."""
    return LaOperator(grid, w)


def thin_flux(u: GridField, w: WeightParam) -> np.ndarray:
    a = w.af
    h = u.grid.hy
    return (1.0 - a) * (u.values[..., 1] - u.values[..., 0]) / h ** (1.0 - a)


def edge_energy(values: np.ndarray, op: LaOperator, node_mask: np.ndarray | None = None) -> float:
    """Energy 2 * sum c_e (Delta u)^2 over edges touching node_mask (or all)."""
    V = values
    nd = V.ndim
    total = 0.0
    for k, ch in enumerate(op.ch):
        lo = [slice(None)] * nd
        hi = [slice(None)] * nd
        lo[k] = slice(None, -1)
        hi[k] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        diff2 = (V[hi] - V[lo]) ** 2
        if node_mask is not None:
            diff2 = diff2 * (node_mask[hi] | node_mask[lo])
        total += float(np.sum(ch * diff2))
    diff2 = (V[..., 1:] - V[..., :-1]) ** 2
    if node_mask is not None:
        diff2 = diff2 * (node_mask[..., 1:] | node_mask[..., :-1])
    total += float(np.sum(op.cv * diff2))
    return 2.0 * total


def _boundary_values(grid: Grid, data) -> np.ndarray:
    """Evaluate boundary data at every node (clip-ball nodes projected)."""
    if isinstance(data, GridField):
        return data.values.copy()
    if isinstance(data, np.ndarray):
        if data.shape != grid.shape:
            raise ParameterError("boundary array must match the grid shape")
        return data.copy()
    mesh = grid.meshgrid()
    vals = np.asarray(data(*mesh), dtype=float)
    if grid.ball is not None:
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        c = np.asarray(tuple(grid.ball[0]) + (0.0,))
        r = grid.ball[1]
        d = np.linalg.norm(pts - c, axis=-1)
        outside = d >= r - 1e-12
        proj = grid.radial_projection(pts[outside])
        pv = np.asarray(data(*[proj[:, k] for k in range(proj.shape[1])]), dtype=float)
        flat = vals.reshape(-1)
        flat[outside] = pv
        vals = flat.reshape(grid.shape)
    return vals


def _free_masks(grid: Grid):
    """(bulk free nodes incl. thin, thin-layer free slice) for the domain."""
    shp = grid.shape
    free = np.ones(shp, dtype=bool)
    for k in range(len(shp) - 1):
        sl = [slice(None)] * len(shp)
        sl[k] = 0
        free[tuple(sl)] = False
        sl[k] = -1
        free[tuple(sl)] = False
    free[..., -1] = False  # top
    if grid.ball is not None:
        mesh = grid.meshgrid()
        c = tuple(grid.ball[0]) + (0.0,)
        r = grid.ball[1]
        d2 = np.zeros(shp)
        for m, ci in zip(mesh, c):
            d2 += (m - ci) ** 2
        free &= d2 < (r - 1e-12) ** 2
    thin_free = free[..., 0].copy()
    return free, thin_free


def _checkerboard(shape) -> np.ndarray:
    idx = np.indices(shape).sum(axis=0)
    return idx % 2 == 0


class _Sweeper:
    """Red-black SOR engine shared by every solve mode."""

    def __init__(self, op: LaOperator, V: np.ndarray, free: np.ndarray,
                 omega: float, thin_clamp: bool, drift=None):
        self.op = op
        self.V = V
        self.omega = omega
        self.thin_clamp = thin_clamp
        self.drift = drift  # (b_vals, coef, theta, thin_free) or None
        self.D = op.diagonal()
        cb = _checkerboard(V.shape)
        self.color_masks = [free & cb, free & ~cb]
        self.free = free

    def sweep(self) -> float:
        upd = 0.0
        om = self.omega
        for mask in self.color_masks:
            S = self.op.neighbor_sum(self.V)
            new = S / self.D
            delta = om * (new - self.V)
            if self.thin_clamp:
                # projection of the relaxed value on the thin layer
                relaxed = self.V[..., 0] + delta[..., 0]
                clamped = np.maximum(relaxed, 0.0)
                delta[..., 0] = clamped - self.V[..., 0]
            dv = np.where(mask, delta, 0.0)
            self.V += dv
            m = float(np.max(np.abs(dv))) if dv.size else 0.0
            upd = max(upd, m)
        if self.drift is not None:
            upd = max(upd, self._drift_update())
        return upd

    def _drift_update(self) -> float:
        b_vals, coef, theta, thin_free, clamp = self.drift
        V = self.V
        grid = self.op.grid
        u0 = V[..., 0]
        gsum = np.zeros_like(u0)
        for k in range(grid.n):
            g = np.zeros_like(u0)
            lo = [slice(None)] * u0.ndim
            hi = [slice(None)] * u0.ndim
            ce = [slice(None)] * u0.ndim
            lo[k] = slice(None, -2)
            hi[k] = slice(2, None)
            ce[k] = slice(1, -1)
            g[tuple(ce)] = (u0[tuple(hi)] - u0[tuple(lo)]) / (2.0 * grid.hx[k])
            gsum += b_vals[..., k] * g
        target = V[..., 1] - coef * gsum
        if clamp:
            target = np.maximum(target, 0.0)
        delta = theta * (target - u0)
        delta = np.where(thin_free, delta, 0.0)
        V[..., 0] += delta
        return float(np.max(np.abs(delta))) if delta.size else 0.0


def _run(op: LaOperator, V: np.ndarray, free: np.ndarray, omega: float,
         thin_clamp: bool, drift, tol: float, max_sweeps: int):
    eng = _Sweeper(op, V, free, omega, thin_clamp, drift)
    scale = max(1.0, float(np.max(np.abs(V))))
    it = 0
    upd = np.inf
    for it in range(1, max_sweeps + 1):
        upd = eng.sweep()
        scale = max(scale, float(np.max(np.abs(V))))
        if upd <= tol * scale:
            break
    converged = upd <= tol * scale
    return it, upd / scale, converged


def _finalize(op: LaOperator, V: np.ndarray, free: np.ndarray, thin_free, w,
              it, upd, converged, spec: ComplementaritySpec | None, omega) -> SolveReport:
    resid = (op.neighbor_sum(V) - op.diagonal() * V) / op.node_mass
    bulk = free.copy()
    bulk[..., 0] = False
    pde_res = float(np.max(np.abs(resid[bulk]))) if bulk.any() else 0.0
    comp_res = 0.0
    active = None
    if spec is not None and spec.kind != "none":
        fl = (1.0 - w.af) * (V[..., 1] - V[..., 0]) / op.grid.hy ** (1.0 - w.af)
        u0 = V[..., 0]
        if spec.has_drift:
            b_vals = spec.drift_values(op.grid)
            gsum = np.zeros_like(u0)
            for k in range(op.grid.n):
                g = np.zeros_like(u0)
                lo = [slice(None)] * u0.ndim
                hi = [slice(None)] * u0.ndim
                ce = [slice(None)] * u0.ndim
                lo[k] = slice(None, -2)
                hi[k] = slice(2, None)
                ce[k] = slice(1, -1)
                g[tuple(ce)] = (u0[tuple(hi)] - u0[tuple(lo)]) / (2.0 * op.grid.hx[k])
                gsum += b_vals[..., k] * g
            lhs = -fl + spec.drift_scale * gsum
        else:
            lhs = -fl
        if spec.constrained:
            comp = np.minimum(lhs, u0)
            comp_res = float(np.max(np.abs(comp[thin_free]))) if thin_free.any() else 0.0
            active = thin_free & (u0 <= 1e-14)
        else:
            comp_res = float(np.max(np.abs(lhs[thin_free]))) if thin_free.any() else 0.0
    energy = edge_energy(V, op)
    return SolveReport(it, upd, pde_res, comp_res, active, energy, converged, omega)


def solve_dirichlet(grid: Grid, w: WeightParam, boundary_data,
                    tol: float = 1e-10, omega: float = 1.8,
                    max_sweeps: int = 100000):
    """Discrete harmonic field for the weighted operator with given data.

    Boundary data lives on the lateral/top boundary (or the clip sphere);
    the thin layer carries the natural zero-flux condition of even fields.
    """
    op = assemble_la(grid, w)
    V = _boundary_values(grid, boundary_data)
    free, thin_free = _free_masks(grid)
    it, upd, conv = _run(op, V, free, omega, False, None, tol, max_sweeps)
    if not conv:
        raise NoConvergence(f"Dirichlet SOR: update {upd:.2e} after {it} sweeps")
    rep = _finalize(op, V, free, thin_free, w, it, upd, conv, None, omega)
    return GridField(grid, V), rep


def solve_signorini(grid: Grid, w: WeightParam, boundary_data,
                    spec: ComplementaritySpec | None = None,
                    tol: float = 1e-10, omega: float = 1.5,
                    max_sweeps: int = 100000):
    """Zero-obstacle thin-constraint problem by projected SOR.

    Free thin nodes are projected onto u >= 0 after each relaxation; the
    converged field satisfies the discrete complementarity
    min(-flux, u) ~ 0 on the thin layer.
    """
    spec = spec or ComplementaritySpec("signorini_zero")
    if spec.kind != "signorini_zero":
        raise ParameterError(f"solve_signorini expects kind signorini_zero, got {spec.kind}")
    op = assemble_la(grid, w)
    V = _boundary_values(grid, boundary_data)
    free, thin_free = _free_masks(grid)
    V[..., 0][thin_free] = np.maximum(V[..., 0][thin_free], 0.0)
    it, upd, conv = _run(op, V, free, omega, True, None, tol, max_sweeps)
    if not conv:
        raise NoConvergence(f"projected SOR: update {upd:.2e} after {it} sweeps")
    rep = _finalize(op, V, free, thin_free, w, it, upd, conv, spec, omega)
    return GridField(grid, V), rep


def solve_drift(grid: Grid, w: WeightParam, boundary_data,
                spec: ComplementaritySpec,
                tol: float = 1e-10, omega: float = 1.5, theta: float = 0.7,
                max_sweeps: int = 100000):
    """Thin-layer drift condition -flux + scale * b . grad_x u = 0 (+ obstacle).

    Requires s > 1/2 (a < 0).  Bulk nodes relax as usual; the thin layer is
    updated by the under-relaxed fixed-point of the flux equation, with a
    projection onto u >= 0 for the drift_signorini kind.
    """
    if w.af >= 0:
        raise ParameterError(f"drift problems need s > 1/2 (a < 0), got a = {w.af}")
    if not spec.has_drift:
        raise ParameterError(f"solve_drift expects a drift kind, got {spec.kind}")
    op = assemble_la(grid, w)
    V = _boundary_values(grid, boundary_data)
    free, thin_free = _free_masks(grid)
    bulk_free = free.copy()
    bulk_free[..., 0] = False
    b_vals = spec.drift_values(grid)
    coef = grid.hy ** (1.0 - w.af) / (1.0 - w.af) * spec.drift_scale
    drift = (b_vals, coef, theta, thin_free, spec.constrained)
    if spec.constrained:
        V[..., 0][thin_free] = np.maximum(V[..., 0][thin_free], 0.0)
    it, upd, conv = _run(op, V, bulk_free, omega, False, drift, tol, max_sweeps)
    if not conv:
        raise NoConvergence(f"drift sweeps: update {upd:.2e} after {it} sweeps")
    rep = _finalize(op, V, free, thin_free, w, it, upd, conv, spec, omega)
    return GridField(grid, V), rep


def solve_patch(parent: GridField, w: WeightParam, free: np.ndarray,
                constrained: bool, tol: float = 1e-10,
                omega_uc: float = 1.8, omega_c: float = 1.5,
                max_sweeps: int = 100000):
    """Replacement minimizer on a node patch, frozen outside `free`.

    Starts from the parent values, so E(patch) <= E(parent) on any edge set
    containing all edges incident to the free nodes.  Work is restricted to
    the bounding box of the patch.
    """
    if not free.any():
        raise ParameterError("empty free set for patch solve")
    idx = np.argwhere(free)
    slicer = tuple(
        slice(max(int(idx[:, k].min()) - 1, 0), min(int(idx[:, k].max()) + 2, parent.values.shape[k]))
        for k in range(free.ndim)
    )
    sub_axes = [ax[slicer[k]] for k, ax in enumerate(parent.grid.x_axes)]
    ys = parent.grid.y_nodes[slicer[-1]]
    if ys[0] != 0.0:
        # patch must keep the thin layer when it contains thin nodes; pad down
        slicer = slicer[:-1] + (slice(0, slicer[-1].stop),)
        ys = parent.grid.y_nodes[slicer[-1]]
    sub_grid = Grid(
        tuple(ax[0] for ax in sub_axes),
        tuple(ax[-1] for ax in sub_axes),
        tuple(len(ax) for ax in sub_axes),
        float(ys[-1]),
        len(ys),
    )
    op = assemble_la(sub_grid, w)
    V = parent.values[slicer].copy()
    fsub = free[slicer]
    thin_free = fsub[..., 0]
    if constrained:
        V[..., 0][thin_free] = np.maximum(V[..., 0][thin_free], 0.0)
    om = omega_c if constrained else omega_uc
    it, upd, conv = _run(op, V, fsub, om, constrained, None, tol, max_sweeps)
    if not conv:
        raise NoConvergence(f"patch SOR: update {upd:.2e} after {it} sweeps")
    out = parent.values.copy()
    out[slicer] = V
    return out, it
