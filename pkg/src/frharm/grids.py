"""Tensor grids on the upper half-space and sampled scalar fields.

The thin space {y = 0} is always a grid layer; fields store upper-half
values only, with even reflection in y implied everywhere downstream.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .weights import WeightParam, y_interval_mass

__all__ = ["Grid", "GridField"]


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid over a box [x_min, x_max]^n x [0, y_max].

    `ball` (thin center, radius) marks a ball-clipped domain: nodes outside
    the ball act as boundary and receive radially projected data.
    """

    x_min: tuple
    x_max: tuple
    shape_x: tuple
    y_max: float
    ny: int
    ball: tuple | None = None

    def __post_init__(self):
        xm = (self.x_min,) if np.isscalar(self.x_min) else tuple(float(v) for v in self.x_min)
        xM = (self.x_max,) if np.isscalar(self.x_max) else tuple(float(v) for v in self.x_max)
        sh = (self.shape_x,) if np.isscalar(self.shape_x) else tuple(int(v) for v in self.shape_x)
        object.__setattr__(self, "x_min", xm)
        object.__setattr__(self, "x_max", xM)
        object.__setattr__(self, "shape_x", sh)
        if not (len(xm) == len(xM) == len(sh)):
            raise ParameterError("inconsistent x-axis specifications")
        if any(m >= M for m, M in zip(xm, xM)) or any(k < 2 for k in sh):
            raise ParameterError("each x-axis needs extent > 0 and at least 2 nodes")
        if self.y_max <= 0 or self.ny < 2:
            raise ParameterError("y-axis needs y_max > 0 and at least 2 nodes")

    @classmethod
    def box(cls, n: int, half_width: float, y_max: float, nx: int, ny: int,
            center=None, ball_radius: float | None = None) -> "Grid":
        c = (0.0,) * n if center is None else tuple(float(v) for v in center)
        g = cls(
            tuple(ci - half_width for ci in c),
            tuple(ci + half_width for ci in c),
            (nx,) * n,
            y_max,
            ny,
            ball=None if ball_radius is None else (c, float(ball_radius)),
        )
        return g

    @property
    def n(self) -> int:
        return len(self.shape_x)

    @property
    def hx(self) -> tuple:
        return tuple(
            (M - m) / (k - 1) for m, M, k in zip(self.x_min, self.x_max, self.shape_x)
        )

    @property
    def hy(self) -> float:
        return self.y_max / (self.ny - 1)

    @property
    def hmax(self) -> float:
        return max(max(self.hx), self.hy)

    @property
    def x_axes(self) -> list:
        return [
            np.linspace(m, M, k) for m, M, k in zip(self.x_min, self.x_max, self.shape_x)
        ]

    @property
    def y_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.y_max, self.ny)

    @property
    def shape(self) -> tuple:
        return self.shape_x + (self.ny,)

    def meshgrid(self):
        return np.meshgrid(*self.x_axes, self.y_nodes, indexing="ij")

    def cell_y_masses(self, w: WeightParam) -> np.ndarray:
        """Exact integral of t^a over each y cell [y_j, y_{j+1}]."""
        ys = self.y_nodes
        return np.array(
            [y_interval_mass(w.a, ys[j], ys[j + 1]) for j in range(self.ny - 1)]
        )

    def dual_y_masses(self, w: WeightParam) -> np.ndarray:
        """Exact integral of t^a over dual cells around each y layer.

        Layer 0 gets the half cell [0, hy/2]; this is finite for every
        a in (-1, 1), unlike the raw midpoint weight |y_0|^a.
        """
        ys = self.y_nodes
        h = self.hy
        out = np.empty(self.ny)
        out[0] = y_interval_mass(w.a, 0.0, h / 2.0)
        for j in range(1, self.ny - 1):
            out[j] = y_interval_mass(w.a, ys[j] - h / 2.0, ys[j] + h / 2.0)
        out[-1] = y_interval_mass(w.a, ys[-1] - h / 2.0, ys[-1])
        return out

    def refine(self) -> "Grid":
        """Halve every spacing (node counts 2k-1)."""
        return replace(
            self,
            shape_x=tuple(2 * k - 1 for k in self.shape_x),
            ny=2 * self.ny - 1,
        )

    def radial_projection(self, pts: np.ndarray) -> np.ndarray:
        """Project points (rows, n+1 coords) onto the clip sphere."""
        if self.ball is None:
            raise ParameterError("grid has no clip ball")
        c = np.asarray(tuple(self.ball[0]) + (0.0,))
        r = self.ball[1]
        v = pts - c
        nr = np.linalg.norm(v, axis=-1, keepdims=True)
        nr[nr == 0] = 1.0
        return c + r * v / nr


@dataclass
class GridField:
    """Scalar samples on a Grid (upper half only, even reflection implied)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ParameterError(
                f"values shape {self.values.shape} != grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("field values must be finite")

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "GridField":
        mesh = grid.meshgrid()
        return cls(grid, np.asarray(fn(*mesh), dtype=float))

    @classmethod
    def zeros(cls, grid: Grid) -> "GridField":
        return cls(grid, np.zeros(grid.shape))

    def copy(self) -> "GridField":
        return GridField(self.grid, self.values.copy())

    @property
    def thin_values(self) -> np.ndarray:
        return self.values[..., 0]

    def cell_values(self) -> np.ndarray:
        """Corner-averaged values on every grid cell (midpoint surrogate)."""
        v = self.values
        for ax in range(v.ndim):
            sl0 = [slice(None)] * v.ndim
            sl1 = [slice(None)] * v.ndim
            sl0[ax] = slice(None, -1)
            sl1[ax] = slice(1, None)
            v = 0.5 * (v[tuple(sl0)] + v[tuple(sl1)])
        return v

    def interp(self, pts: np.ndarray) -> np.ndarray:
        """Multilinear interpolation at points (..., n+1); y is reflected."""
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, pts.shape[-1])
        coords = []
        axes = self.grid.x_axes + [self.grid.y_nodes]
        for k, ax in enumerate(axes):
            q = flat[:, k] if k < len(axes) - 1 else np.abs(flat[:, k])
            t = (q - ax[0]) / (ax[1] - ax[0])
            coords.append(np.clip(t, 0.0, len(ax) - 1.000001))
        out = np.zeros(flat.shape[0])
        d = len(axes)
        base = [np.floor(c).astype(int) for c in coords]
        frac = [c - b for c, b in zip(coords, base)]
        for corner in range(1 << d):
            wgt = np.ones(flat.shape[0])
            idx = []
            for k in range(d):
                if corner >> k & 1:
                    idx.append(np.minimum(base[k] + 1, self.grid.shape[k] - 1))
                    wgt = wgt * frac[k]
                else:
                    idx.append(base[k])
                    wgt = wgt * (1.0 - frac[k])
            out += wgt * self.values[tuple(idx)]
        return out.reshape(pts.shape[:-1])

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        """Flat little-endian float64 dump plus a JSON header sidecar."""
        path = Path(path)
        hdr = {
            "format": "frharm-field-v1",
            "endianness": "little",
            "dtype": "float64",
            "shape": list(self.values.shape),
            "grid": {
                "x_min": list(self.grid.x_min),
                "x_max": list(self.grid.x_max),
                "shape_x": list(self.grid.shape_x),
                "y_max": self.grid.y_max,
                "ny": self.grid.ny,
                "ball": None
                if self.grid.ball is None
                else [list(self.grid.ball[0]), self.grid.ball[1]],
            },
        }
        path.with_suffix(path.suffix + ".json").write_text(
            json.dumps(hdr, sort_keys=True, indent=1)
        )
        data = self.values.astype("<f8").tobytes(order="C")
        path.write_bytes(struct.pack("<I", len(data)) + data)

    @classmethod
    def load(cls, path) -> "GridField":
        path = Path(path)
        hdr = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        if hdr.get("format") != "frharm-field-v1":
            raise ParameterError(f"unknown field file format in {path}")
        raw = path.read_bytes()
        (nbytes,) = struct.unpack("<I", raw[:4])
        vals = np.frombuffer(raw[4 : 4 + nbytes], dtype="<f8").reshape(hdr["shape"])
        g = hdr["grid"]
        ball = None if g["ball"] is None else (tuple(g["ball"][0]), g["ball"][1])
        grid = Grid(
            tuple(g["x_min"]), tuple(g["x_max"]), tuple(g["shape_x"]),
            g["y_max"], g["ny"], ball=ball,
        )
        return cls(grid, vals.copy())

    def export_thin_csv(self, path) -> None:
        """CSV dump of the thin layer (one row per thin node)."""
        import csv

        axes = self.grid.x_axes
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([f"x{k+1}" for k in range(self.grid.n)] + ["u"])
            idx = np.ndindex(*self.grid.shape_x)
            for i in idx:
                row = [repr(axes[k][i[k]]) for k in range(self.grid.n)]
                wr.writerow(row + [repr(float(self.thin_values[i]))])
