"""Two-dimensional Frechet calculus on a rectangular mesh of ``[-M, M]^2``.

A kernel ``u`` is sampled on a tensor grid; its rectangle increments
``Du(s0, s1; t0, t1) = u(s1,t1) - u(s1,t0) - u(s0,t1) + u(s0,t0)`` drive the
Frechet variation and the bilinear Frechet integral.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CapacityError, InvalidInputError

EXACT_VARIATION_CAP = 21  # grid points along x, i.e. at most 20 sign choices


@dataclass(frozen=True, eq=False)
class FrechetMesh:
    grid_x: np.ndarray
    grid_y: np.ndarray
    values: np.ndarray
    kernel: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        gx = np.asarray(self.grid_x, dtype=float)
        gy = np.asarray(self.grid_y, dtype=float)
        vals = np.asarray(self.values)
        if gx.ndim != 1 or gy.ndim != 1 or gx.size < 2 or gy.size < 2:
            raise InvalidInputError("mesh grids must be 1-D with at least two points")
        if np.any(np.diff(gx) <= 0) or np.any(np.diff(gy) <= 0):
            raise InvalidInputError("mesh grids must be strictly ascending")
        if not (np.isclose(gx[0], -gx[-1]) and np.isclose(gy[0], -gy[-1]) and np.isclose(gx[-1], gy[-1])):
            raise InvalidInputError("mesh must cover [-M, M]^2 with both endpoints")
        if vals.shape != (gx.size, gy.size):
            raise InvalidInputError(f"values shape {vals.shape} does not match grids ({gx.size}, {gy.size})")
        object.__setattr__(self, "grid_x", gx)
        object.__setattr__(self, "grid_y", gy)
        object.__setattr__(self, "values", vals)

    @property
    def M(self) -> float:
        return float(self.grid_x[-1])

    @classmethod
    def from_kernel(cls, u: Callable, grid_x, grid_y) -> "FrechetMesh":
        gx = np.asarray(grid_x, dtype=float)
        gy = np.asarray(grid_y, dtype=float)
        return cls(gx, gy, u(gx[:, None], gy[None, :]), kernel=u)

    @classmethod
    def uniform(cls, u: Callable, M: float, cells: int, cells_y: int | None = None) -> "FrechetMesh":
        cells_y = cells if cells_y is None else cells_y
        return cls.from_kernel(u, np.linspace(-M, M, cells + 1), np.linspace(-M, M, cells_y + 1))

    def refined(self) -> "FrechetMesh":
        """Insert cell midpoints along both axes; needs the kernel callable."""
        if self.kernel is None:
            raise InvalidInputError("refinement needs the kernel as a callable")

        def split(g):
            out = np.empty(2 * g.size - 1)
            out[0::2] = g
            out[1::2] = 0.5 * (g[:-1] + g[1:])
            return out

        return FrechetMesh.from_kernel(self.kernel, split(self.grid_x), split(self.grid_y))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([repr(float(v)) for v in self.grid_x])
        w.writerow([repr(float(v)) for v in self.grid_y])
        for row in np.real(self.values):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "FrechetMesh":
        """Row 1: grid_x; row 2: grid_y; then one row of u values per grid_x point."""
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        if len(rows) < 3:
            raise InvalidInputError("mesh CSV needs grid_x, grid_y and at least one value row")
        try:
            gx = np.array([float(v) for v in rows[0]])
            gy = np.array([float(v) for v in rows[1]])
            vals = np.array([[float(v) for v in r] for r in rows[2:]])
        except ValueError as exc:
            raise InvalidInputError(f"mesh CSV has a non-numeric entry: {exc}") from None
        return cls(gx, gy, vals)


def rectangle_increments(mesh: FrechetMesh) -> np.ndarray:
    """``a[i, j] = Du(s_i, s_{i+1}; t_j, t_{j+1})`` for every cell."""
    u = mesh.values
    return u[1:, 1:] - u[1:, :-1] - u[:-1, 1:] + u[:-1, :-1]


def frechet_variation(mesh: FrechetMesh, mode: str = "upper_bound") -> float:
    """Frechet variation of the sampled kernel on this mesh.

    ``exact`` maximizes ``sum_j |sum_i sigma_i a_ij|`` over all sign vectors
    (the inner maximization over column signs is the absolute value);
    ``upper_bound`` returns ``sum |a_ij|``.
    """
    a = rectangle_increments(mesh)
    if mode == "upper_bound":
        return float(np.sum(np.abs(a)))
    if mode != "exact":
        raise InvalidInputError(f"mode must be 'exact' or 'upper_bound', got {mode!r}")
    if mesh.grid_x.size > EXACT_VARIATION_CAP:
        raise CapacityError(f"exact variation needs at most {EXACT_VARIATION_CAP} x-grid points")
    m = a.shape[0]
    if m == 1:
        return float(np.sum(np.abs(a)))
    # sigma and -sigma give the same value, so fix sigma_0 = +1.
    best = 0.0
    free = m - 1
    chunk = 1 << min(free, 14)
    for start in range(0, 1 << free, chunk):
        codes = np.arange(start, start + chunk, dtype=np.int64)
        bits = (codes[:, None] >> np.arange(free)) & 1
        signs = np.concatenate([np.ones((chunk, 1)), 1 - 2 * bits], axis=1)
        best = max(best, float(np.max(np.sum(np.abs(signs @ a), axis=1))))
    return best


def _midpoints(g: np.ndarray) -> np.ndarray:
    return 0.5 * (g[:-1] + g[1:])


def frechet_integral(f: Callable, g: Callable, mesh: FrechetMesh):
    """``sum_ij f(xi_i) g(eta_j) a_ij`` with cell-midpoint tags."""
    a = rectangle_increments(mesh)
    fx = np.asarray(f(_midpoints(mesh.grid_x)))
    gy = np.asarray(g(_midpoints(mesh.grid_y)))
    fx = np.broadcast_to(fx, (a.shape[0],))
    gy = np.broadcast_to(gy, (a.shape[1],))
    return fx @ a @ gy


def frechet_integral_refined(f: Callable, g: Callable, mesh: FrechetMesh, refinements: int = 1):
    """Values on the mesh and on ``refinements`` successive 2x refinements."""
    values = [frechet_integral(f, g, mesh)]
    for _ in range(refinements):
        mesh = mesh.refined()
        values.append(frechet_integral(f, g, mesh))
    return values


def rho_from_kernel(f, g, mesh: FrechetMesh):
    """``\\int\\int f'(x) g'(y) du(x, y)`` on the mesh.

    ``f`` and ``g`` need a ``derivative`` method (e.g. a ``TestFunction``).
    """
    return frechet_integral(f.derivative, g.derivative, mesh)
