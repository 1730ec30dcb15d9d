"""Contour quadrature for the limiting covariance ``rho(f, g)``.

``rho(f, g) = (2 pi i)^-2 \\oint\\oint f(z) g(w) G2(z, w) dz dw`` is evaluated with
the tensor-product trapezoidal rule on two nested, disjoint contours. The
rule converges geometrically for periodic analytic integrands.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, InvalidInputError, SecondOrderError
from .moments import MomentTable
from .transforms import g2_gue_free

DEFAULT_ENCLOSED = 2.0


@dataclass(frozen=True)
class AnalyticFunction:
    evaluator: Callable
    domain_radius: float = math.inf
    name: str = "f"

    def __call__(self, z):
        return self.evaluator(z)

    def cauchy_consistency(self, contour: "Contour", points) -> float:
        """Largest ``|(2 pi i)^-1 \\oint f(z)/(z - x) dz - f(x)|`` over interior ``points``."""
        z, dz = contour.points, contour.weights
        fz = np.asarray(self.evaluator(z), dtype=complex)
        worst = 0.0
        for x in np.atleast_1d(points):
            if not contour.strictly_inside(x):
                raise DomainError(f"{x} is not inside the contour")
            val = np.sum(fz * dz / (z - x)) / (2j * math.pi)
            worst = max(worst, abs(val - complex(self.evaluator(np.asarray(x)))))
        return worst


def as_analytic(f) -> AnalyticFunction:
    if isinstance(f, AnalyticFunction):
        return f
    ext = getattr(f, "analytic_extension", None)
    if isinstance(ext, AnalyticFunction):
        return ext
    if callable(f):
        return AnalyticFunction(f, math.inf, getattr(f, "name", getattr(f, "__name__", "f")))
    raise InvalidInputError(f"cannot treat {f!r} as an analytic function")


@dataclass(frozen=True)
class Contour:
    """Counterclockwise circle or axis-aligned ellipse centered on the real axis.

    Parametrized as ``center + semi_x cos t + i semi_y sin t`` at ``nodes``
    equispaced values of t. ``enclosed`` is the half-width of the real
    segment ``[-enclosed, enclosed]`` the contour must strictly surround.
    """

    kind: str
    center: float
    semi_x: float
    semi_y: float
    nodes: int = 256
    enclosed: float = DEFAULT_ENCLOSED
    points: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("circle", "ellipse"):
            raise ConfigurationError(f"unknown contour kind {self.kind!r}")
        if self.nodes < 16 or self.nodes % 2:
            raise ConfigurationError(f"nodes must be even and >= 16, got {self.nodes}")
        if not (self.semi_x > 0 and self.semi_y > 0):
            raise ConfigurationError("contour semi-axes must be positive")
        if not (self.center - self.semi_x < -self.enclosed and self.center + self.semi_x > self.enclosed):
            raise ConfigurationError(
                f"contour does not strictly enclose [-{self.enclosed}, {self.enclosed}]"
            )
        t = 2 * math.pi * np.arange(self.nodes) / self.nodes
        z = self.center + self.semi_x * np.cos(t) + 1j * self.semi_y * np.sin(t)
        dz = -self.semi_x * np.sin(t) + 1j * self.semi_y * np.cos(t)
        object.__setattr__(self, "points", z)
        # Trapezoid weights: z'(t_k) * 2 pi / n.
        object.__setattr__(self, "weights", dz * (2 * math.pi / self.nodes))

    @classmethod
    def circle(cls, radius: float, nodes: int = 256, center: float = 0.0, enclosed: float = DEFAULT_ENCLOSED):
        return cls("circle", center, radius, radius, nodes, enclosed)

    @classmethod
    def ellipse(cls, semi_x: float, semi_y: float, nodes: int = 256, center: float = 0.0,
                enclosed: float = DEFAULT_ENCLOSED):
        return cls("ellipse", center, semi_x, semi_y, nodes, enclosed)

    def with_nodes(self, nodes: int) -> "Contour":
        return Contour(self.kind, self.center, self.semi_x, self.semi_y, nodes, self.enclosed)

    def level(self, z) -> np.ndarray:
        """Implicit equation value: < 1 inside, 1 on the curve, > 1 outside."""
        z = np.asarray(z, dtype=complex)
        return ((z.real - self.center) / self.semi_x) ** 2 + (z.imag / self.semi_y) ** 2

    def strictly_inside(self, z) -> bool:
        return bool(np.all(self.level(z) < 1 - 1e-12))

    def dense(self, count: int = 4096) -> np.ndarray:
        t = 2 * math.pi * np.arange(count) / count
        return self.center + self.semi_x * np.cos(t) + 1j * self.semi_y * np.sin(t)


def check_disjoint(a: Contour, b: Contour) -> None:
    """Raise unless one contour lies strictly inside the other."""
    if a.strictly_inside(b.dense()) or b.strictly_inside(a.dense()):
        return
    raise ConfigurationError("z- and w-contours intersect; use nested contours with distinct radii")


def rho_via_contour(f, g, g2: Callable = g2_gue_free, cz: Contour | None = None,
                    cw: Contour | None = None) -> complex:
    """``(2 pi i)^-2 \\oint\\oint f(z) g(w) G2(z, w) dz dw`` by the trapezoidal rule.

    Defaults are circles of radius 3 (z) and 3.5 (w) with 256 nodes each.
    The rounding error scales with ``max|f| max|g|`` on the contours, so for
    entire functions that grow fast off the real axis pass tighter contours.
    """
    cz = Contour.circle(3.0) if cz is None else cz
    cw = Contour.circle(3.5) if cw is None else cw
    check_disjoint(cz, cw)
    f, g = as_analytic(f), as_analytic(g)
    fz = np.asarray(f(cz.points), dtype=complex) * cz.weights
    gw = np.asarray(g(cw.points), dtype=complex) * cw.weights
    try:
        kernel = g2(cz.points[:, None], cw.points[None, :])
    except SecondOrderError as exc:
        bad = _locate_failure(g2, cz.points, cw.points)
        raise type(exc)(f"{exc} (at z={bad[0]}, w={bad[1]})") from exc
    return complex(fz @ kernel @ gw / (2j * math.pi) ** 2)


def _locate_failure(g2, zs, ws):
    for z in zs:
        for w in ws:
            try:
                g2(z, w)
            except SecondOrderError:
                return z, w
    return None, None


def rho_polynomial_reference(p: Sequence[float], q: Sequence[float], table: MomentTable | None = None):
    """Exact bilinear extension ``sum_j sum_k p_j q_k alpha_{j,k}`` (ascending coefficients)."""
    table = MomentTable() if table is None else table
    total = 0
    for j, pj in enumerate(p):
        for k, qk in enumerate(q):
            if pj and qk and j and k:
                total += pj * qk * table.alpha(j, k)
    return total


def cauchy_derivative(f, x: float, c: Contour) -> complex:
    """``f'(x) = (2 pi i)^-1 \\oint f(z) (z - x)^-2 dz``."""
    if not c.strictly_inside(x):
        raise DomainError(f"x = {x} is not strictly inside the contour")
    f = as_analytic(f)
    fz = np.asarray(f(c.points), dtype=complex)
    if fz.ndim == 0:
        fz = np.full(c.points.shape, complex(fz))
    return complex(np.sum(fz * c.weights / (c.points - x) ** 2) / (2j * math.pi))


class SweepRow(NamedTuple):
    nodes: int
    value: complex
    diff: float  # |value - previous value|; nan for the first row


def convergence_sweep(integral_op: Callable[[int], complex], node_counts: Sequence[int]) -> list[SweepRow]:
    """Evaluate ``integral_op(nodes)`` for ascending node counts."""
    if list(node_counts) != sorted(node_counts):
        raise InvalidInputError("node counts must be ascending")
    rows: list[SweepRow] = []
    prev = None
    for n in node_counts:
        v = complex(integral_op(n))
        rows.append(SweepRow(n, v, math.nan if prev is None else abs(v - prev)))
        prev = v
    return rows


def sweep_is_monotone(rows: Sequence[SweepRow], floor: float = 1e-13) -> bool:
    """True when successive differences decrease until they hit the rounding floor."""
    diffs = [r.diff for r in rows[1:]]
    return all(b <= a or b <= floor for a, b in zip(diffs, diffs[1:]))


def rho_contour_sweep(f, g, node_counts: Sequence[int], rz: float = 3.0, rw: float = 3.5,
                      g2: Callable = g2_gue_free) -> list[SweepRow]:
    return convergence_sweep(
        lambda n: rho_via_contour(f, g, g2, Contour.circle(rz, n), Contour.circle(rw, n)), node_counts
    )
