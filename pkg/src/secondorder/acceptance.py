"""The acceptance criteria as runnable checks.

Each ``criterion_*`` function returns a :class:`CriterionResult`. The same
functions back ``tests/test_acceptance.py`` and the ``check`` CLI command.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from . import frechet, quadrature, statistics
from .ensembles import EnsembleSpec
from .moments import MomentTable, g2_series, second_order_moment
from .rng import RngStream
from .transforms import g2_empirical, g2_gue_free, g2_gue_ps

ROOT_SEED = 20240917


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        info = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())
        return f"[{status}] {self.number:>2}. {self.title} ({self.seconds:.1f}s) {info}"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3g}"
    if isinstance(v, complex):
        return f"{v.real:.6g}{v.imag:+.3g}j"
    return str(v)


def _timed(number: int, title: str):
    def wrap(fn: Callable[..., tuple[bool, dict]]):
        def run(*args, **kwargs) -> CriterionResult:
            t0 = time.perf_counter()
            passed, details = fn(*args, **kwargs)
            return CriterionResult(number, title, bool(passed), details, time.perf_counter() - t0)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


def _stream(number: int, seed: int) -> RngStream:
    return RngStream(seed, number)


def formula_grid(points: int = 20, half_width: float = 6.0, cut_margin: float = 0.2) -> np.ndarray:
    axis = np.linspace(-half_width, half_width, points)
    z = (axis[:, None] + 1j * axis[None, :]).ravel()
    near_cut = (np.abs(z.imag) < cut_margin) & (np.abs(z.real) < 2 + cut_margin)
    return z[~near_cut]


@_timed(1, "GUE G2 formula identity")
def criterion_formula_identity(seed: int = ROOT_SEED):
    pts = formula_grid()
    z, w = np.meshgrid(pts, pts, indexing="ij")
    keep = np.abs(z - w) >= 0.2
    z, w = z[keep], w[keep]
    diff = float(np.max(np.abs(g2_gue_free(z, w) - g2_gue_ps(z, w))))
    return diff < 1e-10, {"grid_points": pts.size, "pairs": z.size, "max_abs_diff": diff}


@_timed(2, "contour vs Wick oracle")
def criterion_contour_oracle(seed: int = ROOT_SEED):
    table = MomentTable()
    worst = 0.0
    for m in range(1, 6):
        for n in range(1, 6):
            got = quadrature.rho_via_contour(statistics.monomial(m), statistics.monomial(n))
            ref = quadrature.rho_polynomial_reference([0] * m + [1], [0] * n + [1], table)
            worst = max(worst, abs(got - ref))
    a11 = quadrature.rho_via_contour(statistics.monomial(1), statistics.monomial(1))
    a22 = quadrature.rho_via_contour(statistics.monomial(2), statistics.monomial(2))
    ok = (
        worst < 1e-7
        and second_order_moment(1, 1) == 1
        and second_order_moment(2, 2) == 2
        and abs(a11 - 1) < 1e-7
        and abs(a22 - 2) < 1e-7
    )
    return ok, {"max_abs_diff": worst, "alpha11": a11.real, "alpha22": a22.real}


@_timed(3, "series vs closed form at (4, 4i)")
def criterion_series(seed: int = ROOT_SEED):
    z, w = 4.0, 4.0j
    series = g2_series(z, w, 12)
    closed = complex(g2_gue_free(z, w))
    err = abs(series.value - closed)
    return err <= series.tail_bound, {"abs_err": err, "tail_bound": series.tail_bound}


@_timed(4, "empirical resolvent covariance vs G2")
def criterion_empirical_g2(seed: int = ROOT_SEED, replicas: int = 4000, N: int = 256, threads=None):
    z, w = 3j, 2 + 2j
    est = g2_empirical(EnsembleSpec.gue(N), z, w, replicas, _stream(4, seed), threads=threads)
    closed = complex(g2_gue_free(z, w))
    dev = abs(est.value - closed)
    ok = dev <= 3 * est.stderr and est.stderr < 0.02
    return ok, {
        "estimate": complex(est.value),
        "closed_form": closed,
        "deviation": dev,
        "stderr": est.stderr,
        "exceedances": est.diagnostics["norm_exceedances"],
    }


@_timed(5, "CLT for id and x^2 on GUE")
def criterion_clt(seed: int = ROOT_SEED, replicas: int = 10_000, N_values=(16, 64, 256), threads=None):
    reports = statistics.clt_experiments(
        {"id": (statistics.monomial(1), 1.0), "x2": (statistics.monomial(2), 2.0)},
        EnsembleSpec.gue(),
        N_values,
        replicas,
        _stream(5, seed),
        threads=threads,
    )
    rid, rsq = reports["id"], reports["x2"]
    ks_ok = all(r.ks_pvalue > 0.01 for r in rid.rows)
    var_ok = all(abs(r.variance - 2.0) <= 3 * r.variance_stderr for r in rsq.rows)
    k4_ok = abs(rsq.rows[-1].k4) < abs(rsq.rows[0].k4)
    details = {f"ks_p[N={r.N}]": r.ks_pvalue for r in rid.rows}
    details.update({f"var_x2[N={r.N}]": r.variance for r in rsq.rows})
    details.update({f"k4_x2[N={r.N}]": r.k4 for r in rsq.rows})
    return ks_ok and var_ok and k4_ok, details


def block_diag_pm1() -> EnsembleSpec:
    return EnsembleSpec.block_gaussian([np.diag([1.0, -1.0])])


@_timed(6, "Poincare / A2 bound")
def criterion_poincare(seed: int = ROOT_SEED, replicas: int = 10_000, N: int = 64, threads=None):
    stream = _stream(6, seed)
    cases = {
        "gue_sin": (statistics.named_test_function("sin"), EnsembleSpec.gue()),
        "gue_id": (statistics.monomial(1), EnsembleSpec.gue()),
        "block_sin": (statistics.named_test_function("sin"), block_diag_pm1()),
    }
    details, ok = {}, True
    for k, (name, (f, spec)) in enumerate(cases.items()):
        rep = statistics.poincare_check(f, spec, N, replicas, stream.child(k), threads=threads)
        details[f"{name}_ratio"] = rep.ratio
        ok &= rep.passed
    return ok, details


def unit_norm_additive(n: int = 64) -> EnsembleSpec:
    a = np.diag(np.linspace(-1.0, 1.0, n))
    b = np.diag(np.where(np.arange(n) % 2 == 0, 1.0, -1.0))
    return EnsembleSpec.additive(a, b)


@_timed(7, "A1 tail suite")
def criterion_tail(seed: int = ROOT_SEED, replicas: int = 10_000, threads=None):
    stream = _stream(7, seed)
    gue = statistics.tail_fraction(EnsembleSpec.gue(), 128, 3.0, replicas, stream.child(0), threads=threads)
    add = statistics.tail_fraction(unit_norm_additive(), None, 2.0, 1000, stream.child(1), threads=threads)
    ok = gue.diagnostics["exceedances"] == 0 and add.diagnostics["exceedances"] == 0
    return ok, {
        "gue_exceedances": gue.diagnostics["exceedances"],
        "gue_max_norm": gue.diagnostics["max_norm"],
        "additive_exceedances": add.diagnostics["exceedances"],
        "additive_max_norm": add.diagnostics["max_norm"],
    }


@_timed(8, "truncation gap diagnostic")
def criterion_truncation(seed: int = ROOT_SEED, replicas: int = 10_000, threads=None):
    sin = statistics.named_test_function("sin")
    rep = statistics.truncation_gap(sin, sin, EnsembleSpec.gue(), 8, 2.0, replicas, _stream(8, seed),
                                    threads=threads)
    return rep.passed, {"gap": abs(rep.gap), "gap_stderr": rep.gap_stderr, "tail": rep.tail, "bound": rep.bound}


def _frechet_bound_trials(trials: int, seed: int) -> tuple[bool, float]:
    gen = RngStream(seed, 9).generator()
    u = lambda x, y: np.sin(2 * x) * y**2 + x * y + np.exp(x * y)
    mesh = frechet.FrechetMesh.uniform(u, 1.0, 40)
    var = frechet.frechet_variation(mesh, "upper_bound")
    xs = np.concatenate([np.linspace(-1, 1, 4001), 0.5 * (mesh.grid_x[:-1] + mesh.grid_x[1:])])
    worst = 0.0
    ok = True
    for _ in range(trials):
        p = np.polynomial.Polynomial(gen.standard_normal(gen.integers(1, 7)))
        q = np.polynomial.Polynomial(gen.standard_normal(gen.integers(1, 7)))
        phi = abs(frechet.frechet_integral(p, q, mesh))
        rhs = np.max(np.abs(p(xs))) * np.max(np.abs(q(xs))) * var
        ok &= phi <= rhs
        worst = max(worst, phi / rhs if rhs else 0.0)
    return ok, worst


@_timed(9, "Frechet suite")
def criterion_frechet(seed: int = ROOT_SEED):
    F = lambda x: x**3 / 3
    mesh = frechet.FrechetMesh.uniform(lambda x, y: F(x) * F(y), 1.0, 8)
    one = lambda x: np.ones_like(x)
    vals = frechet.frechet_integral_refined(one, one, mesh, refinements=2)
    oracle = integrate.quad(lambda x: x**2, -1, 1)[0] ** 2
    sep_err = abs(vals[-1] - oracle)
    xy = frechet.FrechetMesh.uniform(lambda x, y: x * y, 1.0, 12)
    exact = frechet.frechet_variation(xy, "exact")
    bound_ok, worst_ratio = _frechet_bound_trials(100, seed)
    ok = sep_err < 1e-6 and abs(exact - 4.0) < 1e-12 and bound_ok
    return ok, {"separable_err": sep_err, "variation_xy": exact, "worst_bound_ratio": worst_ratio}


@_timed(10, "quadrature robustness")
def criterion_quadrature(seed: int = ROOT_SEED):
    C = quadrature.Contour.circle
    x2 = statistics.monomial(2)
    radii = (2.5, 3.0, 4.0)
    vals = [quadrature.rho_via_contour(x2, x2, cz=C(r), cw=C(r + 0.5)) for r in radii]
    invariance = max(abs(a - b) for a, b in itertools.combinations(vals, 2))
    sin = statistics.named_test_function("sin")
    mixed = statistics.polynomial_test_function([0.0, 1.0, 1.0])
    cubic = statistics.polynomial_test_function([0.0, 1.0, 0.0, 1.0])
    realness = max(
        abs(quadrature.rho_via_contour(f, g).imag)
        for f, g in [(x2, x2), (sin, sin), (mixed, cubic), (sin, mixed)]
    )
    symmetry = max(
        abs(quadrature.rho_via_contour(f, g) - quadrature.rho_via_contour(g, f))
        for f, g in [(sin, mixed), (cubic, x2), (sin, cubic)]
    )
    rows = quadrature.rho_contour_sweep(statistics.monomial(1), statistics.monomial(1), [32, 64, 128, 256])
    monotone = quadrature.sweep_is_monotone(rows) and rows[-1].diff < 1e-8
    ok = invariance < 1e-8 and realness < 1e-9 and symmetry < 1e-9 and monotone
    return ok, {"invariance": invariance, "realness": realness, "symmetry": symmetry,
                "sweep_last_diff": rows[-1].diff}


CRITERIA = {
    1: criterion_formula_identity,
    2: criterion_contour_oracle,
    3: criterion_series,
    4: criterion_empirical_g2,
    5: criterion_clt,
    6: criterion_poincare,
    7: criterion_tail,
    8: criterion_truncation,
    9: criterion_frechet,
    10: criterion_quadrature,
}

MONTE_CARLO = {4, 5, 6, 7, 8}


def run_criteria(selection=None, seed: int = ROOT_SEED, threads=None) -> list[CriterionResult]:
    out = []
    for k in sorted(CRITERIA if selection is None else selection):
        fn = CRITERIA[k]
        out.append(fn(seed=seed, threads=threads) if k in MONTE_CARLO else fn(seed=seed))
    return out
