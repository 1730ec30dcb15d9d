"""Monte Carlo estimators for linear eigenvalue statistics.

Covers covariances and k-statistics with jackknife errors, the A1/A2
diagnostics (tail fraction, Poincare variance bound), the truncation gap,
the C^1 extension of a function outside ``[-M, M]``, Chebyshev
approximation, and the CLT experiment.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial
from scipy import optimize, stats

from .ensembles import EnsembleSpec, sample_spectra
from .errors import ConfigurationError, InvalidInputError
from .rng import as_stream

Z_99 = 2.3263478740408408  # one-sided 99% normal quantile


@dataclass
class EstimateWithError:
    value: complex | float
    stderr: float
    replicas: int
    seed: int = 0
    diagnostics: dict = field(default_factory=dict)

    def within(self, target, sigmas: float) -> bool:
        return abs(self.value - target) <= sigmas * self.stderr

    def to_dict(self) -> dict:
        out = {"stderr": float(self.stderr), "replicas": int(self.replicas), "seed": int(self.seed)}
        if isinstance(self.value, complex) or np.iscomplexobj(self.value):
            out["value_re"] = float(np.real(self.value))
            out["value_im"] = float(np.imag(self.value))
        else:
            out["value"] = float(self.value)
        out["diagnostics"] = {k: _plain(v) for k, v in self.diagnostics.items()}
        return out


def _plain(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (complex, np.complexfloating)):
        return [float(v.real), float(v.imag)]
    return v


# -- jackknife primitives --------------------------------------------------


def _jackknife_stderr(loo: np.ndarray) -> float:
    n = loo.shape[0]
    dev = loo - loo.mean()
    return float(np.sqrt((n - 1) / n * np.sum(np.abs(dev) ** 2)))


def covariance_with_loo(x, y) -> tuple[complex | float, np.ndarray]:
    """Unbiased sample covariance (bilinear, no conjugation) and its leave-one-out values."""
    x = np.asarray(x)
    y = np.asarray(y)
    n = x.shape[0]
    if n < 3:
        raise InvalidInputError("need at least 3 samples for a jackknifed covariance")
    # Centering first keeps the leave-one-out updates well conditioned.
    xc = x - x.mean()
    yc = y - y.mean()
    sxy = np.sum(xc * yc)
    full = sxy / (n - 1)
    # With centered data sum(xc) = 0, so the leave-one-out sums are -xc[i], -yc[i].
    loo = (sxy - xc * yc - xc * yc / (n - 1)) / (n - 2)
    return full, loo


def sample_covariance(x, y) -> tuple[complex | float, float]:
    full, loo = covariance_with_loo(x, y)
    return full, _jackknife_stderr(loo)


def _k_from_power_sums(n, s1, s2, s3, s4, r: int):
    if r == 2:
        return (n * s2 - s1**2) / (n * (n - 1))
    if r == 3:
        return (2 * s1**3 - 3 * n * s1 * s2 + n**2 * s3) / (n * (n - 1) * (n - 2))
    if r == 4:
        num = (
            -6 * s1**4
            + 12 * n * s1**2 * s2
            - 3 * n * (n - 1) * s2**2
            - 4 * n * (n + 1) * s1 * s3
            + n**2 * (n + 1) * s4
        )
        return num / (n * (n - 1) * (n - 2) * (n - 3))
    raise InvalidInputError(f"k-statistics are provided for orders 2, 3, 4; got {r}")


def k_statistic(x, r: int) -> float:
    """Fisher's unbiased estimator of the r-th cumulant, r in {2, 3, 4}."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    n = x.shape[0]
    if n <= r:
        raise InvalidInputError(f"need more than {r} samples for k_{r}")
    s = [np.sum(x**p) for p in (1, 2, 3, 4)]
    return float(_k_from_power_sums(n, *s, r))


def k_statistic_with_error(x, r: int) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    n = x.shape[0]
    if n <= r + 1:
        raise InvalidInputError(f"need more than {r + 1} samples for a jackknifed k_{r}")
    pw = [x**p for p in (1, 2, 3, 4)]
    s = [p.sum() for p in pw]
    full = _k_from_power_sums(n, *s, r)
    loo = _k_from_power_sums(n - 1, *(si - pi for si, pi in zip(s, pw)), r)
    return float(full), _jackknife_stderr(loo)


# -- test functions --------------------------------------------------------


@dataclass
class TestFunction:
    """A test function with its derivative and the sup norms the bounds need.

    ``sup_bound`` is ``||f||_inf`` and ``sup_deriv_bound`` is ``||f'||_inf``
    over the real line (``inf`` when unbounded). ``analytic_extension``, when
    present, is an entire or suitably analytic continuation usable on contours.
    """

    __test__ = False  # not a pytest class

    evaluator: Callable
    derivative_evaluator: Callable
    sup_deriv_bound: float = math.inf
    sup_bound: float = math.inf
    analytic_extension: object = None
    name: str = "f"
    real_valued: bool = True

    def __call__(self, x):
        return self.evaluator(x)

    def derivative(self, x):
        return self.derivative_evaluator(x)


def _analytic(fn, name, radius=math.inf):
    from .quadrature import AnalyticFunction

    return AnalyticFunction(fn, radius, name)


def polynomial_test_function(coeffs: Sequence[float], name: str | None = None) -> TestFunction:
    """``sum_k coeffs[k] x^k`` (ascending coefficients)."""
    p = Polynomial(np.asarray(coeffs))
    dp = p.deriv()
    degree = len(np.trim_zeros(np.asarray(coeffs, dtype=complex), "b")) - 1
    bounded_deriv = degree <= 1
    return TestFunction(
        evaluator=p,
        derivative_evaluator=dp,
        sup_deriv_bound=float(abs(dp.coef[0])) if bounded_deriv else math.inf,
        sup_bound=float(abs(p.coef[0])) if degree <= 0 else math.inf,
        analytic_extension=_analytic(p, name or "poly"),
        name=name or f"poly{list(coeffs)}",
        real_valued=bool(np.isrealobj(np.asarray(coeffs))),
    )


def monomial(k: int) -> TestFunction:
    coeffs = [0.0] * k + [1.0]
    return polynomial_test_function(coeffs, name="id" if k == 1 else f"x{k}")


def resolvent_test_function(z: complex) -> TestFunction:
    """``r_z(x) = 1/(z - x)`` for non-real z."""
    z = complex(z)
    if z.imag == 0:
        raise InvalidInputError("resolvent test function needs a non-real z")
    return TestFunction(
        evaluator=lambda x: 1.0 / (z - np.asarray(x)),
        derivative_evaluator=lambda x: 1.0 / (z - np.asarray(x)) ** 2,
        sup_deriv_bound=1.0 / z.imag**2,
        sup_bound=1.0 / abs(z.imag),
        name=f"r({z})",
        real_valued=False,
    )


def _exp_neg_sq():
    f = lambda x: np.exp(-np.asarray(x) ** 2)
    df = lambda x: -2 * np.asarray(x) * np.exp(-np.asarray(x) ** 2)
    return TestFunction(f, df, math.sqrt(2 / math.e), 1.0, _analytic(f, "exp_neg_x2"), "exp_neg_x2")


_NAMED = {
    "one": lambda: polynomial_test_function([1.0], "one"),
    "id": lambda: monomial(1),
    "x2": lambda: monomial(2),
    "x3": lambda: monomial(3),
    "x4": lambda: monomial(4),
    "sin": lambda: TestFunction(np.sin, np.cos, 1.0, 1.0, _analytic(np.sin, "sin"), "sin"),
    "cos": lambda: TestFunction(np.cos, lambda x: -np.sin(x), 1.0, 1.0, _analytic(np.cos, "cos"), "cos"),
    "exp_neg_x2": _exp_neg_sq,
}


def named_test_function(name: str) -> TestFunction:
    try:
        return _NAMED[name]()
    except KeyError:
        raise InvalidInputError(f"unknown test function {name!r}; known: {sorted(_NAMED)}") from None


def test_function_names() -> list[str]:
    return sorted(_NAMED)


test_function_names.__test__ = False


# -- linear statistics -----------------------------------------------------


def linear_statistic(f, spectrum):
    """``Tr f(X) = sum_k f(lambda_k)``; a 2-D input gives one value per row."""
    lam = np.asarray(spectrum, dtype=float)
    return np.sum(f(lam), axis=-1)


def _estimate(value, err, n, stream, **diag) -> EstimateWithError:
    return EstimateWithError(value, err, n, stream.seed, dict(stream_id=stream.stream_id, **diag))


def covariance_mc(
    f, g, spec: EnsembleSpec, N: int | None, replicas: int, rng, threads: int | None = None
) -> EstimateWithError:
    """Sample ``Cov(Tr f(X_N), Tr g(X_N))`` across independent draws."""
    if replicas < 100:
        raise InvalidInputError("covariance_mc needs at least 100 replicas")
    stream = as_stream(rng)
    spectra = sample_spectra(spec, N, replicas, stream, threads=threads)
    value, err = sample_covariance(linear_statistic(f, spectra), linear_statistic(g, spectra))
    return _estimate(value, err, replicas, stream)


def cumulant_mc(
    f, spec: EnsembleSpec, N: int | None, r: int, replicas: int, rng, threads: int | None = None
) -> EstimateWithError:
    """Unbiased k-statistic of order r of ``Tr f(X_N)``."""
    if r not in (2, 3, 4):
        raise InvalidInputError("cumulant order must be 2, 3 or 4")
    if r >= 3 and replicas < 1000:
        raise InvalidInputError("third and fourth cumulants need at least 1000 replicas")
    stream = as_stream(rng)
    spectra = sample_spectra(spec, N, replicas, stream, threads=threads)
    x = np.real(linear_statistic(f, spectra))
    value, err = k_statistic_with_error(x, r)
    return _estimate(value, err, replicas, stream)


# -- assumption diagnostics ------------------------------------------------


@dataclass
class PoincareReport:
    variance: EstimateWithError
    bound: float
    ratio: float
    upper_ratio: float
    passed: bool


def poincare_check(
    f: TestFunction, spec: EnsembleSpec, N: int | None, replicas: int, rng, threads: int | None = None
) -> PoincareReport:
    """Test ``Var Tr f(X_N) <= K ||f'||_inf^2``.

    ``ratio`` is the point estimate over the bound and ``upper_ratio`` uses the
    one-sided 99% upper confidence limit. The check fails only when the
    variance is significantly above the bound, i.e. when even the 99% lower
    confidence limit exceeds it.
    """
    if not math.isfinite(f.sup_deriv_bound):
        raise ConfigurationError(f"{f.name}: Poincare check needs a finite ||f'||_inf")
    stream = as_stream(rng)
    spectra = sample_spectra(spec, N, replicas, stream, threads=threads)
    x = linear_statistic(f, spectra)
    var, err = sample_covariance(x, np.conj(x))
    var = float(np.real(var))
    est = _estimate(var, err, replicas, stream)
    bound = spec.K_bound * f.sup_deriv_bound**2
    if bound == 0:
        passed = var - Z_99 * err <= 0
        return PoincareReport(est, bound, math.inf if var > 0 else 0.0, math.inf, passed)
    return PoincareReport(
        variance=est,
        bound=bound,
        ratio=var / bound,
        upper_ratio=(var + Z_99 * err) / bound,
        passed=(var - Z_99 * err) <= bound,
    )


def tail_fraction(
    spec: EnsembleSpec, N: int | None, M: float, replicas: int, rng, threads: int | None = None
) -> EstimateWithError:
    """Fraction of draws with ``||X_N|| > M``; also reports ``N^8`` times it."""
    if replicas < 1000:
        raise InvalidInputError("tail_fraction needs at least 1000 replicas")
    stream = as_stream(rng)
    spectra = sample_spectra(spec, N, replicas, stream, threads=threads)
    norms = np.maximum(np.abs(spectra[:, 0]), np.abs(spectra[:, -1]))
    hits = int(np.sum(norms > M))
    p = hits / replicas
    n = spec.size(N)
    return _estimate(
        p,
        math.sqrt(p * (1 - p) / replicas),
        replicas,
        stream,
        exceedances=hits,
        N8_fraction=float(n) ** 8 * p,
        max_norm=float(norms.max()),
        M=float(M),
    )


@dataclass
class TruncationReport:
    rho_full: EstimateWithError
    rho_truncated: EstimateWithError
    gap: complex | float
    gap_stderr: float
    tail: float
    bound: float
    passed: bool


def truncation_gap(
    f: TestFunction,
    g: TestFunction,
    spec: EnsembleSpec,
    N: int | None,
    M: float,
    replicas: int,
    rng,
    threads: int | None = None,
) -> TruncationReport:
    """Compare ``rho_N(f, g)`` with ``rho_N(f_M, g_M)`` on common draws.

    ``f_M = f * 1_{|x| <= M}``. The bound is
    ``4 ||f||_inf ||g||_inf N^2 P(||X_N|| > M)^(1/4)`` with the empirical tail
    fraction plugged in; ``passed`` allows four jackknife errors of slack.
    """
    if not (math.isfinite(f.sup_bound) and math.isfinite(g.sup_bound)):
        raise ConfigurationError("truncation gap needs bounded f and g")
    stream = as_stream(rng)
    spectra = sample_spectra(spec, N, replicas, stream, threads=threads)
    keep = np.abs(spectra) <= M
    fv, gv = f(spectra), g(spectra)
    a, b = fv.sum(axis=-1), gv.sum(axis=-1)
    at = np.where(keep, fv, 0.0).sum(axis=-1)
    bt = np.where(keep, gv, 0.0).sum(axis=-1)
    full, loo_full = covariance_with_loo(a, b)
    trunc, loo_trunc = covariance_with_loo(at, bt)
    gap = full - trunc
    gap_err = _jackknife_stderr(loo_full - loo_trunc)
    norms = np.maximum(np.abs(spectra[:, 0]), np.abs(spectra[:, -1]))
    tail = float(np.mean(norms > M))
    n = spec.size(N)
    bound = 4 * f.sup_bound * g.sup_bound * n**2 * tail**0.25
    return TruncationReport(
        rho_full=_estimate(full, _jackknife_stderr(loo_full), replicas, stream),
        rho_truncated=_estimate(trunc, _jackknife_stderr(loo_trunc), replicas, stream),
        gap=gap,
        gap_stderr=gap_err,
        tail=tail,
        bound=bound,
        passed=bool(abs(gap) <= bound + 4 * gap_err),
    )


# -- function approximation ------------------------------------------------


def sup_norm(h: Callable, a: float, b: float, points: int = 10001) -> float:
    """``max |h|`` on ``[a, b]``: dense grid followed by bounded Brent refinement."""
    x = np.linspace(a, b, points)
    v = np.abs(h(x))
    k = int(np.argmax(v))
    best = float(v[k])
    lo, hi = x[max(k - 1, 0)], x[min(k + 1, points - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda t: -float(np.abs(h(np.array([t])))[0]), bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-12},
        )
        best = max(best, -float(res.fun))
    return best


def c1_extension(f: TestFunction, M: float) -> TestFunction:
    """Extend ``f|[-M, M]`` to a C^1 function on the line with the same ``||f'||``.

    Outside ``[-M, M]`` the function continues along its tangent, damped by
    ``exp(-alpha |x - (+-M)|)`` with ``alpha = ||f'||_M / (e ||f||_M)``. The
    result satisfies ``||f~||_inf <= 2 ||f||_M`` and ``||f~'||_inf = ||f'||_M``.
    """
    norm_f = sup_norm(f, -M, M)
    norm_df = sup_norm(f.derivative, -M, M)
    if norm_f == 0:
        zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
        return TestFunction(zero, zero, 0.0, 0.0, None, f"{f.name}~", f.real_valued)
    alpha = norm_df / (math.e * norm_f)
    fp, fm = f(np.array([M]))[0], f(np.array([-M]))[0]
    dp, dm = f.derivative(np.array([M]))[0], f.derivative(np.array([-M]))[0]

    def ext(x):
        x = np.asarray(x, dtype=float)
        inside = np.where(np.abs(x) <= M, x, 0.0)
        t = np.maximum(x - M, 0.0)
        s = np.minimum(x + M, 0.0)
        return np.where(
            x > M,
            fp + dp * t * np.exp(-alpha * t),
            np.where(x < -M, fm + dm * s * np.exp(alpha * s), f(inside)),
        )

    def dext(x):
        x = np.asarray(x, dtype=float)
        inside = np.where(np.abs(x) <= M, x, 0.0)
        t = np.maximum(x - M, 0.0)
        s = np.minimum(x + M, 0.0)
        return np.where(
            x > M,
            dp * np.exp(-alpha * t) * (1 - alpha * t),
            np.where(x < -M, dm * np.exp(alpha * s) * (1 + alpha * s), f.derivative(inside)),
        )

    return TestFunction(ext, dext, norm_df, 2 * norm_f, None, f"{f.name}~", f.real_valued)


@dataclass
class ChebyshevApprox:
    poly: Chebyshev
    value_error: float
    derivative_error: float

    def __call__(self, x):
        return self.poly(x)


def chebyshev_approx(f: TestFunction, M: float, degree: int, grid_points: int = 10001) -> ChebyshevApprox:
    """Chebyshev interpolant of f on ``[-M, M]`` with C^0 and C^1 errors on a grid."""
    poly = Chebyshev.interpolate(f.evaluator, degree, domain=[-M, M])
    dpoly = poly.deriv()
    x = np.linspace(-M, M, grid_points)
    return ChebyshevApprox(
        poly,
        float(np.max(np.abs(poly(x) - f(x)))),
        float(np.max(np.abs(dpoly(x) - f.derivative(x)))),
    )


# -- CLT experiment --------------------------------------------------------


@dataclass
class CltRow:
    N: int
    mean: float
    mean_stderr: float
    variance: float
    variance_stderr: float
    k3: float
    k3_stderr: float
    k4: float
    k4_stderr: float
    ks_statistic: float
    ks_pvalue: float


@dataclass
class CltReport:
    name: str
    rho_target: float
    replicas: int
    seed: int
    rows: list[CltRow]

    @property
    def N_values(self) -> list[int]:
        return [r.N for r in self.rows]

    def _decreasing(self, attr: str) -> bool:
        return abs(getattr(self.rows[-1], attr)) < abs(getattr(self.rows[0], attr))

    @property
    def k3_decreasing(self) -> bool:
        return self._decreasing("k3")

    @property
    def k4_decreasing(self) -> bool:
        return self._decreasing("k4")

    @property
    def ks_decreasing(self) -> bool:
        return self._decreasing("ks_statistic")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "rho_target": self.rho_target,
            "replicas": self.replicas,
            "seed": self.seed,
            "rows": [vars(r) for r in self.rows],
            "trend": {
                "k3_decreasing": self.k3_decreasing,
                "k4_decreasing": self.k4_decreasing,
                "ks_decreasing": self.ks_decreasing,
            },
        }


def clt_experiments(
    tests: Mapping[str, tuple[TestFunction, float]],
    spec: EnsembleSpec,
    N_values: Sequence[int],
    replicas: int,
    rng,
    threads: int | None = None,
) -> dict[str, CltReport]:
    """Run the CLT experiment for several test functions on shared draws.

    For each N a pilot batch fixes the centering constant and an independent
    main batch of the same size provides the statistics, so the main batch is
    never centered with its own mean.
    """
    for name, (f, target) in tests.items():
        if not target > 0:
            raise ConfigurationError(f"{name}: target variance must be positive, got {target}")
        if not f.real_valued:
            raise ConfigurationError(f"{name}: the CLT applies to real-valued test functions")
    stream = as_stream(rng)
    rows: dict[str, list[CltRow]] = {name: [] for name in tests}
    for k, N in enumerate(N_values):
        pilot = sample_spectra(spec, N, replicas, stream.child(2 * k), threads=threads)
        main = sample_spectra(spec, N, replicas, stream.child(2 * k + 1), threads=threads)
        for name, (f, target) in tests.items():
            center = float(np.mean(np.real(linear_statistic(f, pilot))))
            x = np.real(linear_statistic(f, main)) - center
            var, var_err = k_statistic_with_error(x, 2)
            k3, k3_err = k_statistic_with_error(x, 3)
            k4, k4_err = k_statistic_with_error(x, 4)
            ks = stats.kstest(x, "norm", args=(0.0, math.sqrt(target)))
            mean_err = math.sqrt(2 * max(var, 0.0) / replicas)
            rows[name].append(
                CltRow(int(N), float(x.mean()), mean_err, var, var_err, k3, k3_err, k4, k4_err,
                       float(ks.statistic), float(ks.pvalue))
            )
    return {
        name: CltReport(name, float(target), replicas, stream.seed, rows[name])
        for name, (f, target) in tests.items()
    }


def clt_experiment(
    f: TestFunction,
    spec: EnsembleSpec,
    N_values: Sequence[int],
    replicas: int,
    rng,
    rho_target: float,
    threads: int | None = None,
) -> CltReport:
    return clt_experiments({f.name: (f, rho_target)}, spec, N_values, replicas, rng, threads)[f.name]
