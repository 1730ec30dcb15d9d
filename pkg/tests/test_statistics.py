import dataclasses
import math

import numpy as np
import pytest
from scipy import stats

from secondorder.ensembles import EnsembleSpec
from secondorder.errors import ConfigurationError, InvalidInputError
from secondorder.moments import gue_trace_covariance_exact
from secondorder.rng import RngStream
from secondorder.statistics import (
    c1_extension,
    chebyshev_approx,
    clt_experiment,
    covariance_mc,
    covariance_with_loo,
    cumulant_mc,
    k_statistic,
    k_statistic_with_error,
    linear_statistic,
    monomial,
    named_test_function,
    poincare_check,
    polynomial_test_function,
    resolvent_test_function,
    sample_covariance,
    sup_norm,
    tail_fraction,
    truncation_gap,
)

GUE = EnsembleSpec.gue()


def test_covariance_examples():
    est = covariance_mc(monomial(1), monomial(1), GUE, 16, 2000, RngStream(1, 1))
    assert est.within(1.0, 4)
    cross = covariance_mc(monomial(1), monomial(2), GUE, 16, 2000, RngStream(1, 2))
    assert cross.within(0.0, 4)
    sq = covariance_mc(monomial(2), monomial(2), GUE, 128, 400, RngStream(1, 3))
    assert sq.within(2.0, 4)
    assert sq.replicas == 400 and sq.seed == 1


def test_covariance_matches_exact_finite_n():
    est = covariance_mc(monomial(3), monomial(3), GUE, 8, 4000, RngStream(2, 0))
    assert est.within(gue_trace_covariance_exact(3, 3)(8), 4)


def test_covariance_of_constant_is_zero():
    est = covariance_mc(named_test_function("one"), monomial(2), GUE, 8, 200, RngStream(3))
    assert est.value == 0 and est.stderr == 0


def test_covariance_bilinear_and_symmetric_on_common_draws(gen):
    x, y, w = gen.normal(size=(3, 500))
    cxy, _ = sample_covariance(x, y)
    assert cxy == pytest.approx(sample_covariance(y, x)[0], abs=1e-15)
    combo, _ = sample_covariance(2 * x - 3 * w, y)
    assert combo == pytest.approx(2 * cxy - 3 * sample_covariance(w, y)[0], abs=1e-12)
    assert sample_covariance(x, x)[0] == pytest.approx(np.var(x, ddof=1), rel=1e-12)


def test_leave_one_out_values_are_exact(gen):
    x, y = gen.normal(size=(2, 30))
    _, loo = covariance_with_loo(x, y)
    for i in (0, 7, 29):
        keep = np.arange(30) != i
        assert loo[i] == pytest.approx(np.cov(x[keep], y[keep])[0, 1], rel=1e-10)


def test_complex_covariance_is_bilinear():
    x = np.array([1 + 1j, 2 - 1j, 0.5j, -1.0])
    value, _ = sample_covariance(x, x)
    xc = x - x.mean()
    assert value == pytest.approx(np.sum(xc * xc) / 3)


@pytest.mark.parametrize("r", [2, 3, 4])
def test_k_statistics_match_scipy(r, gen):
    x = gen.gamma(2.0, size=3000)
    assert k_statistic(x, r) == pytest.approx(stats.kstat(x, r), rel=1e-9)


def test_k_statistic_errors_cover_truth(gen):
    # Exponential(1): cumulants k_r = (r-1)!.
    hits = 0
    for i in range(20):
        x = gen.exponential(size=4000)
        for r, truth in ((2, 1), (3, 2)):
            v, e = k_statistic_with_error(x, r)
            hits += abs(v - truth) <= 3 * e
    assert hits >= 36


def test_k_statistic_jackknife_matches_brute_force(gen):
    x = gen.normal(size=40)
    _, err = k_statistic_with_error(x, 4)
    loo = np.array([stats.kstat(np.delete(x, i), 4) for i in range(40)])
    brute = math.sqrt((39 / 40) * np.sum((loo - loo.mean()) ** 2))
    assert err == pytest.approx(brute, rel=1e-8)


def test_cumulant_mc():
    est = cumulant_mc(monomial(1), GUE, 8, 2, 2000, RngStream(4))
    assert est.within(1.0, 4)
    k3 = cumulant_mc(monomial(1), GUE, 8, 3, 2000, RngStream(4, 1))
    assert k3.within(0.0, 4)
    with pytest.raises(InvalidInputError):
        cumulant_mc(monomial(1), GUE, 8, 3, 500, RngStream(4))
    with pytest.raises(InvalidInputError):
        cumulant_mc(monomial(1), GUE, 8, 5, 2000, RngStream(4))


def test_linear_statistic():
    lam = np.array([[-1.0, 0.0, 2.0], [0.5, 0.5, 0.5]])
    assert np.allclose(linear_statistic(monomial(2), lam), [5.0, 0.75])


def test_test_function_catalogue():
    for name in ("one", "id", "x2", "x3", "x4", "sin", "cos", "exp_neg_x2"):
        f = named_test_function(name)
        x = np.linspace(-2, 2, 7)
        h = 1e-6
        fd = (f(x + h) - f(x - h)) / (2 * h)
        assert np.allclose(f.derivative(x), fd, atol=1e-6), name
    with pytest.raises(InvalidInputError):
        named_test_function("tan")
    r = resolvent_test_function(1j)
    assert r(0.0) == pytest.approx(-1j)
    assert r.sup_deriv_bound == 1.0
    with pytest.raises(InvalidInputError):
        resolvent_test_function(2.0)


def test_poincare_examples():
    ok = poincare_check(named_test_function("sin"), GUE, 16, 1000, RngStream(5))
    assert ok.passed and ok.ratio < 1 and ok.upper_ratio > ok.ratio
    tight = dataclasses.replace(GUE, K_bound=0.05)
    bad = poincare_check(named_test_function("sin"), tight, 16, 1000, RngStream(5))
    assert not bad.passed
    with pytest.raises(ConfigurationError):
        poincare_check(monomial(2), GUE, 16, 1000, RngStream(5))


def test_tail_fraction_examples():
    none = tail_fraction(GUE, 16, 3.0, 1000, RngStream(6))
    assert none.value == 0 and none.diagnostics["exceedances"] == 0
    assert none.diagnostics["max_norm"] < 3.0
    most = tail_fraction(GUE, 16, 1.5, 1000, RngStream(6))
    assert most.value > 0.9
    assert most.diagnostics["N8_fraction"] == pytest.approx(16**8 * most.value)
    with pytest.raises(InvalidInputError):
        tail_fraction(GUE, 16, 3.0, 100, RngStream(6))


def test_truncation_gap():
    f, g = named_test_function("sin"), named_test_function("cos")
    exact = truncation_gap(f, g, GUE, 16, 10.0, 500, RngStream(7))
    assert exact.gap == 0 and exact.tail == 0 and exact.passed
    cut = truncation_gap(f, f, GUE, 16, 1.8, 500, RngStream(7))
    assert cut.tail > 0 and cut.gap != 0 and cut.passed
    with pytest.raises(ConfigurationError):
        truncation_gap(monomial(1), f, GUE, 16, 3.0, 500, RngStream(7))


def test_c1_extension_identity():
    ext = c1_extension(monomial(1), 1.0)
    alpha = 1 / math.e
    assert ext(np.array([0.3]))[0] == 0.3
    assert ext(np.array([2.0]))[0] == pytest.approx(1 + math.exp(-alpha))
    assert ext(np.array([-2.0]))[0] == pytest.approx(-1 - math.exp(-alpha))


@pytest.mark.parametrize("name", ["sin", "x2", "exp_neg_x2", "x3"])
def test_c1_extension_bounds_and_smoothness(name):
    f, M = named_test_function(name), 3.0
    ext = c1_extension(f, M)
    x = np.linspace(-5 * M, 5 * M, 200001)
    nf, ndf = sup_norm(f, -M, M), sup_norm(f.derivative, -M, M)
    assert np.max(np.abs(ext(x))) <= 2 * nf * (1 + 1e-12)
    assert np.max(np.abs(ext.derivative(x))) <= ndf * (1 + 1e-9)
    inside = x[np.abs(x) <= M]
    assert np.array_equal(ext(inside), f(inside))
    for edge in (-M, M):
        for h in (1e-7, 1e-8):
            l, r = ext(np.array([edge - h]))[0], ext(np.array([edge + h]))[0]
            assert abs(r - l) < 4 * h * max(ndf, 1)
            dl, dr = ext.derivative(np.array([edge - h]))[0], ext.derivative(np.array([edge + h]))[0]
            assert abs(dr - dl) < 1e-5


def test_c1_extension_zero_function():
    ext = c1_extension(polynomial_test_function([0.0]), 2.0)
    assert np.all(ext(np.linspace(-9, 9, 11)) == 0)


def test_sup_norm():
    assert sup_norm(np.sin, -3, 3) == pytest.approx(1.0, abs=1e-12)
    assert sup_norm(lambda x: x**2, -2, 1) == 4.0


def test_chebyshev_exact_for_polynomials():
    approx = chebyshev_approx(monomial(3), 3.0, 3)
    assert approx.value_error < 1e-12 and approx.derivative_error < 1e-11


def test_chebyshev_sin_and_degree_sweep():
    approx = chebyshev_approx(named_test_function("sin"), 3.0, 20)
    assert approx.value_error < 1e-12 and approx.derivative_error < 1e-10
    f = named_test_function("exp_neg_x2")
    errors = [chebyshev_approx(f, 3.0, d).value_error for d in range(4, 41, 4)]
    assert all(b < a for a, b in zip(errors, errors[1:]))


@pytest.mark.slow
def test_clt_experiment_x3():
    rep = clt_experiment(monomial(3), GUE, [8, 32], 2000, RngStream(8), rho_target=12.0)
    assert rep.N_values == [8, 32]
    for row in rep.rows:
        exact = float(gue_trace_covariance_exact(3, 3)(row.N))
        assert abs(row.variance - exact) <= 4 * row.variance_stderr
        assert abs(row.mean) <= 4 * row.mean_stderr
    d = rep.to_dict()
    assert set(d["trend"]) == {"k3_decreasing", "k4_decreasing", "ks_decreasing"}
    with pytest.raises(ConfigurationError):
        clt_experiment(monomial(3), GUE, [8], 1000, RngStream(8), rho_target=0.0)


def test_stderr_scales_like_inverse_sqrt_replicas():
    small = covariance_mc(monomial(1), monomial(1), GUE, 8, 500, RngStream(9, 1))
    big = covariance_mc(monomial(1), monomial(1), GUE, 8, 8000, RngStream(9, 2))
    assert 2.8 < small.stderr / big.stderr < 5.6
