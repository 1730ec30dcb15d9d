"""Numerics for second-order free probability of random matrix ensembles."""
from .ensembles import (
    EnsembleSpec,
    eigenvalues,
    operator_norm,
    sample_additive,
    sample_block_gaussian,
    sample_gue,
    sample_haar_unitary,
    sample_spectra,
)
from .errors import (
    CapacityError,
    ConfigurationError,
    DomainError,
    InvalidDimensionError,
    InvalidInputError,
    NearDiagonalError,
    NearPoleError,
    NumericFailure,
    SecondOrderError,
)
from .moments import (
    MomentTable,
    enumerate_pairings,
    g2_series,
    gue_trace_covariance_exact,
    second_order_moment,
    semicircle_moment,
)
from .quadrature import AnalyticFunction, Contour, cauchy_derivative, rho_polynomial_reference, rho_via_contour
from .rng import RngStream
from .statistics import (
    EstimateWithError,
    TestFunction,
    clt_experiment,
    covariance_mc,
    cumulant_mc,
    monomial,
    named_test_function,
    polynomial_test_function,
)
from .transforms import g2_empirical, g2_gue_free, g2_gue_ps, resolvent_trace, semicircle_cauchy

__version__ = "0.1.0"
