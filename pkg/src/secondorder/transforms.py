"""Cauchy transforms of the semicircle law and the GUE second-order transform.

The square root ``sqrt(z^2 - 4)`` is always taken as
``sqrt(z - 2) * sqrt(z + 2)`` with principal branches. That product is
analytic off ``[-2, 2]``, behaves like ``z`` at infinity, and commutes with
conjugation.
"""
from __future__ import annotations

import numpy as np

from .ensembles import EnsembleSpec, sample_spectra
from .errors import DomainError, NearDiagonalError, NearPoleError
from .rng import as_stream
from .statistics import EstimateWithError, sample_covariance

DIAGONAL_GUARD = 1e-3


def _on_cut(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return (z.imag == 0) & (np.abs(z.real) <= 2)


def _check_off_cut(*zs) -> None:
    for z in zs:
        if np.any(_on_cut(z)):
            raise DomainError("argument lies on the branch cut [-2, 2]")


def branched_sqrt(z):
    """``sqrt(z - 2) * sqrt(z + 2)``, the branch of ``sqrt(z^2 - 4)`` used throughout."""
    z = np.asarray(z, dtype=complex)
    out = np.sqrt(z - 2) * np.sqrt(z + 2)
    return out[()] if out.ndim == 0 else out


def semicircle_cauchy(z):
    """``G(z) = (z - sqrt(z^2 - 4)) / 2``, the Cauchy transform of the semicircle law."""
    _check_off_cut(z)
    z = np.asarray(z, dtype=complex)
    out = 0.5 * (z - branched_sqrt(z))
    return out[()] if np.ndim(out) == 0 else out


def semicircle_cauchy_derivative(z):
    # Differentiating G^2 - zG + 1 = 0 gives G' = G / (2G - z) = -G / sqrt(z^2 - 4).
    _check_off_cut(z)
    z = np.asarray(z, dtype=complex)
    return -semicircle_cauchy(z) / branched_sqrt(z)


def _check_diagonal(z, w) -> None:
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    if np.any(np.abs(z - w) < DIAGONAL_GUARD * (1 + np.abs(z))):
        raise NearDiagonalError(
            "closed-form G2 is 0/0 near z = w; evaluate on disjoint contours instead"
        )


def g2_gue_free(z, w):
    """``G'(z)G'(w) / (G(z) - G(w))^2 - 1/(z - w)^2`` (free probability form)."""
    _check_off_cut(z, w)
    _check_diagonal(z, w)
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    gz, gw = semicircle_cauchy(z), semicircle_cauchy(w)
    dz, dw = -gz / branched_sqrt(z), -gw / branched_sqrt(w)
    out = dz * dw / (gz - gw) ** 2 - 1.0 / (z - w) ** 2
    return out[()] if np.ndim(out) == 0 else out


def g2_gue_ps(z, w):
    """``((zw - 4) / (sqrt(z^2-4) sqrt(w^2-4)) - 1) / (2 (z - w)^2)`` (resolvent form)."""
    _check_off_cut(z, w)
    _check_diagonal(z, w)
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    out = ((z * w - 4) / (branched_sqrt(z) * branched_sqrt(w)) - 1) / (2 * (z - w) ** 2)
    return out[()] if np.ndim(out) == 0 else out


def resolvent_trace(spectrum, z):
    """``sum_i 1/(z - lambda_i)``; works row-wise on a 2-D array of spectra."""
    lam = np.asarray(spectrum, dtype=float)
    z = complex(z)
    scale = float(np.max(np.abs(lam), initial=0.0))
    if lam.size and np.min(np.abs(z - lam)) <= 1e-14 * scale:
        raise NearPoleError(f"z = {z} is within {1e-14 * scale:.3g} of an eigenvalue")
    return np.sum(1.0 / (z - lam), axis=-1)


def truncated_resolvent_trace(spectra, z, M: float):
    """``sum_{|lambda| <= M} 1/(z - lambda)``, the truncated resolvent ``r_{z,M}``."""
    lam = np.asarray(spectra, dtype=float)
    keep = np.abs(lam) <= M
    return np.sum(np.where(keep, 1.0 / (complex(z) - lam), 0.0), axis=-1)


def _distance_to_segment(z: complex, M: float) -> float:
    x = min(max(z.real, -M), M)
    return abs(z - x)


def g2_empirical(
    spec: EnsembleSpec,
    z: complex,
    w: complex,
    replicas: int,
    rng,
    N: int | None = None,
    threads: int | None = None,
) -> EstimateWithError:
    """Monte Carlo ``Cov(Tr r_{z,M}(X), Tr r_{w,M}(X))`` with jackknife error.

    The resolvents are truncated to eigenvalues in ``[-M, M]`` with ``M`` the
    ensemble's A1 cutoff; ``diagnostics["norm_exceedances"]`` counts draws
    with ``||X|| > M``.
    """
    z, w = complex(z), complex(w)
    M = spec.M_bound
    if _distance_to_segment(z, M) <= 0 or _distance_to_segment(w, M) <= 0:
        raise DomainError(f"z and w must lie off [-{M}, {M}]")
    if replicas < 100:
        raise ValueError("g2_empirical needs at least 100 replicas")
    stream = as_stream(rng)
    spectra = sample_spectra(spec, N, replicas, stream, threads=threads)
    a = truncated_resolvent_trace(spectra, z, M)
    b = truncated_resolvent_trace(spectra, w, M)
    value, err = sample_covariance(a, b)
    norms = np.maximum(np.abs(spectra[:, 0]), np.abs(spectra[:, -1]))
    return EstimateWithError(
        value=value,
        stderr=err,
        replicas=replicas,
        seed=stream.seed,
        diagnostics={"norm_exceedances": int(np.sum(norms > M)), "M": M, "stream_id": stream.stream_id},
    )
