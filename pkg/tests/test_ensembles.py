import json

import numpy as np
import pytest

from secondorder.ensembles import (
    EnsembleSpec,
    dump_matrix_binary,
    dump_matrix_json,
    eigenvalues,
    is_hermitian,
    load_matrix_binary,
    load_matrix_json,
    operator_norm,
    sample_additive,
    sample_block_gaussian,
    sample_gue,
    sample_haar_unitary,
    sample_spectra,
)
from secondorder.errors import InvalidDimensionError, InvalidInputError
from secondorder.moments import block_weight, gue_trace_covariance_exact
from secondorder.rng import RngStream

from .conftest import mean_and_stderr


def test_gue_1x1_variance(gen):
    x = np.array([sample_gue(1, gen)[0, 0] for _ in range(100_000)])
    assert np.all(x.imag == 0)
    var = x.real.var(ddof=1)
    # Var of the sample variance of N(0,1) data is 2/n.
    assert abs(var - 1.0) <= 3 * np.sqrt(2 / x.size)


@pytest.mark.parametrize("n", [1, 3, 10])
def test_trace_variance_is_one(gen, n):
    t = np.array([np.trace(sample_gue(n, gen)).real for _ in range(20_000)])
    assert abs(t.var(ddof=1) - 1.0) <= 3 * np.sqrt(2 / t.size)


def test_gue_entry_moments(gen):
    n, draws = 2, 100_000
    mats = np.array([sample_gue(n, gen) for _ in range(draws)])
    scalars = {
        "d0": mats[:, 0, 0].real * np.sqrt(n),
        "d1": mats[:, 1, 1].real * np.sqrt(n),
        "re01": mats[:, 0, 1].real * np.sqrt(2 * n),
        "im01": mats[:, 0, 1].imag * np.sqrt(2 * n),
    }
    gaussian = {1: (0.0, 1.0), 2: (1.0, 2.0), 3: (0.0, 15.0), 4: (3.0, 96.0)}
    for name, x in scalars.items():
        for p, (mom, var) in gaussian.items():
            assert abs(np.mean(x**p) - mom) <= 4 * np.sqrt(var / draws), (name, p)


def test_gue_norm_below_three(gen):
    norms = [operator_norm(sample_gue(128, gen)) for _ in range(300)]
    assert max(norms) < 3


def test_samplers_are_exactly_hermitian(stream):
    a = np.diag([1.0, -0.5, 0.25])
    b = np.array([[0, 1j, 0], [-1j, 0, 2], [0, 2, 1]])
    xs = [
        sample_gue(17, stream),
        sample_block_gaussian([np.diag([1.0, -1.0]), np.array([[0, 1], [1, 0]])], 9, stream),
        sample_additive(a, b, stream),
    ]
    for x in xs:
        assert np.array_equal(x, x.conj().T)
        assert np.all(np.diagonal(x).imag == 0)


def test_deterministic_replay():
    s = RngStream(42, 3)
    assert np.array_equal(sample_gue(20, s), sample_gue(20, s))
    assert not np.array_equal(sample_gue(20, s), sample_gue(20, RngStream(42, 4)))
    spec = EnsembleSpec.block_gaussian([np.eye(2), np.diag([1.0, 2.0])], 5)
    assert np.array_equal(spec.sample(s), spec.sample(s))


def test_invalid_dimension(stream):
    with pytest.raises(InvalidDimensionError):
        sample_gue(0, stream)
    with pytest.raises(InvalidDimensionError):
        sample_haar_unitary(0, stream)


def test_block_identity_is_gue(stream):
    assert np.array_equal(sample_block_gaussian([np.eye(1)], 12, stream), sample_gue(12, stream))


def test_block_traceless(stream):
    x = sample_block_gaussian([np.diag([1.0, -1.0])], 64, stream)
    assert x.shape == (128, 128)
    assert is_hermitian(x)
    assert np.trace(x[:64, :64]) + np.trace(x[64:, 64:]) == 0
    assert abs(np.trace(x)) < 1e-12


def test_block_trace_factorizes(stream):
    a = np.array([[2.0, 1j], [-1j, 0.5]])
    gen = stream.generator()
    y = sample_gue(10, gen)
    x = sample_block_gaussian([a], 10, stream)
    assert np.array_equal(x, np.kron(a, y)) or np.allclose(x, np.kron(a, y), rtol=0, atol=1e-15)
    assert abs(np.trace(x) - np.trace(a) * np.trace(y)) <= 1e-12 * abs(np.trace(a) * np.trace(y)) + 1e-15


def test_block_variance_matches_wick(gen):
    blocks = [np.diag([1.0, -1.0])]
    exact = gue_trace_covariance_exact(2, 2, block_weight(blocks))
    assert exact.coeffs[0] == pytest.approx(8.0)
    t = np.array([np.trace(np.linalg.matrix_power(sample_block_gaussian(blocks, 16, gen), 2)).real
                  for _ in range(10_000)])
    v = t.var(ddof=1)
    k4 = np.mean((t - t.mean()) ** 4) - 3 * v**2
    stderr = np.sqrt((k4 + 2 * v**2) / t.size)
    assert abs(v - exact(16)) <= 3 * stderr


def test_block_rejects_bad_input(stream):
    with pytest.raises(InvalidInputError):
        sample_block_gaussian([np.array([[0, 1], [2, 0]])], 3, stream)
    with pytest.raises(InvalidInputError):
        sample_block_gaussian([np.eye(2), np.eye(3)], 3, stream)
    with pytest.raises(InvalidInputError):
        sample_block_gaussian([], 3, stream)


def test_haar_unitary(stream):
    u = sample_haar_unitary(64, stream)
    assert np.max(np.abs(u @ u.conj().T - np.eye(64))) < 1e-12


def test_haar_phase_uniform(gen):
    u = np.array([sample_haar_unitary(1, gen)[0, 0] for _ in range(100_000)])
    assert np.allclose(np.abs(u), 1)
    m, se = mean_and_stderr(u.real)
    assert abs(m) <= 3 * se
    m, se = mean_and_stderr(u.imag)
    assert abs(m) <= 3 * se


def test_haar_column_norms(gen):
    x = np.array([abs(sample_haar_unitary(16, gen)[0, 0]) ** 2 for _ in range(20_000)])
    m, se = mean_and_stderr(x)
    assert abs(m - 1 / 16) <= 3 * se


def test_haar_trace_second_moment(gen):
    # E|Tr U|^2 = 1 for Haar U(n); QR without the phase fix gets this wrong.
    t = np.array([abs(np.trace(sample_haar_unitary(6, gen))) ** 2 for _ in range(20_000)])
    m, se = mean_and_stderr(t)
    assert abs(m - 1.0) <= 4 * se


def test_additive_special_cases(stream):
    a = np.diag([1.0, 2.0, -3.0])
    assert np.array_equal(sample_additive(a, np.zeros((3, 3)), stream), a)
    i = np.eye(4)
    assert np.array_equal(sample_additive(i, i, stream), 2 * i)


def test_additive_norm_bound(gen):
    a = np.diag(np.linspace(-1, 1, 20))
    b = np.diag(np.where(np.arange(20) % 2, -1.0, 1.0))
    for _ in range(300):
        assert operator_norm(sample_additive(a, b, gen)) <= 2 + 1e-12


def test_additive_dim_mismatch(stream):
    with pytest.raises(InvalidInputError):
        sample_additive(np.eye(2), np.eye(3), stream)


def test_eigenvalues_examples(stream):
    np.testing.assert_array_equal(eigenvalues(np.diag([3.0, 1.0, 2.0])), [1, 2, 3])
    np.testing.assert_allclose(eigenvalues(np.array([[0.0, 1.0], [1.0, 0.0]])), [-1, 1], atol=1e-15)
    x = sample_gue(64, stream)
    lam = eigenvalues(x)
    assert np.all(np.diff(lam) >= 0)
    assert abs(lam.sum() - np.trace(x).real) <= 1e-10 * operator_norm(x) * 64


def test_eigen_backward_error(stream):
    x = sample_gue(100, stream)
    lam = eigenvalues(x)
    _, q = np.linalg.eigh(x)
    resid = np.linalg.norm(x - q @ np.diag(lam) @ q.conj().T, 2)
    assert resid <= 10 * 100 * np.finfo(float).eps * np.linalg.norm(x, 2)


def test_operator_norm_examples():
    assert operator_norm(np.diag([-5.0, 2.0])) == 5
    assert operator_norm(np.eye(7)) == 1


def test_spec_constants():
    g = EnsembleSpec.gue(10)
    assert (g.M_bound, g.K_bound) == (3.0, 1.0)
    with pytest.raises(InvalidInputError):
        EnsembleSpec.gue(10, M_bound=2.0)
    blocks = [np.diag([1.0, -1.0]), np.diag([2.0, 0.0])]
    b = EnsembleSpec.block_gaussian(blocks)
    assert b.M_bound == pytest.approx(4 * 2 * 2.0)
    assert b.K_bound == pytest.approx(4 * 5.0**2)
    assert b.dim(7) == 14
    a = EnsembleSpec.additive(np.diag([0.5, -1.5]), np.diag([1.0, 0.0]))
    assert a.M_bound == pytest.approx(3.0)
    assert a.K_bound == pytest.approx(9.0)
    with pytest.raises(InvalidInputError):
        a.size(5)


def test_sample_spectra_independent_of_threads(stream):
    spec = EnsembleSpec.gue()
    one = sample_spectra(spec, 12, 150, stream, threads=1, chunk=16)
    many = sample_spectra(spec, 12, 150, stream, threads=3, chunk=7)
    assert np.array_equal(one, many)
    assert np.array_equal(one[5], eigenvalues(sample_gue(12, stream.child(5))))


def test_matrix_serialization_roundtrip(stream):
    x = sample_gue(5, stream)
    blob = dump_matrix_binary(x)
    assert len(blob) == 4 + 8 + 16 * 25
    assert np.array_equal(load_matrix_binary(blob), x)
    assert np.array_equal(load_matrix_json(dump_matrix_json(x)), x)
    assert json.loads(dump_matrix_json(x))["dim"] == 5
    with pytest.raises(InvalidInputError):
        load_matrix_binary(blob[:-3])


def test_rng_stream_validation():
    with pytest.raises(ValueError):
        RngStream(-1, 0)
    s = RngStream(1, 2)
    assert s.child(0) != s.child(1)
    assert s.child(3) == RngStream(1, 2).child(3)
