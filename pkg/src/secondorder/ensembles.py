"""Random matrix ensembles: GUE, block Gaussian and A + U B U*.

Matrices are plain complex ``ndarray`` objects; a spectrum is the ascending
real vector returned by :func:`eigenvalues`. Every sampler takes an
:class:`~secondorder.rng.RngStream` (or a numpy ``Generator``) and is a pure
function of it.
"""
from __future__ import annotations

import json
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidDimensionError, InvalidInputError, NumericFailure
from .rng import RngStream, as_generator, as_stream

THREADS_ENV = "SECONDORDER_THREADS"

GUE_DEFAULT_M = 3.0


def _check_dim(n) -> int:
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidDimensionError(f"dimension must be a positive integer, got {n!r}")
    return int(n)


def is_hermitian(a: np.ndarray, atol: float = 0.0) -> bool:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    if atol == 0.0:
        return bool(np.array_equal(a, a.conj().T))
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= atol)


def hermitize(a: np.ndarray) -> np.ndarray:
    """Return ``(a + a^*)/2``, which is bitwise Hermitian.

    IEEE addition is commutative and conjugation only flips a sign bit, so
    entry ``(j, i)`` is the exact conjugate of entry ``(i, j)`` and the
    diagonal comes out with zero imaginary part.
    """
    a = np.asarray(a, dtype=complex)
    return (a + a.conj().T) * 0.5


def _as_hermitian(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"{name} must be a square matrix, got shape {a.shape}")
    if not is_hermitian(a, atol=1e-12 * max(1.0, float(np.max(np.abs(a), initial=0.0)))):
        raise InvalidInputError(f"{name} is not Hermitian")
    return hermitize(a)


def _gue(n: int, gen: np.random.Generator) -> np.ndarray:
    # Diagonal ~ N(0, 1/n); off-diagonal real and imaginary parts ~ N(0, 1/(2n)).
    diag = gen.standard_normal(n) / np.sqrt(n)
    g = gen.standard_normal((2, n, n)) / np.sqrt(2 * n)
    upper = np.triu(g[0] + 1j * g[1], k=1)
    x = upper + upper.conj().T
    x[np.diag_indices(n)] = diag
    return x


def sample_gue(n: int, rng) -> np.ndarray:
    """Draw one normalized GUE(n) matrix.

    Entries ``X[i, i] ~ N(0, 1/n)`` and ``X[i, j]`` (i < j) complex Gaussian
    with ``E|X[i, j]|^2 = 1/n``. The lower triangle is the exact conjugate of
    the upper one.
    """
    n = _check_dim(n)
    return _gue(n, as_generator(rng))


def sample_block_gaussian(blocks: Sequence[np.ndarray], n: int, rng) -> np.ndarray:
    """Draw ``sum_k A_k kron X_k`` with independent GUE(n) matrices ``X_k``."""
    n = _check_dim(n)
    blocks = _check_blocks(blocks)
    gen = as_generator(rng)
    d = blocks[0].shape[0]
    x = np.zeros((d * n, d * n), dtype=complex)
    for a in blocks:
        x += np.kron(a, _gue(n, gen))
    return hermitize(x)


def _check_blocks(blocks) -> list[np.ndarray]:
    blocks = list(blocks)
    if not blocks:
        raise InvalidInputError("block Gaussian needs at least one block")
    out = [_as_hermitian(a, f"block {k}") for k, a in enumerate(blocks)]
    d = out[0].shape[0]
    if any(a.shape != (d, d) for a in out):
        raise InvalidInputError("all blocks must share the same dimension")
    return out


def sample_haar_unitary(n: int, rng) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Ginibre matrix.

    The columns of Q are rephased so that R has a positive real diagonal;
    without this step the QR output is not Haar distributed.
    """
    n = _check_dim(n)
    gen = as_generator(rng)
    z = (gen.standard_normal((n, n)) + 1j * gen.standard_normal((n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    phase = d / np.abs(d)
    return q * phase[np.newaxis, :]


def _scalar_multiple_of_identity(b: np.ndarray):
    c = b[0, 0]
    if np.array_equal(b, c * np.eye(b.shape[0], dtype=complex)):
        return c
    return None


def sample_additive(a: np.ndarray, b: np.ndarray, rng) -> np.ndarray:
    """Draw ``A + U B U*`` with Haar U."""
    a = _as_hermitian(a, "A")
    b = _as_hermitian(b, "B")
    if a.shape != b.shape:
        raise InvalidInputError(f"A and B must have equal shapes, got {a.shape} and {b.shape}")
    u = sample_haar_unitary(a.shape[0], rng)
    # U (cI) U* = cI; skipping the product keeps this case exact.
    if _scalar_multiple_of_identity(b) is not None:
        return hermitize(a + b)
    return hermitize(a + u @ b @ u.conj().T)


def eigenvalues(x: np.ndarray) -> np.ndarray:
    """Ascending real eigenvalues of a Hermitian matrix (LAPACK ``heevd``)."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {x.shape}")
    try:
        return np.linalg.eigvalsh(x)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"Hermitian eigensolver did not converge: {exc}") from exc


def operator_norm(x: np.ndarray) -> float:
    lam = eigenvalues(x)
    return float(max(abs(lam[0]), abs(lam[-1])))


def spectral_norm(a) -> float:
    a = np.asarray(a, dtype=complex)
    return float(np.linalg.norm(a, 2)) if a.size else 0.0


@dataclass(frozen=True, eq=False)
class EnsembleSpec:
    """Descriptor for one of the three ensembles.

    ``kind`` is ``"gue"``, ``"block"`` or ``"additive"``. ``M_bound`` is the
    cutoff of assumption A1 and ``K_bound`` the Poincare constant of A2.
    """

    kind: str
    n: int | None = None
    blocks: tuple = field(default=(), repr=False)
    A: np.ndarray | None = field(default=None, repr=False)
    B: np.ndarray | None = field(default=None, repr=False)
    M_bound: float = GUE_DEFAULT_M
    K_bound: float = 1.0

    @classmethod
    def gue(cls, n: int | None = None, M_bound: float = GUE_DEFAULT_M) -> "EnsembleSpec":
        if n is not None:
            _check_dim(n)
        if not M_bound > 2:
            raise InvalidInputError("GUE cutoff must exceed 2")
        return cls("gue", n=n, M_bound=float(M_bound), K_bound=1.0)

    @classmethod
    def block_gaussian(cls, blocks, n: int | None = None) -> "EnsembleSpec":
        if n is not None:
            _check_dim(n)
        blocks = tuple(_check_blocks(blocks))
        r = len(blocks)
        amax = max(spectral_norm(a) for a in blocks)
        sq = sum(a @ a for a in blocks)
        return cls(
            "block",
            n=n,
            blocks=blocks,
            M_bound=4.0 * r * amax,
            K_bound=r**2 * spectral_norm(sq) ** 2,
        )

    @classmethod
    def additive(cls, A, B) -> "EnsembleSpec":
        a = _as_hermitian(A, "A")
        b = _as_hermitian(B, "B")
        if a.shape != b.shape:
            raise InvalidInputError("A and B must have equal shapes")
        t = max(spectral_norm(a), spectral_norm(b))
        return cls("additive", n=a.shape[0], A=a, B=b, M_bound=2.0 * t, K_bound=4.0 * t**2)

    def size(self, N: int | None = None) -> int:
        """GUE size parameter for this draw (``N`` overrides the stored ``n``)."""
        if self.kind == "additive":
            if N is not None and N != self.n:
                raise InvalidInputError(f"additive ensemble has fixed size {self.n}, got N={N}")
            return self.n
        n = self.n if N is None else N
        if n is None:
            raise InvalidDimensionError("matrix size not given")
        return _check_dim(n)

    def dim(self, N: int | None = None) -> int:
        n = self.size(N)
        return n * self.blocks[0].shape[0] if self.kind == "block" else n

    def sample(self, rng, N: int | None = None) -> np.ndarray:
        n = self.size(N)
        if self.kind == "gue":
            return sample_gue(n, rng)
        if self.kind == "block":
            return sample_block_gaussian(self.blocks, n, rng)
        if self.kind == "additive":
            return sample_additive(self.A, self.B, rng)
        raise InvalidInputError(f"unknown ensemble kind {self.kind!r}")

    def describe(self) -> dict:
        out = {"kind": self.kind, "n": self.n, "M_bound": self.M_bound, "K_bound": self.K_bound}
        if self.kind == "block":
            out["blocks"] = [_complex_to_json(a) for a in self.blocks]
        if self.kind == "additive":
            out["A"] = _complex_to_json(self.A)
            out["B"] = _complex_to_json(self.B)
        return out


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def sample_spectra(
    spec: EnsembleSpec,
    N: int | None,
    replicas: int,
    rng,
    threads: int | None = None,
    chunk: int = 64,
) -> np.ndarray:
    """Eigenvalues of ``replicas`` independent draws, shape ``(replicas, dim)``.

    Replica ``i`` draws from ``rng.child(i)``, so the result does not depend on
    the thread count or the chunking.
    """
    stream = as_stream(rng)
    if replicas < 1:
        raise InvalidInputError("replicas must be positive")
    threads = default_threads() if threads is None else max(1, int(threads))
    dim = spec.dim(N)

    def work(start: int) -> np.ndarray:
        stop = min(start + chunk, replicas)
        mats = np.empty((stop - start, dim, dim), dtype=complex)
        for k, i in enumerate(range(start, stop)):
            mats[k] = spec.sample(stream.child(i), N)
        try:
            return np.linalg.eigvalsh(mats)
        except np.linalg.LinAlgError as exc:
            raise NumericFailure(f"eigensolver failed in replicas {start}..{stop - 1}") from exc

    starts = range(0, replicas, chunk)
    if threads == 1:
        parts = [work(s) for s in starts]
    else:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, starts))
    return np.concatenate(parts, axis=0)


# -- serialization ---------------------------------------------------------

_MAGIC = b"SOHM"


def dump_matrix_binary(x: np.ndarray) -> bytes:
    """Magic, little-endian uint64 dimension, then row-major complex128 entries."""
    x = np.asarray(x, dtype="<c16")
    n = x.shape[0]
    return _MAGIC + struct.pack("<Q", n) + x.tobytes(order="C")


def load_matrix_binary(data: bytes) -> np.ndarray:
    if data[:4] != _MAGIC:
        raise InvalidInputError("not a matrix dump")
    (n,) = struct.unpack("<Q", data[4:12])
    body = data[12:]
    if len(body) != 16 * n * n:
        raise InvalidInputError(f"truncated matrix dump: expected {16 * n * n} bytes, got {len(body)}")
    return np.frombuffer(body, dtype="<c16").reshape(n, n).astype(complex)


def _complex_to_json(a) -> dict:
    a = np.asarray(a, dtype=complex)
    return {"dim": int(a.shape[0]), "re": a.real.tolist(), "im": a.imag.tolist()}


def dump_matrix_json(x: np.ndarray) -> str:
    return json.dumps(_complex_to_json(x))


def load_matrix_json(text: str) -> np.ndarray:
    d = json.loads(text)
    a = np.asarray(d["re"], dtype=float) + 1j * np.asarray(d["im"], dtype=float)
    if a.shape != (d["dim"], d["dim"]):
        raise InvalidInputError("matrix JSON dimension mismatch")
    return a
