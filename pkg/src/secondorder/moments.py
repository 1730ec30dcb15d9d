"""Exact GUE moments by Wick pairing enumeration.

For the normalized GUE, ``E[X_ij X_kl] = delta_il delta_jk / N``, so

    E[Tr X^m Tr X^n] = sum over pairings pi of N^(#cycles(gamma pi) - (m+n)/2)

where ``gamma`` has cycles ``(0 .. m-1)(m .. m+n-1)`` and ``pi`` is the pairing
viewed as a fixed-point-free involution. Pairings that do not link the two
cycles reproduce ``E[Tr X^m] E[Tr X^n]`` exactly, so the covariance is the
sum over connecting pairings only. Everything here is integer arithmetic.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import product
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import CapacityError, DomainError, InvalidInputError

PAIRING_CAP = 16

# Constants of the coefficient bound |alpha_{m,n}| <= K m n M^(m+n-2) for GUE.
GUE_K = 1.0
GUE_M = 3.0


@dataclass(frozen=True)
class PairPartition:
    """A perfect matching of ``{0, ..., size-1}`` (indices are 0-based)."""

    pairs: tuple[tuple[int, int], ...]

    @property
    def size(self) -> int:
        return 2 * len(self.pairs)

    def involution(self) -> tuple[int, ...]:
        partner = [0] * self.size
        for i, j in self.pairs:
            partner[i] = j
            partner[j] = i
        return tuple(partner)

    def connects(self, m: int) -> bool:
        """True if some pair straddles the cut between ``[0, m)`` and ``[m, size)``."""
        return any((i < m) != (j < m) for i, j in self.pairs)


def _check_cap(total: int) -> None:
    if total > PAIRING_CAP:
        raise CapacityError(f"pairing enumeration capped at m+n <= {PAIRING_CAP}, got {total}")


def _involutions(size: int) -> Iterator[list[int]]:
    partner = [-1] * size

    def rec(start: int):
        i = start
        while i < size and partner[i] >= 0:
            i += 1
        if i == size:
            yield partner
            return
        for j in range(i + 1, size):
            if partner[j] < 0:
                partner[i], partner[j] = j, i
                yield from rec(i + 1)
                partner[i] = partner[j] = -1

    if size % 2 == 0:
        yield from rec(0)


def enumerate_pairings(m: int, n: int) -> Iterator[PairPartition]:
    """Yield each of the ``(m+n-1)!!`` pair partitions of ``m+n`` points once."""
    total = m + n
    if total % 2:
        raise InvalidInputError(f"no pairings of an odd set (m+n={total})")
    _check_cap(total)
    for partner in _involutions(total):
        yield PairPartition(tuple((i, j) for i, j in enumerate(partner) if i < j))


def _gamma(m: int, n: int) -> list[int]:
    g = [(i + 1) % m for i in range(m)]
    g += [m + (i + 1) % n for i in range(n)]
    return g


def _cycles(perm: Sequence[int]) -> int:
    seen = [False] * len(perm)
    count = 0
    for s in range(len(perm)):
        if not seen[s]:
            count += 1
            i = s
            while not seen[i]:
                seen[i] = True
                i = perm[i]
    return count


def genus_exponent(pairing: PairPartition, m: int, n: int) -> int:
    """``#cycles(gamma pi) - (m+n)/2``; equals ``-2g`` for a connecting pairing."""
    g = _gamma(m, n)
    partner = pairing.involution()
    return _cycles([g[partner[i]] for i in range(m + n)]) - (m + n) // 2


@dataclass(frozen=True)
class CovariancePolynomial:
    """``sum_k coeffs[k] * N**(-k)``; coefficients are exact when built from ints."""

    coeffs: tuple

    def __call__(self, N):
        total = sum(c * float(N) ** (-k) for k, c in enumerate(self.coeffs))
        if isinstance(total, complex) and total.imag != 0:
            return total
        return float(np.real(total))

    def exact(self, N: int) -> Fraction:
        return sum((Fraction(c) * Fraction(1, N) ** k for k, c in enumerate(self.coeffs)), Fraction(0))

    @property
    def leading(self):
        return self.coeffs[0] if self.coeffs else 0

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)


def _polynomial(counts: dict) -> CovariancePolynomial:
    if not counts:
        return CovariancePolynomial((0,))
    depth = max(-e for e in counts)
    coeffs = [0] * (depth + 1)
    for e, c in counts.items():
        coeffs[-e] += c
    return CovariancePolynomial(tuple(coeffs))


@lru_cache(maxsize=None)
def _connecting_exponent_counts(m: int, n: int) -> tuple:
    g = _gamma(m, n)
    half = (m + n) // 2
    counts: Counter = Counter()
    for partner in _involutions(m + n):
        if not any(partner[i] >= m for i in range(m)):
            continue
        counts[_cycles([g[partner[i]] for i in range(m + n)]) - half] += 1
    return tuple(sorted(counts.items()))


Weight = Callable[[PairPartition, int, int], complex]


def gue_trace_covariance_exact(m: int, n: int, weight: Weight | None = None) -> CovariancePolynomial:
    """Exact ``Cov(Tr X^m, Tr X^n)`` for GUE(N) as a polynomial in ``1/N``.

    With ``weight`` given, each connecting pairing contributes
    ``weight(pairing, m, n) * N**e`` instead of ``N**e``; see
    :func:`block_weight` for the block Gaussian case.
    """
    if m < 1 or n < 1:
        raise InvalidInputError("trace powers must be positive")
    if (m + n) % 2:
        return CovariancePolynomial((0,))
    _check_cap(m + n)
    if weight is None:
        return _polynomial(dict(_connecting_exponent_counts(m, n)))
    g = _gamma(m, n)
    half = (m + n) // 2
    acc: dict = {}
    for partner in _involutions(m + n):
        if not any(partner[i] >= m for i in range(m)):
            continue
        e = _cycles([g[partner[i]] for i in range(m + n)]) - half
        pairing = PairPartition(tuple((i, j) for i, j in enumerate(partner) if i < j))
        acc[e] = acc.get(e, 0) + weight(pairing, m, n)
    return _polynomial(acc)


def block_weight(blocks: Sequence[np.ndarray]) -> Weight:
    """Pairing weight for ``sum_k A_k kron X_k`` with independent GUE ``X_k``.

    Each pair must carry a single block label; the weight is the sum over
    labelings of ``Tr(A_{k_0} ... A_{k_{m-1}}) Tr(A_{k_m} ... A_{k_{m+n-1}})``.
    """
    blocks = [np.asarray(a, dtype=complex) for a in blocks]
    r = len(blocks)

    def weight(pairing: PairPartition, m: int, n: int) -> complex:
        total = 0.0 + 0.0j
        labels = [0] * (m + n)
        for choice in product(range(r), repeat=len(pairing.pairs)):
            for (i, j), k in zip(pairing.pairs, choice):
                labels[i] = labels[j] = k
            left = np.linalg.multi_dot([blocks[k] for k in labels[:m]]) if m > 1 else blocks[labels[0]]
            right = np.linalg.multi_dot([blocks[k] for k in labels[m:]]) if n > 1 else blocks[labels[m]]
            total += np.trace(left) * np.trace(right)
        return total

    return weight


def catalan(k: int) -> int:
    c = 1
    for j in range(k):
        c = c * 2 * (2 * j + 1) // (j + 2)
    return c


def semicircle_moment(n: int) -> int:
    """``alpha_n``: Catalan(n/2) for even n, 0 for odd n."""
    if n < 0:
        raise InvalidInputError("moment order must be non-negative")
    return 0 if n % 2 else catalan(n // 2)


def gue_normalized_moment_exact(n: int) -> CovariancePolynomial:
    """Exact ``(1/N) E Tr X^n`` for GUE(N) as a polynomial in ``1/N``."""
    if n < 0:
        raise InvalidInputError("moment order must be non-negative")
    if n == 0:
        return CovariancePolynomial((1,))
    if n % 2:
        return CovariancePolynomial((0,))
    _check_cap(n)
    g = [(i + 1) % n for i in range(n)]
    counts: Counter = Counter()
    for partner in _involutions(n):
        counts[_cycles([g[partner[i]] for i in range(n)]) - n // 2 - 1] += 1
    return _polynomial(dict(counts))


def second_order_moment(m: int, n: int) -> int:
    """``alpha_{m,n}``, the number of connecting pairings of genus zero."""
    return gue_trace_covariance_exact(m, n).leading


@dataclass
class MomentTable:
    first_order: dict = field(default_factory=dict)
    second_order: dict = field(default_factory=dict)
    finite_n_cov: dict = field(default_factory=dict)

    @classmethod
    def build(cls, max_total_degree: int) -> "MomentTable":
        _check_cap(max_total_degree)
        table = cls()
        for k in range(max_total_degree + 1):
            table.first_order[k] = semicircle_moment(k)
        for m in range(1, max_total_degree):
            for n in range(1, max_total_degree - m + 1):
                poly = gue_trace_covariance_exact(m, n)
                table.second_order[(m, n)] = poly.leading
                table.finite_n_cov[(m, n)] = poly.coeffs
        return table

    def alpha(self, m: int, n: int) -> int:
        if m == 0 or n == 0:
            return 0
        if (m, n) not in self.second_order:
            poly = gue_trace_covariance_exact(m, n)
            self.second_order[(m, n)] = poly.leading
            self.finite_n_cov[(m, n)] = poly.coeffs
        return self.second_order[(m, n)]

    def to_json(self) -> str:
        return json.dumps(
            {
                "first_order": {str(k): str(v) for k, v in sorted(self.first_order.items())},
                "second_order": {f"{m},{n}": str(v) for (m, n), v in sorted(self.second_order.items())},
                "finite_n_cov": {
                    f"{m},{n}": [str(c) for c in cs] for (m, n), cs in sorted(self.finite_n_cov.items())
                },
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "MomentTable":
        d = json.loads(text)

        def key(s):
            m, n = s.split(",")
            return int(m), int(n)

        return cls(
            first_order={int(k): int(v) for k, v in d["first_order"].items()},
            second_order={key(k): int(v) for k, v in d["second_order"].items()},
            finite_n_cov={key(k): tuple(int(c) for c in v) for k, v in d["finite_n_cov"].items()},
        )


class SeriesValue(NamedTuple):
    value: complex
    tail_bound: float


def coefficient_bound_tail(z: complex, w: complex, max_total_degree: int, M: float = GUE_M, K: float = GUE_K) -> float:
    """Bound on ``sum_{m+n > D} |alpha_{m,n}| / |z^(m+1) w^(n+1)|``.

    Uses ``|alpha_{m,n}| <= K m n M^(m+n-2)``; the full double series sums to
    ``K a/(1-a)^2 * b/(1-b)^2 / (M^2 |z| |w|)`` with ``a = M/|z|``, ``b = M/|w|``.
    """
    az, aw = abs(z), abs(w)
    a, b = M / az, M / aw
    scale = K / (M * M * az * aw)
    full = scale * a / (1 - a) ** 2 * b / (1 - b) ** 2
    partial = 0.0
    for m in range(1, max_total_degree):
        for n in range(1, max_total_degree - m + 1):
            partial += scale * m * a**m * n * b**n
    return max(full - partial, 0.0) + 8 * np.finfo(float).eps * full


def g2_series(z: complex, w: complex, max_total_degree: int, table: MomentTable | None = None) -> SeriesValue:
    """Partial sum of ``sum alpha_{m,n} / (z^(m+1) w^(n+1))`` over ``m+n <= D``.

    Returns the value and a rigorous bound on the discarded tail.
    """
    if abs(z) <= GUE_M or abs(w) <= GUE_M:
        raise DomainError(f"series needs |z|, |w| > {GUE_M}, got |z|={abs(z):.6g}, |w|={abs(w):.6g}")
    _check_cap(max_total_degree)
    table = MomentTable() if table is None else table
    z, w = complex(z), complex(w)
    value = 0j
    # Symmetric pairs are added together so that swapping z and w is exact.
    for m in range(1, max_total_degree):
        for n in range(m, max_total_degree - m + 1):
            if (m + n) % 2:
                continue
            term = 1 / (z ** (m + 1) * w ** (n + 1))
            if n != m:
                term = term + 1 / (w ** (m + 1) * z ** (n + 1))
            value += table.alpha(m, n) * term
    return SeriesValue(value, coefficient_bound_tail(z, w, max_total_degree))
