"""Exact enumeration oracles for the statistical experiments."""

from __future__ import annotations

import itertools
from fractions import Fraction
from functools import lru_cache
from math import comb

import numpy as np

from qvote.errors import ContractViolation


def all_matchings(n: int):
    """Yield every perfect matching of ``range(n)`` as a tuple of ``(i, j)`` with ``i < j``."""

    def rec(rest):
        if not rest:
            yield ()
            return
        a = rest[0]
        for k in range(1, len(rest)):
            b = rest[k]
            for tail in rec(rest[1:k] + rest[k + 1 :]):
                yield ((a, b),) + tail

    if n % 2:
        raise ContractViolation("perfect matchings need an even n")
    yield from rec(tuple(range(n)))


def double_factorial(k: int) -> int:
    return 1 if k <= 1 else k * double_factorial(k - 2)


@lru_cache(maxsize=None)
def _edge_weights(n: int) -> dict[tuple[int, int], Fraction]:
    """Exact probability of each measured edge: uniform matching, then ``2/n`` per pair."""
    weights: dict[tuple[int, int], Fraction] = {}
    matchings = list(all_matchings(n))
    share = Fraction(1, len(matchings)) * Fraction(2, n)
    for m in matchings:
        for e in m:
            weights[e] = weights.get(e, Fraction(0)) + share
    return weights


def brute_force_collision(N: int, n: int) -> Fraction:
    """Exact probability that two voters' measured edges share a vertex.

    Enumerates every matching and outcome of both voters.
    """
    if N != 2:
        raise ContractViolation("enumeration covers exactly two voters")
    if n > 12 or n < 2 or n % 2:
        raise ContractViolation(f"enumeration needs an even n in [2, 12], got {n}")
    w = _edge_weights(n)
    total = Fraction(0)
    for (e1, p1), (e2, p2) in itertools.product(w.items(), repeat=2):
        if set(e1) & set(e2):
            total += p1 * p2
    return total


def collision_closed_form(n: int) -> Fraction:
    return Fraction(2 * n - 3, comb(n, 2))


def collision_bound(N: int, n: int) -> float:
    return min(1.0, 8 * comb(N, 2) / n)


def noise_oracle(n: int, p: float, x: np.ndarray | None = None) -> float:
    """Exact probability that a voter measures the correct parity after bit-flip noise.

    The ballot sits in ``log2 n`` qubits; every flip pattern (weighted by
    ``p**w (1-p)**(q-w)``) and every matching is enumerated, and ``x`` is
    averaged over all strings when not given.
    """
    q = n.bit_length() - 1
    if 1 << q != n:
        raise ContractViolation("noise oracle needs n a power of two")
    if n > 8:
        raise ContractViolation("noise oracle enumerates n <= 8")
    pairs = np.array(list(all_matchings(n)))  # (m, n/2, 2)
    first, second = pairs[..., 0], pairs[..., 1]
    strings = (
        np.array([[(v >> (n - 1 - k)) & 1 for k in range(n)] for v in range(2**n)])
        if x is None
        else np.asarray(x, dtype=np.int64).reshape(1, n)
    )
    labels = np.arange(n)
    total = 0.0
    for mask in range(n):
        w = bin(mask).count("1")
        weight = p**w * (1 - p) ** (q - w)
        if weight == 0:
            continue
        for bits in strings:
            amps = (1 - 2 * bits[labels ^ mask]) / np.sqrt(n)
            parity = bits[first] ^ bits[second]
            sign = 1 - 2 * parity
            prob = np.abs(amps[first] + sign * amps[second]) ** 2 / 2
            # each matching equally likely; sum over its pairs
            total += weight * prob.sum(axis=1).mean() / len(strings)
    return float(total)
