"""Hidden-matching ballots: encoding, matching measurements and vote tags.

A ballot for the string ``x`` is the unary state
``sum_i (-1)**x_i |i> / sqrt(n)``.  Measuring it in the basis of a perfect
matching yields one edge ``(i, j)`` together with the parity
``x_i ^ x_j`` and nothing else about ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from qvote import kernels
from qvote.errors import ContractViolation
from qvote.qsim import OrthoBasis, PureState, sample_index


@dataclass(frozen=True, eq=False)
class RandomString:
    """The tallyman's secret bit string ``x`` (``n`` even, ``n >= 2``)."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.uint8).reshape(-1)
        if bits.size < 2 or bits.size % 2:
            raise ContractViolation(f"string length must be even and >= 2, got {bits.size}")
        if np.any(bits > 1):
            raise ContractViolation("bits must be 0 or 1")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def n(self) -> int:
        return self.bits.size

    def __getitem__(self, i: int) -> int:
        return int(self.bits[i])

    def __eq__(self, other) -> bool:
        return isinstance(other, RandomString) and np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash(self.bits.tobytes())

    def __repr__(self) -> str:
        if self.n <= 32:
            return f"RandomString({''.join(map(str, self.bits))})"
        return f"RandomString(n={self.n}, hex={self.to_hex()[:8]}...)"

    @classmethod
    def from_str(cls, s: str) -> "RandomString":
        return cls([int(c) for c in s])

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "RandomString":
        return cls(rng.integers(0, 2, size=n, dtype=np.uint8))

    def complement(self) -> "RandomString":
        return RandomString(1 - self.bits)

    def parity(self, i: int, j: int) -> int:
        return int(self.bits[i] ^ self.bits[j])

    def to_hex(self) -> str:
        """Big-endian hex, first bit is the top bit of the first digit."""
        pad = (-self.n) % 4
        padded = np.concatenate([self.bits, np.zeros(pad, dtype=np.uint8)])
        nibbles = padded.reshape(-1, 4) @ np.array([8, 4, 2, 1])
        return "".join(f"{v:x}" for v in nibbles)

    @classmethod
    def from_hex(cls, text: str, n: int) -> "RandomString":
        if len(text) != math.ceil(n / 4):
            raise ContractViolation(f"hex string of length {len(text)} cannot hold {n} bits")
        bits = [(int(c, 16) >> s) & 1 for c in text for s in (3, 2, 1, 0)]
        if any(bits[n:]):
            raise ContractViolation("non-zero padding bits in hex string")
        return cls(bits[:n])


@dataclass(frozen=True, order=True)
class Edge:
    """Unordered pair of labels in normal form ``i < j``."""

    i: int
    j: int

    def __post_init__(self):
        if not (0 <= self.i < self.j):
            raise ContractViolation(f"edge needs 0 <= i < j, got ({self.i}, {self.j})")

    @classmethod
    def of(cls, a: int, b: int) -> "Edge":
        a, b = int(a), int(b)
        return cls(min(a, b), max(a, b))

    def touches(self, other: "Edge") -> bool:
        return bool({self.i, self.j} & {other.i, other.j})

    def __iter__(self):
        yield self.i
        yield self.j

    def __repr__(self) -> str:
        return f"({self.i},{self.j})"


class Matching:
    """Perfect matching of ``n`` labels stored as an ``(n/2, 2)`` array.

    Rows are normalized to ``first < second``; row order is whatever the
    sampler produced, :meth:`canonical` gives an order-free key.
    """

    __slots__ = ("first", "second")

    def __init__(self, pairs):
        arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        n = 2 * len(arr)
        if n < 2:
            raise ContractViolation("a matching needs at least one pair")
        if arr.min() < 0 or arr.max() >= n or np.any(np.bincount(arr.ravel(), minlength=n) != 1):
            raise ContractViolation("pairs must cover every label exactly once")
        first = np.minimum(arr[:, 0], arr[:, 1])
        second = np.maximum(arr[:, 0], arr[:, 1])
        first.setflags(write=False)
        second.setflags(write=False)
        self.first = first
        self.second = second

    @property
    def n(self) -> int:
        return 2 * len(self.first)

    @property
    def pairs(self) -> tuple[Edge, ...]:
        return tuple(Edge(int(a), int(b)) for a, b in zip(self.first, self.second))

    def canonical(self) -> tuple[tuple[int, int], ...]:
        return tuple(sorted(zip(self.first.tolist(), self.second.tolist())))

    def __eq__(self, other) -> bool:
        return isinstance(other, Matching) and self.canonical() == other.canonical()

    def __hash__(self) -> int:
        return hash(self.canonical())

    def __repr__(self) -> str:
        return f"Matching({list(self.canonical())})"


class Corrupted(NamedTuple):
    """Matching measurement landed on a padded label; the ballot was damaged."""

    label: int


@dataclass(frozen=True)
class VoteTag:
    """Public record of one vote: edge, agreement bit and tag-extension parities."""

    edge: Edge
    agreement: int
    extra: tuple[tuple[Edge, int], ...] = ()

    def __post_init__(self):
        if self.agreement not in (0, 1):
            raise ContractViolation("agreement must be a bit")
        seen = {self.edge.i, self.edge.j}
        for e, p in self.extra:
            if p not in (0, 1):
                raise ContractViolation("extra parity must be a bit")
            if e.i in seen or e.j in seen:
                raise ContractViolation(f"extra edge {e} overlaps an earlier edge of the tag")
            seen.update((e.i, e.j))

    @property
    def edges(self) -> tuple[Edge, ...]:
        return (self.edge,) + tuple(e for e, _ in self.extra)


def _next_pow2(n: int) -> int:
    return 1 << (n - 1).bit_length()


def encode_ballot(x: RandomString, padded: bool = False) -> PureState:
    """Ballot state for ``x``; ``padded`` extends to the next power of two with zeros."""
    n = x.n
    dim = _next_pow2(n) if padded else n
    amps = np.zeros(dim, dtype=complex)
    amps[:n] = (1.0 - 2.0 * x.bits) / math.sqrt(n)
    return PureState(amps)


def random_matching(n: int, rng: np.random.Generator) -> Matching:
    """Uniform perfect matching: consecutive elements of a uniform permutation."""
    if n < 2 or n % 2:
        raise ContractViolation(f"matching needs an even n >= 2, got {n}")
    return Matching(rng.permutation(n).reshape(-1, 2))


def matching_basis(m: Matching, dim: int | None = None) -> OrthoBasis:
    """Basis ``(|i> +/- |j>)/sqrt2`` per pair, labelled ``(Edge, parity)``.

    Labels beyond ``m.n`` (padding up to ``dim``) enter as computational
    vectors labelled ``("invalid", label)``.
    """
    n = m.n
    dim = n if dim is None else dim
    if dim < n:
        raise ContractViolation("basis dimension smaller than the matching")
    vecs = np.zeros((dim, dim), dtype=complex)
    labels = []
    r = 1 / math.sqrt(2)
    for k, (a, b) in enumerate(zip(m.first, m.second)):
        vecs[2 * k, a] = vecs[2 * k, b] = r
        vecs[2 * k + 1, a], vecs[2 * k + 1, b] = r, -r
        e = Edge(int(a), int(b))
        labels += [(e, 0), (e, 1)]
    for l in range(n, dim):
        vecs[l, l] = 1
        labels.append(("invalid", l))
    return OrthoBasis(vecs, tuple(labels))


def measure_ballot(state: PureState, m: Matching, rng: np.random.Generator):
    """Measure a ballot in the matching basis of ``m``.

    Returns:
        ``(Edge, parity)`` for a valid outcome, where the ``+`` outcome is
        parity 0, or a :class:`Corrupted` marker when the outcome is a
        padded label (only possible after noise).
    """
    n = m.n
    if state.dim < n:
        raise ContractViolation(f"state dim {state.dim} smaller than matching size {n}")
    probs = kernels.matching_outcome_probs(state.amplitudes, m.first, m.second, n)
    k = sample_index(probs, rng)
    npairs = n // 2
    if k >= 2 * npairs:
        return Corrupted(n + k - 2 * npairs)
    pair, parity = divmod(k, 2)
    return Edge(int(m.first[pair]), int(m.second[pair])), parity


def make_tag(edge: Edge, p: int, v: int, extras: Sequence[tuple[Edge, int]] = ()) -> VoteTag:
    """Tag with agreement bit ``p ^ v``; extras are copied verbatim."""
    return VoteTag(edge, (p ^ v) & 1, tuple((e, int(q)) for e, q in extras))


def _check_range(edges, x: RandomString):
    for e in edges:
        if e.j >= x.n:
            raise ContractViolation(f"edge {e} out of range for n={x.n}")


def decode_vote(tag: VoteTag, x: RandomString) -> int:
    _check_range((tag.edge,), x)
    return x.parity(tag.edge.i, tag.edge.j) ^ tag.agreement


def verify_tag(tag: VoteTag, x: RandomString) -> bool:
    """True iff every extra parity is right and all the tag's edges are disjoint."""
    seen: set[int] = set()
    for e in tag.edges:
        if e.j >= x.n or e.i in seen or e.j in seen:
            return False
        seen.update((e.i, e.j))
    return all(x.parity(e.i, e.j) == p for e, p in tag.extra)


def index_bits(n: int) -> int:
    return max(1, math.ceil(math.log2(n)))


def tag_to_bits(tag: VoteTag, n: int) -> list[int]:
    """Serialize a tag for bitwise broadcast: ``2*ceil(log2 n) + 1`` bits per edge."""
    w = index_bits(n)
    out: list[int] = []
    for e, bit in ((tag.edge, tag.agreement),) + tag.extra:
        for v in (e.i, e.j):
            out += [(v >> s) & 1 for s in range(w - 1, -1, -1)]
        out.append(bit)
    return out


def tag_from_bits(bits: Sequence[int], n: int) -> VoteTag:
    w = index_bits(n)
    step = 2 * w + 1
    if len(bits) % step or not bits:
        raise ContractViolation(f"bit count {len(bits)} is not a multiple of {step}")
    items = []
    for off in range(0, len(bits), step):
        chunk = bits[off : off + step]
        i = int("".join(map(str, chunk[:w])), 2)
        j = int("".join(map(str, chunk[w : 2 * w])), 2)
        items.append((Edge.of(i, j), int(chunk[-1])))
    return VoteTag(items[0][0], items[0][1], tuple(items[1:]))
