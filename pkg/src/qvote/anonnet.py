"""Anonymous primitives over a ring of entangled parties.

Party ``k`` shares the pair on ring link ``k`` with party ``k+1`` (mod N):
its half of link ``k`` is the second register ``j_k`` of its local
generalized CNOT, and its half of link ``k-1`` is the control ``i_k``.

Each link is simulated on its own.  In key rounds the Z statistics only
depend on each pair's computational outcomes.  In test rounds the ring
splits into segments between consecutive testers; the non-testers' Bell
measurements swap entanglement along a segment so the two testers at its
ends share a state whose X outcomes satisfy
``alpha + beta + sum(c) == 0 (mod M)``, where ``c`` are the announced
X outcomes of the non-testers.  Segments made only of ideal pairs use
that closed form; any segment touching a non-ideal link is composed
explicitly from statevectors.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from qvote import kernels, qsim
from qvote.errors import AvailabilityError, ContractViolation, PlanningError, TamperingAlarm
from qvote.qsim import PureState
from qvote.stats import wilson_interval

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# channels


class ChannelModel:
    """How a freshly distributed pair on a ring link reaches the parties."""

    kind = "ideal"

    def is_ideal(self, link: int) -> bool:
        return True

    def transmit(self, pair: PureState, link: int, rng: np.random.Generator) -> PureState:
        return pair

    def to_dict(self) -> dict:
        return {"kind": self.kind}


IDEAL = ChannelModel()


@dataclass(frozen=True)
class InterceptResendChannel(ChannelModel):
    """Measures the transiting half in the computational basis and forwards it."""

    links: frozenset[int]
    kind = "intercept_resend"

    def is_ideal(self, link: int) -> bool:
        return link not in self.links

    def transmit(self, pair, link, rng):
        if link not in self.links:
            return pair
        M = pair.parts[1]
        _, post = qsim.measure_part(pair, 1, qsim.computational_basis(M), rng)
        return post

    def to_dict(self) -> dict:
        return {"kind": self.kind, "links": sorted(self.links)}


@dataclass(frozen=True)
class LossyChannel(ChannelModel):
    """With probability ``loss`` the transiting half is lost and replaced.

    The receiver substitutes a uniformly random basis state; the sender's
    half is then maximally mixed (sampled by a computational measurement).
    """

    loss: float
    kind = "lossy"

    def __post_init__(self):
        if not 0 <= self.loss <= 1:
            raise ContractViolation("loss probability outside [0, 1]")

    def is_ideal(self, link: int) -> bool:
        return self.loss == 0

    def transmit(self, pair, link, rng):
        if rng.random() >= self.loss:
            return pair
        M = pair.parts[0]
        a, b = rng.integers(M), rng.integers(M)
        return PureState.basis_state(M * M, a * M + b, (M, M))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "loss": self.loss}


# --------------------------------------------------------------------------
# configuration and results


def default_modulus(N: int) -> int:
    return max(2, 1 << max(0, math.ceil(math.log2(N))))


@dataclass(frozen=True)
class RingConfig:
    """Ring of ``N`` parties sharing ``M``-level pairs.

    ``test_prob`` defaults to ``1/N``; a lone party has no neighbour to
    test against and defaults to 0.  ``max_attempts`` bounds keygen retries per secure sum (default ``50*N``).
    """

    N: int
    M: int | None = None
    test_prob: float | None = None
    channel: ChannelModel = IDEAL
    max_attempts: int | None = None

    def __post_init__(self):
        if self.N < 1:
            raise ContractViolation("ring needs at least one party")
        M = default_modulus(self.N) if self.M is None else int(self.M)
        if M < 2 or M & (M - 1):
            raise ContractViolation(f"modulus must be a power of two >= 2, got {M}")
        if self.test_prob is None:
            p = 1 / self.N if self.N > 1 else 0.0
        else:
            p = float(self.test_prob)
        if not 0 <= p <= 1:
            raise ContractViolation("test probability outside [0, 1]")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "test_prob", p)
        if self.max_attempts is None:
            object.__setattr__(self, "max_attempts", 50 * self.N)

    def with_modulus(self, M: int) -> "RingConfig":
        return RingConfig(self.N, M, self.test_prob, self.channel, self.max_attempts)


@dataclass(frozen=True)
class KeyShare:
    party: int
    z: int


@dataclass(frozen=True)
class KeyShares:
    shares: tuple[KeyShare, ...]
    M: int

    def values(self) -> np.ndarray:
        return np.array([s.z for s in self.shares], dtype=np.int64)


@dataclass(frozen=True)
class FidelityReport:
    """Correlation checks of one test round; ``F_min`` is the pass fraction."""

    tested_links: int
    passed: int
    F_min: float

    def __post_init__(self):
        if not 0 <= self.passed <= self.tested_links:
            raise ContractViolation("passed checks exceed tested links")

    @classmethod
    def from_counts(cls, tested: int, passed: int) -> "FidelityReport":
        return cls(tested, passed, passed / tested if tested else 1.0)

    @property
    def failed(self) -> int:
        return self.tested_links - self.passed

    def interval(self) -> tuple[float, float]:
        """99.9% Wilson interval on the pass probability."""
        return wilson_interval(self.passed, self.tested_links) if self.tested_links else (0.0, 1.0)


@dataclass(frozen=True)
class TestRound:
    __test__ = False  # not a pytest class

    report: FidelityReport
    testers: tuple[int, ...]


# --------------------------------------------------------------------------
# key generation


def _bell_swap(psi1: PureState, psi2: PureState, M: int, rng: np.random.Generator):
    """Generalized Bell measurement on the inner halves of two pair states.

    The measuring party holds the second register of ``psi1`` and the first
    register of ``psi2``; after its CNOT it measures X on the control and Z
    on the target, outcomes ``(c, d)``.  Returns ``(c, d, outer_state)``.
    """
    a1 = psi1.amplitudes.reshape(M, M)  # [l, a]
    a2 = psi2.amplitudes.reshape(M, M)  # [b, r]
    p1 = np.sum(np.abs(a1) ** 2, axis=0)
    p2 = np.sum(np.abs(a2) ** 2, axis=1)
    pd = np.array([np.dot(p1, np.roll(p2, -d)) for d in range(M)])
    d = qsim.sample_index(pd, rng)
    shifted = a2[(np.arange(M) + d) % M]  # [a, r] = a2[a+d, r]
    t = a1[:, None, :] * shifted.T[None, :, :]  # [l, r, a]
    res = np.fft.fft(t, axis=2) / math.sqrt(M)  # [l, r, c]
    pc = np.sum(np.abs(res) ** 2, axis=(0, 1))
    c = qsim.sample_index(pc, rng)
    return c, d, PureState.from_unnormalized(res[:, :, c].reshape(-1), (M, M))


def _segment_check(links: Sequence[int], states: dict, cfg: RingConfig, rng) -> bool:
    """Run one tester-to-tester segment; True when the X correlation holds."""
    M = cfg.M
    if all(l not in states for l in links):
        return True  # ideal pairs: the relation holds identically
    cur = states[links[0]] if links[0] in states else qsim.epr_qudit(M)
    total_c = 0
    for l in links[1:]:
        nxt = states[l] if l in states else qsim.epr_qudit(M)
        c, _, cur = _bell_swap(cur, nxt, M, rng)
        total_c += c
    basis = qsim.qft_basis(M)
    alpha, cur = qsim.measure_part(cur, 0, basis, rng)
    beta, _ = qsim.measure_part(cur, 1, basis, rng)
    return (alpha + beta + total_c) % M == 0


def _link_states(cfg: RingConfig, rng) -> dict:
    """States of the non-ideal links after transmission (ideal links omitted)."""
    out = {}
    for link in range(cfg.N):
        if not cfg.channel.is_ideal(link):
            out[link] = cfg.channel.transmit(qsim.epr_qudit(cfg.M), link, rng)
    return out


def keygen(cfg: RingConfig, rng: np.random.Generator, events: list | None = None):
    """One key-generation attempt around the ring.

    Returns:
        :class:`KeyShares` when nobody tested (``sum z == 0 mod M``), else a
        :class:`TestRound` whose report counts one correlation check per
        tester-to-tester segment of the ring.
    """
    N, M = cfg.N, cfg.M
    testers = np.flatnonzero(rng.random(N) < cfg.test_prob)
    states = _link_states(cfg, rng)
    if testers.size == 0:
        left = rng.integers(0, M, size=N)
        right = left.copy()
        for link, st in states.items():
            label, _ = qsim.measure(st, qsim.computational_basis(M * M), rng)
            left[link], right[link] = divmod(label, M)
        z = kernels.ring_key_shares(left, right, M)
        if events is not None:
            events.append({"event": "key", "announce": [int(v) for v in z]})
        return KeyShares(tuple(KeyShare(k, int(v)) for k, v in enumerate(z)), M)

    passed = 0
    t = testers.tolist()
    for idx, start in enumerate(t):
        stop = t[(idx + 1) % len(t)]
        length = (stop - start) % N or N
        links = [(start + s) % N for s in range(length)]
        passed += _segment_check(links, states, cfg, rng)
    report = FidelityReport.from_counts(len(t), passed)
    if events is not None:
        events.append({"event": "test", "testers": t, "passed": passed})
    return TestRound(report, tuple(t))


def keygen_batch(cfg: RingConfig, count: int, rng: np.random.Generator):
    """``count`` completed keys as a ``(count, N)`` array.

    Returns:
        ``(keys, attempts, reports)``.  On a channel with non-ideal links
        this loops over :func:`keygen`; otherwise attempts are vectorised.

    Raises:
        TamperingAlarm: a test round failed a correlation check.
        AvailabilityError: more than ``count * max_attempts`` attempts.
    """
    N, M = cfg.N, cfg.M
    budget = max(1, count) * cfg.max_attempts
    if not all(cfg.channel.is_ideal(l) for l in range(N)):
        keys, reports, attempts = [], [], 0
        while len(keys) < count:
            if attempts >= budget:
                raise AvailabilityError(f"keygen budget of {budget} attempts exhausted")
            attempts += 1
            res = keygen(cfg, rng)
            if isinstance(res, TestRound):
                reports.append(res.report)
                if res.report.failed:
                    raise TamperingAlarm(f"correlation test failed: {res.report}")
            else:
                keys.append(res.values())
        return np.array(keys, dtype=np.int64).reshape(count, N), attempts, reports

    keys = np.empty((0, N), dtype=np.int64)
    attempts = 0
    tested = 0
    while keys.shape[0] < count:
        if attempts >= budget:
            raise AvailabilityError(f"keygen budget of {budget} attempts exhausted")
        need = count - keys.shape[0]
        p_ok = (1 - cfg.test_prob) ** N
        chunk = min(budget - attempts, max(need, int(need / max(p_ok, 1e-3) * 1.2) + 2))
        tests = rng.random((chunk, N)) < cfg.test_prob
        ok = ~tests.any(axis=1)
        # stop counting attempts at the row that completes the request
        ok_idx = np.flatnonzero(ok)
        if ok_idx.size >= need:
            last = ok_idx[need - 1]
            tests, ok = tests[: last + 1], ok[: last + 1]
        attempts += len(ok)
        tested += int(tests[~ok].sum())
        a = rng.integers(0, M, size=(int(ok.sum()), N))
        keys = np.vstack([keys, kernels.ring_key_shares(a, a, M).reshape(-1, N)])
    reports = [FidelityReport.from_counts(tested, tested)] if tested else []
    return keys[:count], attempts, reports


class KeyPool:
    """Completed ring keys drawn in batches, for protocols needing many sums.

    Keys are independent of the values later added to them, so they can be
    generated ahead of use without changing any output distribution.
    """

    def __init__(self, cfg: RingConfig, rng: np.random.Generator, chunk: int = 32):
        self.cfg = cfg
        self.rng = rng
        self.chunk = chunk
        self.attempts = 0
        self.reports: list[FidelityReport] = []
        self._keys = np.empty((0, cfg.N), dtype=np.int64)
        self._next = 0

    def draw(self) -> np.ndarray:
        if self._next == len(self._keys):
            self._keys, attempts, reports = keygen_batch(self.cfg, self.chunk, self.rng)
            self.attempts += attempts
            self.reports.extend(reports)
            self._next = 0
        key = self._keys[self._next]
        self._next += 1
        return key

    def secure_sum(self, inputs: np.ndarray) -> tuple[int, np.ndarray]:
        ann = (self.draw() + inputs) % self.cfg.M
        return int(ann.sum() % self.cfg.M), ann


# --------------------------------------------------------------------------
# secure sum, broadcast, queue


@dataclass(frozen=True)
class SumResult:
    total: int
    announcements: tuple[int, ...]
    keygen_attempts: int
    reports: tuple[FidelityReport, ...] = ()


def secure_sum_run(inputs: Sequence[int], cfg: RingConfig, rng: np.random.Generator) -> SumResult:
    """Secure modular sum with the full public record of the run."""
    N, M = cfg.N, cfg.M
    if len(inputs) != N:
        raise ContractViolation(f"expected {N} inputs, got {len(inputs)}")
    b = np.asarray(inputs, dtype=np.int64)
    if np.any((b < 0) | (b >= M)):
        raise ContractViolation(f"inputs must lie in [0, {M})")
    reports = []
    for attempt in range(1, cfg.max_attempts + 1):
        res = keygen(cfg, rng)
        if isinstance(res, TestRound):
            reports.append(res.report)
            if res.report.failed:
                raise TamperingAlarm(f"correlation test failed: {res.report}")
            continue
        ann = (res.values() + b) % M
        return SumResult(int(ann.sum() % M), tuple(int(v) for v in ann), attempt, tuple(reports))
    raise AvailabilityError(f"secure sum: no key after {cfg.max_attempts} attempts")


def secure_sum(inputs: Sequence[int], cfg: RingConfig, rng: np.random.Generator) -> int:
    return secure_sum_run(inputs, cfg, rng).total


def broadcast_bit(sender: int, bit: int, cfg: RingConfig, rng: np.random.Generator) -> int:
    """Single-sender anonymous bit broadcast (binary secure sum)."""
    if cfg.M != 2:
        raise ContractViolation("bit broadcast needs a ring with M = 2")
    if not 0 <= sender < cfg.N:
        raise ContractViolation(f"sender {sender} not in ring")
    inputs = [0] * cfg.N
    inputs[sender] = bit & 1
    return secure_sum(inputs, cfg, rng)


@dataclass(frozen=True)
class BroadcastRecord:
    bits: tuple[int, ...]
    announcements: np.ndarray  # (len(bits), N)
    keygen_attempts: int


def broadcast_bits(sender: int, bits: Sequence[int], cfg: RingConfig,
                   rng: np.random.Generator) -> BroadcastRecord:
    """Broadcast a bit string from one anonymous sender, one key per bit."""
    if cfg.M != 2:
        raise ContractViolation("bit broadcast needs a ring with M = 2")
    keys, attempts, reports = keygen_batch(cfg, len(bits), rng)
    payload = np.zeros_like(keys)
    payload[:, sender] = np.asarray(bits, dtype=np.int64) & 1
    ann = (keys + payload) % 2
    out = tuple(int(v) for v in ann.sum(axis=1) % 2)
    return BroadcastRecord(out, ann, attempts)


@dataclass(frozen=True)
class QueuePermutation:
    """``order[pos]`` is the party broadcasting in queue position ``pos``."""

    order: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.order) != list(range(len(self.order))):
            raise ContractViolation("queue order is not a permutation")

    def position_of(self, party: int) -> int:
        return self.order.index(party)


@dataclass(frozen=True)
class QueueRun:
    queue: QueuePermutation
    rounds: int
    first_slot_rounds: int
    sums: tuple[tuple[int, tuple[int, ...], int], ...] = field(default=(), repr=False)


def build_queue_run(cfg: RingConfig, rng: np.random.Generator,
                    max_rounds: int | None = None) -> QueueRun:
    """Anonymous queue; ``sums`` keeps ``(slot, announcements, total)`` per secure sum.

    Each unqueued party attempts a slot with probability ``1/(remaining)``
    by announcing ``(z + 1) mod M`` instead of ``z``; a slot is filled when
    the announced total is exactly 1.
    """
    N = cfg.N
    if N > cfg.M:
        raise ContractViolation(f"queue needs M >= N to detect collisions (N={N}, M={cfg.M})")
    cap = max_rounds if max_rounds is not None else 50 * N
    pool = KeyPool(cfg, rng)
    unqueued = np.ones(N, dtype=bool)
    order: list[int] = []
    rounds = 0
    first = 0
    sums = []
    for slot in range(N):
        remaining = N - slot
        while True:
            if rounds >= cap:
                raise AvailabilityError(f"queue not filled after {cap} secure-sum rounds")
            rounds += 1
            if slot == 0:
                first += 1
            attempt = unqueued & (rng.random(N) < 1 / remaining)
            total, ann = pool.secure_sum(attempt.astype(np.int64))
            sums.append((slot, tuple(ann.tolist()), total))
            if total == 1:
                party = int(np.flatnonzero(attempt)[0])
                order.append(party)
                unqueued[party] = False
                break
    return QueueRun(QueuePermutation(tuple(order)), rounds, first, tuple(sums))


def build_queue(cfg: RingConfig, rng: np.random.Generator,
                max_rounds: int | None = None) -> tuple[QueuePermutation, int]:
    run = build_queue_run(cfg, rng, max_rounds)
    return run.queue, run.rounds


def queue_slot_probability(N: int, slot: int) -> float:
    """Success probability of one round for 1-based ``slot``: ``(1-1/(N-i+1))**(N-i)``."""
    m = N - slot + 1
    return (1 - 1 / m) ** (m - 1)


def expected_queue_rounds(N: int) -> float:
    return sum(1 / queue_slot_probability(N, i) for i in range(1, N + 1))


# --------------------------------------------------------------------------
# anonymous state transfer


@dataclass(frozen=True)
class TransferResource:
    """GHZ resource shared by ``parties`` nodes: the voters plus the tallyman (last)."""

    ghz_fidelity: float
    parties: int

    def __post_init__(self):
        if not 0 <= self.ghz_fidelity <= 1:
            raise ContractViolation("fidelity outside [0, 1]")
        if self.parties < 3:
            raise ContractViolation("transfer needs at least two voters plus the tallyman")

    @property
    def voters(self) -> int:
        return self.parties - 1


@dataclass(frozen=True)
class Delivered:
    state: PureState
    announcements: tuple[int, ...]


@dataclass(frozen=True)
class Verified:
    passed: bool
    verifier: int


def noisy_ghz(resource: TransferResource, rng: np.random.Generator) -> PureState:
    """GHZ trajectory: with probability ``1-F`` one random qubit gets a random Pauli."""
    state = qsim.ghz(resource.parties)
    if rng.random() < 1 - resource.ghz_fidelity:
        q = int(rng.integers(resource.parties))
        pauli = "IXYZ"[int(rng.integers(4))]
        state = qsim.apply_1q(state, qsim.PAULI[pauli], q)
    return state


def verification_requested(resource: TransferResource, rng: np.random.Generator,
                           S: int | None = None) -> bool:
    """Each voter ANDs ``S`` random bits; any 1 turns this GHZ into a test."""
    N = resource.voters
    S = S if S is not None else max(1, math.ceil(math.log2(N)))
    return bool(np.any(np.all(rng.integers(0, 2, size=(N, S)) == 1, axis=1)))


def verify_ghz(state: PureState, rng: np.random.Generator) -> bool:
    """All parties measure X; pass iff an even number of ``|->`` outcomes."""
    probs = qsim.x_parity_distribution(state)
    outcome = qsim.sample_index(probs, rng)
    return bin(outcome).count("1") % 2 == 0


def distill_pair(state: PureState, receiver: int, rng: np.random.Generator):
    """Measure every voter except ``receiver`` in X; return the (receiver, tallyman) pair.

    Returns:
        ``(pair, announcements)`` where ``pair`` has qubit 0 = receiver and
        qubit 1 = tallyman, already phase-corrected by the receiver, and the
        receiver's announcement is a uniformly random dummy bit.
    """
    k = state.num_qubits
    voters = k - 1
    ann = [0] * voters
    # measure from the top so lower indices stay valid; receiver stays
    for q in range(voters - 1, -1, -1):
        if q == receiver:
            continue
        bit, state = qsim.measure_qubit(state, q, rng, basis="x", discard=True)
        ann[q] = bit
    ann[receiver] = int(rng.integers(2))
    parity = sum(b for i, b in enumerate(ann) if i != receiver) % 2
    if parity:
        state = qsim.apply_1q(state, qsim.PAULI["Z"], 0)
    return state, tuple(ann)


def teleport_qubit(register: PureState, q: int, pair: PureState, rng: np.random.Generator) -> PureState:
    """Teleport qubit ``q`` of ``register`` through ``pair`` (receiver, sender halves).

    The returned register has the receiver's qubit in position ``q``.
    """
    b = register.num_qubits
    joint = PureState(np.kron(pair.amplitudes, register.amplitudes), (2,) * (b + 2))
    # labels: bits 0..b-1 register, bit b receiver, bit b+1 sender half
    recv, send = b, b + 1
    joint = qsim.apply_cnot(joint, q, send)
    joint = qsim.apply_1q(joint, qsim._H, q)
    m2, joint = qsim.measure_qubit(joint, send, rng, discard=True)
    m1, joint = qsim.measure_qubit(joint, q, rng, discard=True)
    recv -= 1
    if m2:
        joint = qsim.apply_1q(joint, qsim.PAULI["X"], recv)
    if m1:
        joint = qsim.apply_1q(joint, qsim.PAULI["Z"], recv)
    # move the receiver qubit (now last) back to position q
    order = list(range(b - 1))
    order.insert(q, recv)
    return qsim.permute_qubits(joint, order)


def _use_ghz(register: PureState, q: int, receiver: int, resource: TransferResource,
             rng: np.random.Generator, S: int | None):
    """Spend one GHZ on qubit ``q``: a :class:`Verified` test or ``(register, announcements)``."""
    state = noisy_ghz(resource, rng)
    if verification_requested(resource, rng, S):
        return Verified(verify_ghz(state, rng), int(rng.integers(resource.voters)))
    pair, ann = distill_pair(state, receiver, rng)
    return teleport_qubit(register, q, pair, rng), ann


def anonymous_transfer(payload: PureState, receiver: int, resource: TransferResource,
                       rng: np.random.Generator, S: int | None = None):
    """One pass over the payload: either a verification test or a teleport.

    Multi-qubit payloads are teleported qubit by qubit, each through its own
    GHZ; any GHZ may instead be claimed for verification, in which case
    :class:`Verified` is returned and the payload is not delivered.  A
    failed verification must be treated as a tampering alarm by the caller
    (see :func:`transfer_state`).
    """
    if not 0 <= receiver < resource.voters:
        raise ContractViolation(f"receiver {receiver} not among {resource.voters} voters")
    register = payload
    announcements: list[int] = []
    for q in range(payload.num_qubits):
        res = _use_ghz(register, q, receiver, resource, rng, S)
        if isinstance(res, Verified):
            return res
        register, ann = res
        announcements.extend(ann)
    return Delivered(PureState(register.amplitudes, payload.parts), tuple(announcements))


def transfer_state(payload: PureState, receiver: int, resource: TransferResource,
                   rng: np.random.Generator, max_attempts: int = 1000) -> Delivered:
    """Deliver the payload, drawing a fresh GHZ whenever one is spent on a passed test.

    ``max_attempts`` caps the GHZ uses per payload qubit.

    Raises:
        TamperingAlarm: a verification test failed; no further transfer is made.
        AvailabilityError: a qubit found no usable GHZ within the cap.
    """
    if not 0 <= receiver < resource.voters:
        raise ContractViolation(f"receiver {receiver} not among {resource.voters} voters")
    register = payload
    announcements: list[int] = []
    for q in range(payload.num_qubits):
        for _ in range(max_attempts):
            res = _use_ghz(register, q, receiver, resource, rng, None)
            if not isinstance(res, Verified):
                break
            if not res.passed:
                raise TamperingAlarm("GHZ verification failed")
        else:
            raise AvailabilityError(f"no usable GHZ for qubit {q} after {max_attempts} uses")
        register, ann = res
        announcements.extend(ann)
    return Delivered(PureState(register.amplitudes, payload.parts), tuple(announcements))


# --------------------------------------------------------------------------
# purification plan


def purification_step(F: float) -> tuple[float, float]:
    """One exact recurrence round: returns ``(F_next, p_success)``."""
    e = 1 - F
    p_suc = F * F + (2 / 3) * F * e + (5 / 9) * e * e
    return (F * F + (e / 3) ** 2) / p_suc, p_suc


def linearized_fidelity(epsilon: float, rounds: int) -> float:
    return 1 - (2 / 3) ** rounds * epsilon


def exact_fidelity(epsilon: float, rounds: int) -> float:
    F = 1 - epsilon
    for _ in range(rounds):
        F, _ = purification_step(F)
    return F


def anonymity_target_fidelity(gamma: float, N: int) -> float:
    """Per-pair fidelity giving gamma-anonymity overall: ``sqrt(1 - g^2/(N^8 log2(N)^2))``."""
    return math.sqrt(1 - gamma**2 / (N**8 * math.log2(N) ** 2))


@dataclass(frozen=True)
class PurificationPlan:
    rounds: int
    fidelity: float
    bell_cost: int
    target: float
    exact_fidelity: float
    one_round_exact: float
    one_round_linear: float
    one_round_p_success: float


def purification_plan(epsilon: float, gamma: float, N: int, max_rounds: int = 200) -> PurificationPlan:
    """Smallest number of rounds whose linearized fidelity reaches the anonymity target."""
    if not 0 <= epsilon < 1:
        raise ContractViolation("initial infidelity must lie in [0, 1)")
    if gamma <= 0:
        raise ContractViolation("anonymity budget must be positive")
    if N < 2:
        raise ContractViolation("need at least two voters")
    target = anonymity_target_fidelity(gamma, N)
    r = 0
    while linearized_fidelity(epsilon, r) < target:
        r += 1
        if r > max_rounds:
            raise PlanningError(f"target fidelity {target!r} needs more than {max_rounds} rounds")
    one_exact, p_suc = purification_step(1 - epsilon)
    return PurificationPlan(
        rounds=r,
        fidelity=linearized_fidelity(epsilon, r),
        bell_cost=2**r,
        target=target,
        exact_fidelity=exact_fidelity(epsilon, r),
        one_round_exact=one_exact,
        one_round_linear=linearized_fidelity(epsilon, 1),
        one_round_p_success=p_suc,
    )
