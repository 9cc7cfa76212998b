"""Threat models: forgers, eavesdroppers, dishonest tallymen and distinguishers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, ClassVar, Sequence

import numpy as np

from qvote import anonnet, ballot, qsim
from qvote.ballot import Edge, RandomString, VoteTag
from qvote.errors import ContractViolation, LeakError
from qvote.qsim import PureState
from qvote.stats import wilson_interval


# --------------------------------------------------------------------------
# threat models (the "adversary" field of an election config)


class AdversarySpec:
    """Base class; subclasses register under their ``kind``."""

    kind: ClassVar[str] = ""
    registry: ClassVar[dict[str, type]] = {}

    def __init_subclass__(cls, **kw):
        super().__init_subclass__(**kw)
        AdversarySpec.registry[cls.kind] = cls

    def check(self, cfg) -> None:
        pass

    def ring_channel(self) -> anonnet.ChannelModel:
        return anonnet.IDEAL

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            out[name] = list(v) if isinstance(v, (tuple, frozenset)) else v
        return out

    @staticmethod
    def from_dict(d: dict) -> "AdversarySpec":
        d = dict(d)
        kind = d.pop("kind", None)
        cls = AdversarySpec.registry.get(kind)
        if cls is None:
            raise ContractViolation(f"unknown adversary kind {kind!r}")
        try:
            return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})
        except TypeError as exc:
            raise ContractViolation(f"adversary {kind}: {exc}") from None


@dataclass(frozen=True)
class ForgerSpec(AdversarySpec):
    """Voters under one adversary that together cast ``votes_attempted`` tags.

    With ``adaptive`` the forged edges avoid every vertex already broadcast
    in the round, so they never collide with earlier tags.
    """

    controlled_voters: tuple[int, ...]
    votes_attempted: int
    target: int
    adaptive: bool = True
    kind: ClassVar[str] = "forger"

    def __post_init__(self):
        object.__setattr__(self, "controlled_voters", tuple(int(c) for c in self.controlled_voters))
        if len(set(self.controlled_voters)) != len(self.controlled_voters) or not self.controlled_voters:
            raise ContractViolation("controlled voters must be distinct and non-empty")
        if self.votes_attempted < len(self.controlled_voters):
            raise ContractViolation("votes_attempted must be at least the number of controlled voters")
        if self.target not in (0, 1):
            raise ContractViolation("target must be a bit")

    @property
    def k(self) -> int:
        return len(self.controlled_voters)

    @property
    def extra_votes(self) -> int:
        return self.votes_attempted - self.k

    def check(self, cfg) -> None:
        if max(self.controlled_voters) >= cfg.voters:
            raise ContractViolation("controlled voter index out of range")


@dataclass(frozen=True)
class TallymanForgery(AdversarySpec):
    """A tallyman that appends ``forged_votes`` valid votes for ``target`` each round."""

    tallyman: int
    forged_votes: int
    target: int
    kind: ClassVar[str] = "dishonest_tallyman"

    def check(self, cfg) -> None:
        if not 0 <= self.tallyman < cfg.tallymen:
            raise ContractViolation("dishonest tallyman index out of range")


@dataclass(frozen=True)
class BallotTampering(AdversarySpec):
    """A tallyman that phase-flips one random label of a ballot with probability ``rate``."""

    rate: float
    tallyman: int = 0
    kind: ClassVar[str] = "tamper"

    def apply(self, state: PureState, rng: np.random.Generator) -> PureState:
        if rng.random() >= self.rate:
            return state
        support = np.flatnonzero(np.abs(state.amplitudes) > 0)
        return tamper_ballot(state, PhaseFlip(int(rng.choice(support))))


@dataclass(frozen=True)
class RingEavesdropper(AdversarySpec):
    links: tuple[int, ...]
    kind: ClassVar[str] = "eavesdrop"

    def ring_channel(self) -> anonnet.ChannelModel:
        return anonnet.InterceptResendChannel(frozenset(self.links))


# --------------------------------------------------------------------------
# forgery


class Forgery(tuple):
    """All tags cast by a forger: honest ones first, then forged ones.

    ``guesses`` holds the guessed parity behind each forged tag and
    ``truncated`` the number of requested forgeries that did not fit.
    """

    forged: tuple[VoteTag, ...]
    guesses: tuple[int, ...]
    truncated: int

    def __new__(cls, honest, forged, guesses, truncated):
        obj = super().__new__(cls, tuple(honest) + tuple(forged))
        obj.forged = tuple(forged)
        obj.guesses = tuple(guesses)
        obj.truncated = truncated
        return obj


def _as_measurements(b) -> tuple[tuple[Edge, int], ...]:
    if len(b) == 2 and isinstance(b[0], Edge):
        return (b,)
    return tuple(b)


def _random_edges(count: int, n: int, avoid: set[int], rng) -> np.ndarray:
    free = np.setdiff1d(np.arange(n), np.fromiter(avoid, dtype=np.int64, count=len(avoid)))
    count = min(count, len(free) // 2)
    picks = rng.choice(free, size=2 * count, replace=False).reshape(-1, 2)
    return np.sort(picks, axis=1)


def forge(spec: ForgerSpec, ballots: Sequence, rng: np.random.Generator, *, n: int,
          tag_copies: int = 1, avoid: set[int] | frozenset[int] = frozenset()) -> Forgery:
    """Honest tags from ``ballots`` plus ``votes_attempted - k`` forgeries.

    Each forged tag sits on fresh vertices and encodes ``target`` under a
    fair-coin guess of its parity (independent of the ballots, which carry
    no information about disjoint edges).  Extra parities of forged tags are
    guessed the same way.
    """
    if len(ballots) > spec.k:
        raise ContractViolation("more ballots than controlled voters")
    honest = []
    used = set(avoid)
    for b in ballots:
        m = _as_measurements(b)
        (edge, p), extras = m[0], m[1:]
        honest.append(ballot.make_tag(edge, p, spec.target, extras))
        used.update(v for e, _ in m for v in e)
    want = spec.extra_votes
    edges = _random_edges(want * tag_copies, n, used, rng)
    made = len(edges) // tag_copies
    bits = rng.integers(0, 2, size=(made, tag_copies))
    forged = []
    for f in range(made):
        rows = edges[f * tag_copies : (f + 1) * tag_copies]
        es = [Edge(int(a), int(b)) for a, b in rows]
        extras = [(e, int(q)) for e, q in zip(es[1:], bits[f, 1:])]
        forged.append(ballot.make_tag(es[0], int(bits[f, 0]), spec.target, extras))
    return Forgery(honest, forged, bits[:, 0].tolist(), want - made)


def tallyman_forgeries(spec: TallymanForgery, x: RandomString, tags: Sequence[VoteTag],
                       rng: np.random.Generator, tag_copies: int = 1) -> list[VoteTag]:
    """Forged votes a tallyman can make knowing ``x``: always decode to ``target``."""
    used = {v for t in tags for e in t.edges for v in e}
    edges = _random_edges(spec.forged_votes * tag_copies, x.n, used, rng)
    out = []
    for f in range(len(edges) // tag_copies):
        es = [Edge(int(a), int(b)) for a, b in edges[f * tag_copies : (f + 1) * tag_copies]]
        extras = [(e, x.parity(e.i, e.j)) for e in es[1:]]
        out.append(ballot.make_tag(es[0], x.parity(es[0].i, es[0].j), spec.target, extras))
    return out


# --------------------------------------------------------------------------
# ballot tampering


@dataclass(frozen=True)
class PhaseFlip:
    label: int


@dataclass(frozen=True)
class DepolarizeQubit:
    qubit: int


def tamper_ballot(state: PureState, mode, rng: np.random.Generator | None = None) -> PureState:
    """Apply a tallyman's tamper to a ballot.

    ``PhaseFlip(i)`` negates the amplitude of label ``i``;
    ``DepolarizeQubit(q)`` applies a uniformly random Pauli to qubit ``q``
    of the binary register (one trajectory of full depolarization).
    """
    if isinstance(mode, PhaseFlip):
        if not 0 <= mode.label < state.dim:
            raise ContractViolation(f"label {mode.label} out of range")
        amps = state.amplitudes.copy()
        amps[mode.label] *= -1
        return PureState(amps, state.parts)
    if isinstance(mode, DepolarizeQubit):
        if rng is None:
            raise ContractViolation("depolarizing needs a random source")
        if not 0 <= mode.qubit < state.num_qubits:
            raise ContractViolation(f"qubit {mode.qubit} out of range")
        pauli = qsim.PAULI["IXYZ"[int(rng.integers(4))]]
        return qsim.apply_1q(state, pauli, mode.qubit)
    raise ContractViolation(f"unknown tamper mode {mode!r}")


# --------------------------------------------------------------------------
# eavesdropping


def eavesdrop(link: int, mode: str = "intercept_resend") -> anonnet.ChannelModel:
    if mode != "intercept_resend":
        raise ContractViolation(f"unsupported eavesdropping mode {mode!r}")
    return anonnet.InterceptResendChannel(frozenset({link}))


def intercept_check_failure(M: int) -> float:
    """Exact failure probability of a correlation check across an intercepted pair.

    Averages, over the eavesdropper's outcomes, the probability that QFT
    measurements on the collapsed pair violate ``alpha + beta == 0 mod M``.
    """
    pair = qsim.epr_qudit(M)
    qft = qsim.qft_basis(M)
    joint = np.kron(qft.vectors, qft.vectors)
    good = np.array([(a + b) % M == 0 for a in range(M) for b in range(M)])
    fail = 0.0
    amps = pair.amplitudes.reshape(M, M)
    for e in range(M):
        # receiver half projected on |e>
        branch = np.zeros((M, M), dtype=complex)
        branch[:, e] = amps[:, e]
        weight = float(np.sum(np.abs(branch) ** 2))
        if weight == 0:
            continue
        post = PureState.from_unnormalized(branch.reshape(-1), (M, M))
        probs = np.abs(joint.conj() @ post.amplitudes) ** 2
        fail += weight * float(probs[~good].sum())
    return fail


# --------------------------------------------------------------------------
# single-copy guessing oracles


def parity_ensemble(n: int, edges: Sequence[Edge]) -> dict[tuple[int, ...], np.ndarray]:
    """Average ballot density matrix conditioned on the parities of ``edges``."""
    if n > 12:
        raise ContractViolation("enumeration limited to n <= 12")
    groups: dict[tuple[int, ...], list[np.ndarray]] = {}
    for value in range(2**n):
        bits = [(value >> (n - 1 - k)) & 1 for k in range(n)]
        x = RandomString(bits)
        key = tuple(x.parity(e.i, e.j) for e in edges)
        psi = ballot.encode_ballot(x).amplitudes
        groups.setdefault(key, []).append(np.outer(psi, psi.conj()))
    return {k: np.mean(v, axis=0) for k, v in sorted(groups.items())}


def helstrom_parity_bias(n: int, edges: Sequence[Edge]) -> float:
    """Optimal probability of guessing the XOR of the parities of ``edges`` from one ballot.

    Two-hypothesis discrimination with equal priors: ``1/2 + ||rho0 - rho1||_1 / 4``.
    """
    ens = parity_ensemble(n, edges)
    rho = {0: np.zeros((n, n), complex), 1: np.zeros((n, n), complex)}
    for key, r in ens.items():
        rho[sum(key) % 2] += r / len(ens) * 2
    eig = np.linalg.eigvalsh(rho[0] - rho[1])
    return 0.5 + float(np.abs(eig).sum()) / 4


# --------------------------------------------------------------------------
# anonymity game


PRIVATE_FIELDS = frozenset({"queue", "voters", "votes", "parities", "measured", "senders"})


class PublicView:
    """Everything an outside observer sees of one round.

    Private round data is not copied in; asking for it raises
    :class:`~qvote.errors.LeakError`.
    """

    __slots__ = ("tags", "x", "counted", "decoded_votes", "complaints", "queue_sums",
                 "tag_bits", "tag_offsets", "complaint_announcements", "outcome")

    def __init__(self, transcript):
        from qvote import election

        self.tags = transcript.tags
        self.x = transcript.x
        self.counted = transcript.counted
        self.decoded_votes = transcript.decoded_votes
        self.complaints = transcript.complaints
        log = transcript.log
        self.queue_sums = log.queue_sums if log else ()
        self.tag_bits = log.tag_bits.copy() if log else np.zeros((0, 0), np.int64)
        self.tag_bits.setflags(write=False)
        self.tag_offsets = log.tag_offsets if log else ()
        self.complaint_announcements = log.complaint_announcements if log else ()
        self.outcome = election.decide([transcript]).outcome

    def __getattr__(self, name):
        if name in PRIVATE_FIELDS:
            raise LeakError(f"{name!r} is private voter state")
        raise AttributeError(name)


Strategy = Callable[[PublicView, "AnonymityGame"], int]


def announcement_matcher(view: PublicView, game: "AnonymityGame") -> int:
    """Guess from the bit announcements of the first voter whose vote differs between worlds."""
    a = game.swapped_voters()[0]
    party_parity = int(view.tag_bits[:, a].sum() % 2) if view.tag_bits.size else 0
    return party_parity ^ game.world_votes(1)[a]


def queue_timing_matcher(view: PublicView, game: "AnonymityGame") -> int:
    """Link the first broadcast vote to the number of rounds the first slot took."""
    first_rounds = sum(1 for slot, _, _ in view.queue_sums if slot == 0)
    first_vote = view.decoded_votes[0] if view.decoded_votes else 0
    a = game.swapped_voters()[0]
    return int((first_rounds % 2) ^ first_vote ^ game.world_votes(1)[a])


def outcome_guesser(view: PublicView, game: "AnonymityGame") -> int:
    """Guess from the tally alone."""
    ones = sum(v for c, v in zip(view.counted, view.decoded_votes) if c)
    return ones % 2


BUILTIN_STRATEGIES: dict[str, Strategy] = {
    "announcement": announcement_matcher,
    "queue_timing": queue_timing_matcher,
    "outcome": outcome_guesser,
}


@dataclass(frozen=True)
class AnonymityGame:
    """Distinguish honest votes ``base_votes`` from the same votes permuted by ``permutation``.

    ``permutation[k]`` is where honest voter ``honest_set[k]``'s vote moves.
    """

    honest_set: tuple[int, ...]
    permutation: tuple[int, ...]
    base_votes: tuple[int, ...]
    strategy: Strategy | Sequence[Strategy]
    trials: int

    def __post_init__(self):
        if sorted(self.permutation) != sorted(self.honest_set):
            raise ContractViolation("permutation must be a bijection on the honest set")
        if self.trials < 2:
            raise ContractViolation("need at least two trials")

    def world_votes(self, b: int) -> tuple[int, ...]:
        votes = list(self.base_votes)
        if b:
            for src, dst in zip(self.honest_set, self.permutation):
                votes[dst] = self.base_votes[src]
        return tuple(votes)

    def swapped_voters(self) -> list[int]:
        v0, v1 = self.world_votes(0), self.world_votes(1)
        diff = [k for k in range(len(v0)) if v0[k] != v1[k]]
        return diff or [self.honest_set[0]]

    def strategies(self) -> tuple[Strategy, ...]:
        return tuple(self.strategy) if isinstance(self.strategy, (list, tuple)) else (self.strategy,)


@dataclass(frozen=True)
class GameResult:
    strategy: str
    advantage: float
    ci_low: float
    ci_high: float
    correct: int
    trials: int


@dataclass(frozen=True)
class GameRun:
    results: tuple[GameResult, ...]
    queue_announcements: np.ndarray  # counts over [0, M)
    bit_announcements: np.ndarray  # counts over {0, 1}
    modulus: int


def play_anonymity_game_full(game: AnonymityGame, cfg, rng: np.random.Generator) -> GameRun:
    """Paired runs of both worlds on common randomness.

    Each pair runs world 0 and world 1 from the same seed and asks every
    strategy for a guess in both, so ``trials`` counts world runs and an
    identity permutation gives an advantage of exactly zero.
    """
    from qvote import election

    strategies = game.strategies()
    correct = np.zeros(len(strategies), dtype=np.int64)
    M = anonnet.default_modulus(cfg.voters)
    queue_counts = np.zeros(M, dtype=np.int64)
    bit_counts = np.zeros(2, dtype=np.int64)
    pairs = game.trials // 2
    seeds = rng.integers(0, 2**63, size=pairs)
    for seed in seeds:
        for b in (0, 1):
            t = election.run_voting_round(cfg, game.world_votes(b), np.random.default_rng(seed))
            view = PublicView(t)
            for s, strat in enumerate(strategies):
                correct[s] += int(strat(view, game)) == b
            if b == 0:
                for _, ann, _ in view.queue_sums:
                    queue_counts += np.bincount(ann, minlength=M)
                bit_counts += np.bincount(view.tag_bits.ravel(), minlength=2)
    trials = 2 * pairs
    results = []
    for s, strat in enumerate(strategies):
        lo, hi = wilson_interval(int(correct[s]), trials)
        name = getattr(strat, "__name__", repr(strat))
        results.append(GameResult(name, correct[s] / trials - 0.5, lo - 0.5, hi - 0.5, int(correct[s]), trials))
    return GameRun(tuple(results), queue_counts, bit_counts, M)


def play_anonymity_game(game: AnonymityGame, cfg, rng: np.random.Generator) -> GameResult:
    """Advantage of the game's (first) strategy with a 99.9% Wilson interval."""
    return play_anonymity_game_full(game, cfg, rng).results[0]


# --------------------------------------------------------------------------
# receiver anonymity of the state transfer


def guess_receiver_by_parity(announcements: Sequence[int], voters: int) -> int:
    """Receiver guess from the announcement bits: index of the first bit that
    breaks even parity of the prefix, else voter 0."""
    acc = 0
    for k, b in enumerate(announcements):
        acc ^= b
        if acc:
            return k
    return 0


def receiver_guess_accuracy(resource: anonnet.TransferResource, trials: int, rng: np.random.Generator,
                            strategy: Callable[[Sequence[int], int], int] = guess_receiver_by_parity):
    """Observer accuracy at naming the receiver of a one-qubit transfer.

    Returns:
        ``(accuracy, ci_low, ci_high)`` over ``trials`` transfers with a
        uniformly random receiver.
    """
    N = resource.voters
    hits = 0
    for _ in range(trials):
        receiver = int(rng.integers(N))
        state = anonnet.noisy_ghz(resource, rng)
        _, ann = anonnet.distill_pair(state, receiver, rng)
        hits += strategy(ann, N) == receiver
    lo, hi = wilson_interval(hits, trials)
    return hits / trials, lo, hi


def anonymity_epsilon(F: float) -> float:
    """Advantage budget matching a resource fidelity: ``F = sqrt(1 - eps^2)``."""
    return math.sqrt(max(0.0, 1 - F * F))


# --------------------------------------------------------------------------
# broadcast jamming


def jam(announced: np.ndarray, flip_prob: float, rng: np.random.Generator) -> np.ndarray:
    """Noise-based denial of service: flip each public announcement bit independently."""
    flips = rng.random(announced.shape) < flip_prob
    return announced ^ flips.astype(announced.dtype)
