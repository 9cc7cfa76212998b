"""Voting rounds, the multi-round decision rule and transcript auditing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from qvote import adversary, anonnet, ballot, kernels, qsim
from qvote.anonnet import QueuePermutation, RingConfig
from qvote.ballot import Corrupted, Edge, RandomString, VoteTag
from qvote.errors import AvailabilityError, ContractViolation


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ElectionConfig:
    """Parameters of one election.

    Attributes:
        voters: number of ring parties casting tags (honest or controlled).
        bits: length of the tallyman's secret string.
        rounds: repetitions averaged by :func:`decide`.
        tag_copies: ballot copies per voter; copies beyond the first become
            authenticated extra parities.
        tallymen: independent tallymen, each running its own election.
        trusted_tallyman: deliver ballots directly instead of through the
            anonymous GHZ transfer.
        noise: bit-flip probability per ballot qubit after delivery.
        ghz_fidelity: fidelity of the transfer resources.
        adversary: optional threat model from :mod:`qvote.adversary`.
    """

    voters: int
    bits: int
    rounds: int = 1
    tag_copies: int = 1
    tallymen: int = 1
    trusted_tallyman: bool = False
    noise: float = 0.0
    ghz_fidelity: float = 1.0
    adversary: adversary.AdversarySpec | None = None
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.voters < 2:
            problems.append("voters must be >= 2")
        if self.bits % 2 or self.bits < 2:
            problems.append("bits must be even and >= 2")
        elif self.bits < 2 * self.voters:
            problems.append(f"bits must be >= 2*voters = {2 * self.voters}")
        for name in ("rounds", "tag_copies", "tallymen"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if not 0 <= self.noise <= 1:
            problems.append("noise must lie in [0, 1]")
        if not 0 <= self.ghz_fidelity <= 1:
            problems.append("ghz_fidelity must lie in [0, 1]")
        if problems:
            raise ContractViolation("; ".join(problems))
        if self.adversary is not None:
            self.adversary.check(self)

    @property
    def padded(self) -> bool:
        """Ballots live in a qubit register when noise or transfer acts on them."""
        return self.noise > 0 or not self.trusted_tallyman


# --------------------------------------------------------------------------
# transcripts and results


@dataclass(frozen=True)
class VoterRecord:
    """What one voter privately knows after a round."""

    party: int
    vote: int
    measured: tuple[tuple[Edge, int], ...]
    tag: VoteTag | None
    complaint: int


@dataclass(frozen=True)
class PublicLog:
    """Classical announcements other than the tags themselves."""

    queue_sums: tuple[tuple[int, tuple[int, ...], int], ...]
    tag_bits: np.ndarray  # (broadcast bits, parties)
    tag_offsets: tuple[int, ...]  # first bit of each tag
    complaint_announcements: tuple[int, ...]


@dataclass(frozen=True)
class RoundTranscript:
    """Public record of one round, plus private state kept out of the audit.

    ``queue``, ``voters`` and ``log`` are excluded from equality, the digest
    and serialization: the queue order and voter records are private, and
    the log is only consumed by distinguishers.
    """

    round_index: int
    tags: tuple[VoteTag, ...]
    x: RandomString
    counted: tuple[bool, ...]
    decoded_votes: tuple[int, ...]
    complaints: int
    queue: QueuePermutation | None = field(default=None, compare=False, repr=False)
    voters: tuple[VoterRecord, ...] = field(default=(), compare=False, repr=False)
    log: PublicLog | None = field(default=None, compare=False, repr=False)

    def public_dict(self) -> dict:
        return {
            "round": self.round_index,
            "x": self.x.to_hex(),
            "n": self.x.n,
            "complaints": self.complaints,
            "tags": [
                {
                    "position": pos,
                    "i": t.edge.i,
                    "j": t.edge.j,
                    "a": t.agreement,
                    "extras": [[e.i, e.j, p] for e, p in t.extra],
                    "counted": bool(c),
                    "decoded_vote": int(v),
                }
                for pos, (t, c, v) in enumerate(zip(self.tags, self.counted, self.decoded_votes))
            ],
        }


@dataclass(frozen=True)
class Winner:
    bit: int

    def __str__(self) -> str:
        return f"winner {self.bit}"


@dataclass(frozen=True)
class Undecided:
    def __str__(self) -> str:
        return "undecided"


UNDECIDED = Undecided()
Outcome = Winner | Undecided


def outcome_to_json(outcome: Outcome):
    return outcome.bit if isinstance(outcome, Winner) else "undecided"


def outcome_from_json(value) -> Outcome:
    if value == "undecided":
        return UNDECIDED
    if value in (0, 1):
        return Winner(int(value))
    raise ContractViolation(f"unknown outcome {value!r}")


@dataclass(frozen=True)
class TallymanOutcome:
    tallyman: int
    avg0: float
    avg1: float
    margin: float
    avg_complaints: float
    outcome: Outcome
    transcript_digest: str


@dataclass(frozen=True)
class ElectionResult:
    """Averaged tallies and verdict.

    With several tallymen the headline numbers are tallyman 0's; ``consistent``
    is False when the tallymen disagree, in which case the outcome is
    :data:`UNDECIDED` and the discrepancy exposes a dishonest tallyman.
    """

    avg0: float
    avg1: float
    margin: float
    avg_complaints: float
    outcome: Outcome
    transcript_digest: str
    per_tallyman: tuple[TallymanOutcome, ...] = ()
    consistent: bool = True

    def to_dict(self) -> dict:
        return {
            "avg0": self.avg0,
            "avg1": self.avg1,
            "margin": self.margin,
            "avg_complaints": self.avg_complaints,
            "outcome": outcome_to_json(self.outcome),
            "transcript_digest": self.transcript_digest,
            "consistent": self.consistent,
            "per_tallyman": [
                {
                    "tallyman": p.tallyman,
                    "avg0": p.avg0,
                    "avg1": p.avg1,
                    "margin": p.margin,
                    "avg_complaints": p.avg_complaints,
                    "outcome": outcome_to_json(p.outcome),
                    "transcript_digest": p.transcript_digest,
                }
                for p in self.per_tallyman
            ],
            "metadata": {"dropped_votes_recast": False},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ElectionResult":
        per = tuple(
            TallymanOutcome(
                int(p["tallyman"]), float(p["avg0"]), float(p["avg1"]), float(p["margin"]),
                float(p["avg_complaints"]), outcome_from_json(p["outcome"]), str(p["transcript_digest"]),
            )
            for p in d.get("per_tallyman", [])
        )
        return cls(
            float(d["avg0"]), float(d["avg1"]), float(d["margin"]), float(d["avg_complaints"]),
            outcome_from_json(d["outcome"]), str(d["transcript_digest"]), per, bool(d.get("consistent", True)),
        )


@dataclass(frozen=True)
class ElectionRun:
    result: ElectionResult
    transcripts: tuple[tuple[RoundTranscript, ...], ...]  # per tallyman


def transcript_digest(transcripts: Sequence[RoundTranscript]) -> str:
    doc = json.dumps([t.public_dict() for t in transcripts], sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(doc.encode()).hexdigest()


# --------------------------------------------------------------------------
# public tallying


def tally_round(tags: Sequence[VoteTag], x: RandomString) -> tuple[tuple[bool, ...], tuple[int, ...]]:
    """Counted flags and decoded votes from public data only.

    A tag is counted when its extras verify and its edge is disjoint from
    every earlier counted edge; tags failing verification do not block
    later ones.
    """
    if not tags:
        return (), ()
    valid = np.array([ballot.verify_tag(t, x) for t in tags], dtype=bool)
    i = np.array([t.edge.i for t in tags], dtype=np.int64)
    j = np.array([t.edge.j for t in tags], dtype=np.int64)
    counted = np.zeros(len(tags), dtype=bool)
    idx = np.flatnonzero(valid)
    counted[idx] = kernels.counted_mask(i[idx], j[idx], x.n)
    decoded = tuple(ballot.decode_vote(t, x) for t in tags)
    return tuple(bool(c) for c in counted), decoded


def _round_counts(t: RoundTranscript) -> tuple[int, int]:
    counted, decoded = tally_round(t.tags, t.x)
    ones = sum(1 for c, v in zip(counted, decoded) if c and v)
    zeros = sum(1 for c, v in zip(counted, decoded) if c and not v)
    return zeros, ones


def _outcome(margin: float, avg_complaints: float) -> Outcome:
    if margin != 0 and abs(margin) > 2 * avg_complaints:
        return Winner(0 if margin > 0 else 1)
    return UNDECIDED


def _tally(transcripts: Sequence[RoundTranscript]) -> tuple[float, float, float, float, Outcome]:
    if not transcripts:
        raise ContractViolation("decide needs at least one round")
    r = len(transcripts)
    zeros = ones = complaints = 0
    for t in transcripts:
        z, o = _round_counts(t)
        zeros += z
        ones += o
        complaints += t.complaints
    avg0, avg1, avg_c = zeros / r, ones / r, complaints / r
    margin = avg0 - avg1
    return avg0, avg1, margin, avg_c, _outcome(margin, avg_c)


def decide(transcripts: Sequence[RoundTranscript]) -> ElectionResult:
    """Average counted votes and complaints over rounds and apply the margin guard."""
    avg0, avg1, margin, avg_c, outcome = _tally(transcripts)
    return ElectionResult(avg0, avg1, margin, avg_c, outcome, transcript_digest(transcripts))


def combine_tallymen(results: Sequence[ElectionResult]) -> ElectionResult:
    per = tuple(
        TallymanOutcome(k, r.avg0, r.avg1, r.margin, r.avg_complaints, r.outcome, r.transcript_digest)
        for k, r in enumerate(results)
    )
    head = results[0]
    consistent = all(p.outcome == head.outcome for p in per)
    digest = hashlib.sha256("".join(p.transcript_digest for p in per).encode()).hexdigest()
    return ElectionResult(
        head.avg0, head.avg1, head.margin, head.avg_complaints,
        head.outcome if consistent else UNDECIDED, digest, per, consistent,
    )


# --------------------------------------------------------------------------
# one round


def _deliver(x: RandomString, cfg: ElectionConfig, party: int, tamper, rng) -> qsim.PureState:
    state = ballot.encode_ballot(x, padded=cfg.padded)
    if tamper is not None:
        state = tamper.apply(state, rng)
    if not cfg.trusted_tallyman:
        resource = anonnet.TransferResource(cfg.ghz_fidelity, cfg.voters + 1)
        state = anonnet.transfer_state(state, party, resource, rng).state
    if cfg.noise > 0:
        state = qsim.bitflip_channel(state, qsim.NoiseParams(cfg.noise, state.num_qubits), rng)
    return state


def _measure_copies(x, cfg, party, tamper, rng):
    """Measure ``tag_copies`` ballots in fresh matchings; None if any copy is corrupted."""
    out = []
    for _ in range(cfg.tag_copies):
        state = _deliver(x, cfg, party, tamper, rng)
        res = ballot.measure_ballot(state, ballot.random_matching(cfg.bits, rng), rng)
        if isinstance(res, Corrupted):
            return None
        out.append(res)
    return tuple(out)


def _disjoint(measured) -> bool:
    seen: set[int] = set()
    for e, _ in measured:
        if e.i in seen or e.j in seen:
            return False
        seen.update((e.i, e.j))
    return True


def run_voting_round(cfg: ElectionConfig, votes: Sequence[int], rng: np.random.Generator,
                     round_index: int = 0, tallyman: int = 0) -> RoundTranscript:
    """Queue, ballot delivery, measurement, tag broadcast, reveal and tally.

    Raises:
        AvailabilityError: an anonymous subprotocol ran out of retries; the
            message carries ``round_index``.
    """
    try:
        return _voting_round(cfg, votes, rng, round_index, tallyman)
    except AvailabilityError as exc:
        if exc.round_index is not None:
            raise
        raise AvailabilityError(str(exc), round_index=round_index) from exc


def _voting_round(cfg, votes, rng, round_index, tallyman):
    N, n = cfg.voters, cfg.bits
    if len(votes) != N:
        raise ContractViolation(f"expected {N} votes, got {len(votes)}")
    if any(v not in (0, 1) for v in votes):
        raise ContractViolation("votes must be bits")
    adv = cfg.adversary
    channel = adv.ring_channel() if adv is not None else anonnet.IDEAL
    forger = adv if isinstance(adv, adversary.ForgerSpec) else None
    tamper = adv if isinstance(adv, adversary.BallotTampering) and adv.tallyman == tallyman else None
    votes = list(votes)
    if forger is not None:
        for c in forger.controlled_voters:
            votes[c] = forger.target

    queue_run = anonnet.build_queue_run(RingConfig(N, channel=channel), rng)
    queue = queue_run.queue
    x = RandomString.random(n, rng)

    measured = {k: _measure_copies(x, cfg, k, tamper, rng) for k in range(N)}

    # tags in broadcast order, with the sending party of each
    tags: list[VoteTag] = []
    senders: list[int] = []
    own_tag: dict[int, VoteTag] = {}
    used: set[int] = set()
    forged_done = False
    for party in queue.order:
        m = measured[party]
        if m is None or not _disjoint(m):
            continue
        (edge, p), extras = m[0], m[1:]
        tag = ballot.make_tag(edge, p, votes[party], extras)
        own_tag[party] = tag
        batch = [tag]
        if forger is not None and party in forger.controlled_voters and not forged_done:
            forged_done = True
            ballots = [measured[c] for c in forger.controlled_voters if measured[c] is not None]
            avoid = used if forger.adaptive else set()
            forgery = adversary.forge(forger, ballots, rng, n=n, tag_copies=cfg.tag_copies,
                                      avoid=avoid | {v for t in batch for e in t.edges for v in e})
            batch += list(forgery.forged)
        for t in batch:
            tags.append(t)
            senders.append(party)
            used.update(v for e in t.edges for v in e)

    # bitwise anonymous broadcast of every tag from its sender
    bits = [ballot.tag_to_bits(t, n) for t in tags]
    offsets = tuple(int(v) for v in np.cumsum([0] + [len(b) for b in bits])[:-1])
    flat = [b for chunk in bits for b in chunk]
    ring2 = RingConfig(N, M=2, channel=channel)
    keys, _, _ = anonnet.keygen_batch(ring2, len(flat), rng) if flat else (np.zeros((0, N), np.int64), 0, [])
    payload = np.zeros_like(keys)
    for off, chunk, s in zip(offsets, bits, senders):
        payload[off : off + len(chunk), s] = chunk
    announced = (keys + payload) % 2
    received = announced.sum(axis=1) % 2
    tags = [ballot.tag_from_bits(received[off : off + len(chunk)].tolist(), n)
            for off, chunk in zip(offsets, bits)]

    # dishonest tallyman appends correctly-parity forged votes
    if isinstance(adv, adversary.TallymanForgery) and adv.tallyman == tallyman:
        tags += adversary.tallyman_forgeries(adv, x, tags, rng, tag_copies=cfg.tag_copies)

    counted, decoded = tally_round(tags, x)
    counted_tags = {t for t, c in zip(tags, counted) if c}

    records = []
    complaint_bits = np.zeros(N, dtype=np.int64)
    for party in range(N):
        m = measured[party]
        tag = own_tag.get(party)
        if forger is not None and party in forger.controlled_voters:
            b = 0
        elif tag is None:
            b = 1
        else:
            wrong = any(x.parity(e.i, e.j) != q for e, q in m)
            b = int(wrong or tag not in counted_tags)
        complaint_bits[party] = b
        records.append(VoterRecord(party, votes[party], m or (), tag, b))
    widened = RingConfig(N, M=2 * anonnet.default_modulus(N), channel=channel)
    csum = anonnet.secure_sum_run(complaint_bits, widened, rng)

    log = PublicLog(queue_run.sums, announced, offsets, csum.announcements)
    return RoundTranscript(round_index, tuple(tags), x, counted, decoded, csum.total,
                           queue, tuple(records), log)


# --------------------------------------------------------------------------
# elections


def run_election_full(cfg: ElectionConfig, votes: Sequence[int], rng: np.random.Generator) -> ElectionRun:
    per_tallyman = []
    for k in range(cfg.tallymen):
        rounds = tuple(run_voting_round(cfg, votes, rng, r, tallyman=k) for r in range(cfg.rounds))
        per_tallyman.append(rounds)
    results = [decide(rounds) for rounds in per_tallyman]
    result = results[0] if cfg.tallymen == 1 else combine_tallymen(results)
    return ElectionRun(result, tuple(per_tallyman))


def run_election(cfg: ElectionConfig, votes: Sequence[int], rng: np.random.Generator) -> ElectionResult:
    """Run ``rounds`` fresh rounds per tallyman and decide."""
    return run_election_full(cfg, votes, rng).result


def verify_transcript(result: ElectionResult, transcripts, my_tag: VoteTag | None,
                      my_vote: int) -> tuple[bool, bool]:
    """Voter-side audit.

    ``transcripts`` is one tallyman's rounds, or one sequence of rounds per
    tallyman; a multi-tallyman result needs every tallyman's rounds since
    each published entry is recomputed.

    Returns:
        ``(vote_counted, outcome_valid)``.  ``outcome_valid`` requires the
        stored counted flags and decoded votes to match recomputation and
        the whole published result to equal a fresh :func:`decide` (and
        :func:`combine_tallymen` across tallymen).
    """
    transcripts = tuple(transcripts)
    bundle = (transcripts,) if not transcripts or isinstance(transcripts[0], RoundTranscript) else transcripts
    vote_counted = any(
        tag == my_tag and c and v == my_vote
        for rounds in bundle for t in rounds
        for tag, c, v in zip(t.tags, t.counted, t.decoded_votes)
    ) if my_tag is not None else False
    expected_count = len(result.per_tallyman) or 1
    if len(bundle) != expected_count:
        return vote_counted, False
    fresh = []
    for rounds in bundle:
        if [t.round_index for t in rounds] != list(range(len(rounds))):
            return vote_counted, False
        if any(tally_round(t.tags, t.x) != (t.counted, t.decoded_votes) for t in rounds):
            return vote_counted, False
        try:
            fresh.append(decide(rounds))
        except ContractViolation:
            return vote_counted, False
    expected = combine_tallymen(fresh) if result.per_tallyman else fresh[0]
    return vote_counted, expected == result


def collision_free(transcript: RoundTranscript) -> bool:
    return all(transcript.counted) and len(transcript.counted) > 0


def majority(votes: Sequence[int]) -> Outcome:
    ones = sum(votes)
    zeros = len(votes) - ones
    return _outcome(float(zeros - ones), 0.0)


__all__ = [
    "ElectionConfig", "ElectionResult", "ElectionRun", "RoundTranscript", "VoterRecord",
    "PublicLog", "Winner", "Undecided", "UNDECIDED", "TallymanOutcome",
    "run_voting_round", "decide", "run_election", "run_election_full", "verify_transcript",
    "tally_round", "transcript_digest", "majority",
]
