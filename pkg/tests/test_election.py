import dataclasses
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qvote import adversary, ballot, election
from qvote.ballot import Edge, RandomString, VoteTag
from qvote.election import UNDECIDED, ElectionConfig, RoundTranscript, Winner
from qvote.errors import AvailabilityError, ContractViolation
from qvote.harness.oracles import brute_force_collision, collision_bound

from conftest import three_sigma


def _round(tags, x, complaints=0, index=0):
    counted, decoded = election.tally_round(tags, x)
    return RoundTranscript(index, tuple(tags), x, counted, decoded, complaints)


def _independent_decoder(tags, x):
    """Reference tally written without the kernel or ballot helpers."""
    used, counted, decoded = set(), [], []
    for t in tags:
        edges = [(t.edge.i, t.edge.j, None)] + [(e.i, e.j, p) for e, p in t.extra]
        ok = all(x.bits[i] ^ x.bits[j] == p for i, j, p in edges[1:])
        verts = {t.edge.i, t.edge.j}
        c = ok and not (verts & used)
        if c:
            used |= verts
        counted.append(c)
        decoded.append(x.bits[t.edge.i] ^ x.bits[t.edge.j] ^ t.agreement)
    return tuple(counted), tuple(decoded)


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"voters": 1, "bits": 8}, {"voters": 3, "bits": 5}, {"voters": 5, "bits": 8},
        {"voters": 3, "bits": 8, "rounds": 0}, {"voters": 3, "bits": 8, "noise": 2.0},
        {"voters": 3, "bits": 8, "tag_copies": 0}, {"voters": 3, "bits": 8, "ghz_fidelity": -0.1},
    ])
    def test_rejects(self, kw):
        with pytest.raises(ContractViolation):
            ElectionConfig(**kw)

    def test_adversary_checked(self):
        with pytest.raises(ContractViolation):
            ElectionConfig(3, 8, adversary=adversary.ForgerSpec((5,), 1, 1))
        with pytest.raises(ContractViolation):
            ElectionConfig(3, 8, tallymen=1, adversary=adversary.TallymanForgery(1, 2, 1))

    def test_padding(self):
        assert ElectionConfig(3, 8).padded
        assert not ElectionConfig(3, 8, trusted_tallyman=True).padded
        assert ElectionConfig(3, 8, trusted_tallyman=True, noise=0.1).padded


class TestTally:
    def test_shared_vertex(self):
        x = RandomString.from_str("0110")
        counted, _ = election.tally_round([VoteTag(Edge(0, 1), 0), VoteTag(Edge(1, 2), 0)], x)
        assert counted == (True, False)

    def test_invalid_tag_does_not_block(self):
        x = RandomString.from_str("011000")
        bad = VoteTag(Edge(0, 1), 0, ((Edge(2, 3), 1 - x.parity(2, 3)),))
        good = VoteTag(Edge(1, 4), 0)
        assert election.tally_round([bad, good], x)[0] == (False, True)

    def test_empty(self):
        assert election.tally_round([], RandomString.from_str("00")) == ((), ())

    @given(st.integers(0, 2**32), st.integers(0, 12), st.integers(1, 3))
    def test_matches_independent_decoder(self, seed, count, copies):
        g = np.random.default_rng(seed)
        n = 16
        x = RandomString.random(n, g)
        tags = []
        for _ in range(count):
            v = g.choice(n, 2 * copies, replace=False).reshape(-1, 2)
            es = [Edge.of(a, b) for a, b in v]
            tags.append(VoteTag(es[0], int(g.integers(2)), tuple((e, int(g.integers(2))) for e in es[1:])))
        assert election.tally_round(tags, x) == _independent_decoder(tags, x)


class TestDecide:
    def test_one_round(self):
        x = RandomString.from_str("000000")
        t = _round([VoteTag(Edge(0, 1), 0), VoteTag(Edge(2, 3), 0), VoteTag(Edge(4, 5), 1)], x)
        res = election.decide([t])
        assert res.margin == 1 and res.outcome == Winner(0)

    def test_tie(self):
        x = RandomString.from_str("0000")
        t = _round([VoteTag(Edge(0, 1), 0), VoteTag(Edge(2, 3), 1)], x)
        assert election.decide([t]).outcome is UNDECIDED

    def test_complaint_guard(self):
        x = RandomString.from_str("0" * 8)
        # margin 0.5 against complaints 0.5: 0.5 < 2 * 0.5
        rounds = [_round([VoteTag(Edge(0, 1), 0)], x, complaints=1, index=0),
                  _round([VoteTag(Edge(0, 1), 0), VoteTag(Edge(2, 3), 1)], x, complaints=0, index=1)]
        res = election.decide(rounds)
        assert res.margin == 0.5 and res.avg_complaints == 0.5 and res.outcome is UNDECIDED
        assert election._outcome(0.5, 0.4) is UNDECIDED
        assert election._outcome(0.5, 0.2) == Winner(0)

    def test_needs_rounds(self):
        with pytest.raises(ContractViolation):
            election.decide([])

    def test_majority(self):
        assert election.majority([0, 0, 1]) == Winner(0)
        assert election.majority([0, 1]) is UNDECIDED


class TestRounds:
    def test_honest_three(self, rng):
        cfg = ElectionConfig(3, 256, trusted_tallyman=True)
        for _ in range(20):
            t = election.run_voting_round(cfg, (0, 0, 1), rng)
            if election.collision_free(t):
                assert len(t.tags) == 3 and t.complaints == 0
                votes = sorted(t.voters[p].vote for p in range(3))
                assert sorted(t.decoded_votes) == votes == [0, 0, 1]
                return
        pytest.fail("no collision-free round")

    def test_untrusted_round_decodes(self, rng):
        cfg = ElectionConfig(3, 64)
        t = election.run_voting_round(cfg, (0, 1, 1), rng)
        own = {r.tag: r.vote for r in t.voters if r.tag is not None}
        for tag, v in zip(t.tags, t.decoded_votes):
            assert own[tag] == v

    def test_tag_order_follows_queue(self, rng):
        cfg = ElectionConfig(4, 128, trusted_tallyman=True)
        t = election.run_voting_round(cfg, (0, 1, 0, 1), rng)
        by_party = {r.party: r.tag for r in t.voters}
        assert list(t.tags) == [by_party[p] for p in t.queue.order if by_party[p] is not None]

    def test_complaint_on_collision(self, rng):
        cfg = ElectionConfig(2, 4, trusted_tallyman=True)
        seen = False
        for _ in range(200):
            t = election.run_voting_round(cfg, (0, 1), rng)
            assert t.complaints == sum(r.complaint for r in t.voters)
            assert t.complaints == len(t.tags) - sum(t.counted)
            seen |= t.complaints > 0
        assert seen

    def test_bad_votes(self, rng):
        cfg = ElectionConfig(3, 8, trusted_tallyman=True)
        with pytest.raises(ContractViolation):
            election.run_voting_round(cfg, (0, 1), rng)
        with pytest.raises(ContractViolation):
            election.run_voting_round(cfg, (0, 1, 2), rng)

    def test_round_index_on_availability(self, rng, monkeypatch):
        def boom(*a, **k):
            raise AvailabilityError("exhausted")
        monkeypatch.setattr(election.anonnet, "build_queue_run", boom)
        with pytest.raises(AvailabilityError) as info:
            election.run_voting_round(ElectionConfig(3, 8), (0, 0, 1), rng, round_index=4)
        assert info.value.round_index == 4

    def test_noise_triggers_complaints(self, rng):
        cfg = ElectionConfig(4, 64, trusted_tallyman=True, noise=0.3, rounds=10)
        res = election.run_election(cfg, (0, 0, 0, 1), rng)
        assert res.avg_complaints > 0

    def test_tampering_triggers_complaints(self, rng):
        cfg = ElectionConfig(4, 64, trusted_tallyman=True, rounds=10,
                             adversary=adversary.BallotTampering(1.0))
        res = election.run_election(cfg, (0, 0, 0, 1), rng)
        assert res.avg_complaints > 0.5


class TestElections:
    def test_five_voters(self, rng):
        cfg = ElectionConfig(5, 1024, rounds=5)
        assert election.run_election(cfg, (0, 0, 0, 1, 1), rng).outcome == Winner(0)

    @pytest.mark.parametrize("r", [1, 3])
    def test_unanimous_ones(self, r, rng):
        cfg = ElectionConfig(4, 8, rounds=r, trusted_tallyman=True)
        res = election.run_election(cfg, (1, 1, 1, 1), rng)
        # collisions drop votes; with n = 2N every vertex is covered only when none collide
        assert res.avg0 == 0
        cfg = ElectionConfig(4, 4096, rounds=r, trusted_tallyman=True)
        for _ in range(10):
            res = election.run_election(cfg, (1, 1, 1, 1), rng)
            if res.avg_complaints == 0:
                assert res.margin == -4 and res.outcome == Winner(1)
                return
        pytest.fail("every election saw a collision")

    def test_correctness_exhaustive(self, rng):
        """Honest, noiseless, collision-free elections always return the majority."""
        checked = 0
        for N in range(2, 6):
            cfg = ElectionConfig(N, 2048, rounds=2, trusted_tallyman=True)
            for votes in itertools.product((0, 1), repeat=N):
                run = election.run_election_full(cfg, votes, rng)
                if all(election.collision_free(t) for t in run.transcripts[0]):
                    checked += 1
                    assert run.result.outcome == election.majority(votes)
                    assert run.result.margin == votes.count(0) - votes.count(1)
        assert checked >= 50

    def test_collision_rate_two_voters(self, rng):
        trials = 20_000
        cfg = ElectionConfig(2, 6, trusted_tallyman=True)
        hits = sum(not election.collision_free(election.run_voting_round(cfg, (0, 1), rng))
                   for _ in range(trials))
        p = float(brute_force_collision(2, 6))
        assert p == pytest.approx(3 / 5)
        assert abs(hits / trials - p) <= three_sigma(p, trials)

    def test_collision_rate_bound(self, rng):
        trials = 3000
        cfg = ElectionConfig(4, 256, trusted_tallyman=True)
        hits = sum(not election.collision_free(election.run_voting_round(cfg, (0, 1, 0, 1), rng))
                   for _ in range(trials))
        assert hits / trials <= collision_bound(4, 256)

    def test_dishonest_tallyman_discrepancy(self, rng):
        spec = adversary.TallymanForgery(tallyman=1, forged_votes=3, target=1)
        cfg = ElectionConfig(3, 256, rounds=3, tallymen=2, trusted_tallyman=True, adversary=spec)
        trials = 40
        flagged = 0
        for _ in range(trials):
            res = election.run_election(cfg, (0, 0, 1), rng)
            if not res.consistent:
                flagged += 1
                assert res.outcome is UNDECIDED
        assert flagged / trials >= 0.9

    def test_honest_tallymen_agree(self, rng):
        cfg = ElectionConfig(3, 1024, rounds=3, tallymen=3, trusted_tallyman=True)
        res = election.run_election(cfg, (0, 0, 1), rng)
        assert len(res.per_tallyman) == 3
        assert res.consistent == (len({p.outcome for p in res.per_tallyman}) == 1)

    def test_deterministic(self):
        cfg = ElectionConfig(4, 64, rounds=2)
        a = election.run_election(cfg, (0, 0, 1, 1), np.random.default_rng(7))
        b = election.run_election(cfg, (0, 0, 1, 1), np.random.default_rng(7))
        assert a == b

    def test_result_round_trip(self, rng):
        cfg = ElectionConfig(3, 64, rounds=2, tallymen=2, trusted_tallyman=True)
        res = election.run_election(cfg, (0, 0, 1), rng)
        assert election.ElectionResult.from_dict(res.to_dict()) == res


class TestVerify:
    @pytest.fixture
    def honest(self, rng):
        cfg = ElectionConfig(3, 512, rounds=2, trusted_tallyman=True)
        while True:
            run = election.run_election_full(cfg, (0, 0, 1), rng)
            if all(election.collision_free(t) for t in run.transcripts[0]):
                return run

    def test_honest(self, honest):
        t0 = honest.transcripts[0][0]
        rec = t0.voters[0]
        assert election.verify_transcript(honest.result, honest.transcripts[0], rec.tag, rec.vote) == (True, True)

    def test_dropped_tag(self, rng):
        x = RandomString.from_str("00000000")
        tags = [VoteTag(Edge(0, 1), 0), VoteTag(Edge(1, 2), 1)]
        rounds = [_round(tags, x)]
        res = election.decide(rounds)
        assert election.verify_transcript(res, rounds, tags[1], 1) == (False, True)

    def test_tampered_margin(self, honest):
        bad = dataclasses.replace(honest.result, margin=honest.result.margin + 1)
        assert election.verify_transcript(bad, honest.transcripts[0], None, 0)[1] is False

    def test_single_field_mutations(self, honest):
        rounds = list(honest.transcripts[0])
        res = honest.result
        for name, value in [("avg0", res.avg0 + 0.5), ("avg1", res.avg1 - 0.5),
                            ("avg_complaints", res.avg_complaints + 1), ("outcome", UNDECIDED),
                            ("transcript_digest", "0" * 64)]:
            assert not election.verify_transcript(dataclasses.replace(res, **{name: value}), rounds, None, 0)[1]
        t = rounds[0]
        mutations = [
            dataclasses.replace(t, complaints=t.complaints + 1),
            dataclasses.replace(t, counted=(not t.counted[0],) + t.counted[1:]),
            dataclasses.replace(t, decoded_votes=(1 - t.decoded_votes[0],) + t.decoded_votes[1:]),
            dataclasses.replace(t, tags=t.tags[1:] + t.tags[:1]),
            dataclasses.replace(t, round_index=5),
            dataclasses.replace(t, x=t.x.complement()),
        ]
        for m in mutations:
            assert not election.verify_transcript(res, [m] + rounds[1:], None, 0)[1]

    def test_multi_tallyman(self, rng):
        cfg = ElectionConfig(3, 512, rounds=2, tallymen=2, trusted_tallyman=True)
        run = election.run_election_full(cfg, (0, 0, 1), rng)
        assert election.verify_transcript(run.result, run.transcripts, None, 0)[1]
        # one tallyman's rounds cannot vouch for the other's published numbers
        assert not election.verify_transcript(run.result, run.transcripts[0], None, 0)[1]
        bad = dataclasses.replace(run.result, consistent=not run.result.consistent)
        assert not election.verify_transcript(bad, run.transcripts, None, 0)[1]
        other = dataclasses.replace(run.result.per_tallyman[1], avg0=run.result.per_tallyman[1].avg0 + 1)
        bad = dataclasses.replace(run.result, per_tallyman=(run.result.per_tallyman[0], other))
        assert not election.verify_transcript(bad, run.transcripts, None, 0)[1]
