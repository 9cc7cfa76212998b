import json
import subprocess
import sys
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom, norm

from qvote import adversary, election
from qvote.election import ElectionConfig
from qvote.harness import cli, experiments, oracles, transcripts
from qvote.harness import config as cfgio
from qvote.harness.experiments import ExperimentSpec, StatReport, UsageError
from qvote.stats import CONFIDENCE, mean_interval, wilson_interval


class TestOracles:
    @pytest.mark.parametrize("n,expected", [(2, Fraction(1)), (6, Fraction(3, 5)), (12, Fraction(21, 66))])
    def test_collision_enumeration(self, n, expected):
        assert oracles.brute_force_collision(2, n) == expected

    @pytest.mark.parametrize("n", [2, 4, 6, 8, 10, 12])
    def test_enumeration_matches_closed_form(self, n):
        assert oracles.brute_force_collision(2, n) == oracles.collision_closed_form(n)

    def test_bound_covers_exact(self):
        for n in (2, 4, 6, 8, 10, 12):
            assert float(oracles.brute_force_collision(2, n)) <= oracles.collision_bound(2, n)

    @pytest.mark.parametrize("N,n", [(3, 6), (2, 14), (2, 5)])
    def test_enumeration_limits(self, N, n):
        with pytest.raises(Exception):
            oracles.brute_force_collision(N, n)

    def test_matching_count(self):
        for n in (2, 4, 6, 8):
            assert len(list(oracles.all_matchings(n))) == oracles.double_factorial(n - 1)

    def test_noise_oracle_noiseless(self):
        assert oracles.noise_oracle(8, 0.0) == pytest.approx(1.0)
        assert oracles.noise_oracle(4, 0.0) == pytest.approx(1.0)

    def test_noise_oracle_two_labels(self):
        # one qubit: a flip swaps the two labels, which leaves the parity of (0, 1) intact
        assert oracles.noise_oracle(2, 0.3) == pytest.approx(1.0)

    def test_noise_oracle_limits(self):
        with pytest.raises(Exception):
            oracles.noise_oracle(6, 0.1)
        with pytest.raises(Exception):
            oracles.noise_oracle(16, 0.1)


class TestStats:
    @given(st.integers(1, 2000), st.data())
    def test_wilson_closed_form(self, n, data):
        k = data.draw(st.integers(0, n))
        z = norm.ppf(0.5 + CONFIDENCE / 2)
        ph = k / n
        centre = (ph + z * z / (2 * n)) / (1 + z * z / n)
        half = z * np.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / (1 + z * z / n)
        lo, hi = wilson_interval(k, n)
        assert lo == pytest.approx(max(0.0, centre - half), abs=1e-12)
        assert hi == pytest.approx(min(1.0, centre + half), abs=1e-12)

    @settings(max_examples=12)
    @given(st.floats(0.02, 0.98), st.sampled_from([50, 200, 1000]), st.integers(0, 2**32))
    def test_wilson_coverage(self, p, n, seed):
        # Wilson coverage is not uniformly >= nominal (about 0.991 near the edges at n=50),
        # so sampled coverage is compared with the exact binomial coverage at this p
        intervals = [wilson_interval(k, n) for k in range(n + 1)]
        inside = np.array([lo <= p <= hi for lo, hi in intervals])
        exact = binom.pmf(np.arange(n + 1), n, p)[inside].sum()
        resamples = 1000
        hits = np.random.default_rng(seed).binomial(n, p, size=resamples)
        sampled = inside[hits].mean()
        assert abs(sampled - exact) <= 3 * np.sqrt(exact * (1 - exact) / resamples) + 1 / resamples
        assert exact >= 0.99

    def test_mean_interval_coverage(self):
        g = np.random.default_rng(3)
        covered = 0
        for _ in range(1000):
            _, lo, hi = mean_interval(g.exponential(2.0, size=400))
            covered += lo <= 2.0 <= hi
        assert covered >= 990

    def test_interval_degenerate(self):
        assert wilson_interval(0, 0) == (0.0, 1.0)
        assert mean_interval([3.0]) == (3.0, 3.0, 3.0)


class TestConfig:
    def test_defaults(self):
        cfg, votes = cfgio.config_from_dict({"voters": 5, "bits": 64})
        assert cfg.rounds == 1 and votes == (0, 0, 0, 1, 1)

    @settings(max_examples=40)
    @given(
        N=st.integers(2, 8), extra=st.integers(0, 10), rounds=st.integers(1, 5), copies=st.integers(1, 3),
        tallymen=st.integers(1, 3), trusted=st.booleans(), noise=st.floats(0, 1), fid=st.floats(0, 1),
        seed=st.integers(0, 2**31), adv=st.integers(0, 4), votes=st.lists(st.integers(0, 1), min_size=8, max_size=8),
    )
    def test_round_trip(self, N, extra, rounds, copies, tallymen, trusted, noise, fid, seed, adv, votes):
        spec = [None, adversary.ForgerSpec((0,), 3, 1), adversary.TallymanForgery(0, 2, 0),
                adversary.BallotTampering(0.5), adversary.RingEavesdropper((1,))][adv]
        cfg = ElectionConfig(N, 2 * N + 2 * extra, rounds, copies, tallymen, trusted, noise, fid, spec, seed)
        doc = cfgio.config_to_dict(cfg, votes[:N])
        text = cfgio.dumps(doc)
        cfg2, votes2 = cfgio.parse_config_text(text)
        assert (cfg2, votes2) == (cfg, tuple(votes[:N]))
        assert cfgio.dumps(cfgio.config_to_dict(cfg2, votes2)) == text

    @pytest.mark.parametrize("doc,needle", [
        ({"voters": 5}, "'bits'"),
        ({"voters": "5", "bits": 64}, "'voters'"),
        ({"voters": 5, "bits": 64, "colour": 1}, "'colour'"),
        ({"voters": 5, "bits": 64, "schema": "qvote.election/9"}, "'schema'"),
        ({"voters": 5, "bits": 64, "noise": 0.1}, "'noise'"),
        ({"voters": 5, "bits": 64, "votes": [0, 1]}, "'votes'"),
        ({"voters": 5, "bits": 64, "trusted_tallyman": 1}, "'trusted_tallyman'"),
        ({"voters": 5, "bits": 64, "adversary": {"kind": "nope"}}, "'adversary'"),
        ({"voters": 5, "bits": 7}, "bits"),
    ])
    def test_diagnostics(self, doc, needle):
        with pytest.raises(cfgio.ConfigError, match=needle):
            cfgio.config_from_dict(doc)

    def test_json_syntax_error(self):
        with pytest.raises(cfgio.ConfigError, match="line 2, column"):
            cfgio.parse_config_text('{"voters": 5,\n "bits": }')

    def test_missing_file(self, tmp_path):
        with pytest.raises(cfgio.ConfigError, match="cannot read"):
            cfgio.load_config(tmp_path / "absent.json")


class TestTranscripts:
    def test_round_trip(self, rng):
        cfg = ElectionConfig(3, 32, rounds=2, tallymen=2, tag_copies=2, trusted_tallyman=True)
        run = election.run_election_full(cfg, (0, 1, 1), rng)
        text = "".join(transcripts.transcript_lines(run.transcripts))
        back = transcripts.parse_transcripts(text)
        assert back == run.transcripts
        assert election.verify_transcript(run.result, back, None, 0)[1]

    def test_private_state_not_written(self, rng):
        run = election.run_election_full(ElectionConfig(3, 32, trusted_tallyman=True), (0, 1, 1), rng)
        text = "".join(transcripts.transcript_lines(run.transcripts))
        round_keys = {"type", "tallyman", "round", "n", "x", "complaints", "tags"}
        tag_keys = {"type", "tallyman", "round", "position", "i", "j", "a", "extras", "counted", "decoded_vote"}
        for line in text.splitlines():
            rec = json.loads(line)
            assert set(rec) == (round_keys if rec["type"] == "round" else tag_keys)

    def test_bad_lines(self):
        with pytest.raises(Exception, match="line 1"):
            transcripts.parse_transcripts('{"type": "round"}\n')
        with pytest.raises(Exception, match="line 1"):
            transcripts.parse_transcripts('not json\n')

    def test_result_schema(self, rng):
        res = election.run_election(ElectionConfig(3, 32, trusted_tallyman=True), (0, 1, 1), rng)
        doc = transcripts.result_document(res)
        assert transcripts.result_from_document(doc) == res
        with pytest.raises(Exception):
            transcripts.result_from_document({**doc, "schema": "other"})


class TestExperiments:
    def test_trial_rng_independent_of_order(self):
        a = experiments.trial_rng(5, 17).random(3)
        for i in range(17):
            experiments.trial_rng(5, i).random(10)
        assert np.array_equal(a, experiments.trial_rng(5, 17).random(3))
        assert not np.array_equal(a, experiments.trial_rng(5, 18).random(3))

    def test_unknown_kind(self):
        with pytest.raises(UsageError):
            ExperimentSpec("astrology")

    def test_bad_trials(self):
        with pytest.raises(UsageError):
            ExperimentSpec("collision", trials=0)

    def test_trials_scale(self, monkeypatch):
        monkeypatch.setenv("QVOTE_TRIALS_SCALE", "0.001")
        rep = experiments.run_experiment(ExperimentSpec("collision", {"voters": 2, "bits": 6}, 20_000, 1))
        assert rep.trials == 20
        monkeypatch.setenv("QVOTE_TRIALS_SCALE", "lots")
        with pytest.raises(UsageError):
            experiments.run_experiment(ExperimentSpec("collision", trials=10))

    def test_purification_report(self):
        rep = experiments.run_experiment(ExperimentSpec("purification", {"epsilon": 0.1, "gamma": 0.1, "voters": 4}))
        assert rep.verdict and rep.estimate >= rep.bound
        assert {"one_round_exact", "one_round_linear", "rounds", "bell_cost"} <= set(rep.details)

    def test_reproducible(self):
        spec = ExperimentSpec("forgery", {"controlled": 1, "attempted": 2}, 2000, 9)
        a, b = (experiments.run_experiment(spec, rerun_on_fail=False) for _ in range(2))
        assert a.estimate == b.estimate and a.ci_low == b.ci_low

    def test_rerun_on_fail(self, monkeypatch):
        calls = []

        def fake(params, trials, seed):
            calls.append(trials)
            return dict(kind="collision", estimate=0.5, ci_low=0.4, ci_high=0.6, bound=0.0,
                        verdict=len(calls) > 1, trials=trials, params={}, details={})

        monkeypatch.setitem(experiments.KINDS, "collision", (fake, 10))
        rep = experiments.run_experiment(ExperimentSpec("collision"))
        assert calls == [10, 100] and rep.verdict and rep.details["rerun"]

    def test_report_invariant(self):
        with pytest.raises(Exception):
            StatReport("tag", 0.5, 0.6, 0.7, 0.5, True, 1.0, 10)

    def test_formats(self, tmp_path):
        rep = experiments.run_experiment(ExperimentSpec("tag", {"copies": 2}, 500, 3))
        doc = json.loads(experiments.format_report(rep))
        assert doc["schema"] == "qvote.report/1" and doc["kind"] == "tag"
        lines = experiments.format_report(rep, "csv").splitlines()
        assert lines[0].startswith("kind,estimate") and len(lines) == 2
        with pytest.raises(UsageError):
            experiments.format_report(rep, "xml")
        with pytest.raises(OSError, match="cannot write report"):
            experiments.write_report(rep, tmp_path / "missing" / "r.json")


class TestCli:
    def run(self, *argv, capsys):
        code = cli.main(list(argv))
        out = capsys.readouterr()
        return code, out.out, out.err

    def test_run_deterministic(self, tmp_path, capsys):
        args = ["run", "--voters", "5", "--bits", "64", "--rounds", "5", "--seed", "7", "--quiet"]
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        assert self.run(*args, "--out", str(a), capsys=capsys)[0] == 0
        assert self.run(*args, "--out", str(b), capsys=capsys)[0] == 0
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "a.json.transcripts.jsonl").read_bytes() == (tmp_path / "b.json.transcripts.jsonl").read_bytes()
        doc = json.loads(a.read_text())
        assert doc["schema"] == "qvote.result/1" and doc["config"]["seed"] == 7

    def test_run_from_config_and_verify(self, tmp_path, capsys):
        conf = tmp_path / "c.json"
        conf.write_text(json.dumps({"voters": 3, "bits": 256, "rounds": 2, "votes": [0, 0, 1],
                                    "trusted_tallyman": True, "seed": 3}))
        res, tr = tmp_path / "r.json", tmp_path / "t.jsonl"
        assert self.run("run", "--config", str(conf), "--out", str(res), "--transcripts", str(tr),
                        capsys=capsys)[0] == 0
        code, out, _ = self.run("verify", "--transcript", str(tr), "--result", str(res), capsys=capsys)
        assert code == 0 and json.loads(out)["outcome_valid"] is True
        first = json.loads(tr.read_text().splitlines()[1])
        tag = f"{first['i']},{first['j']},{first['a']}"
        code, out, _ = self.run("verify", "--transcript", str(tr), "--result", str(res), "--tag", tag,
                                "--vote", str(first["decoded_vote"]), capsys=capsys)
        assert code == (0 if first["counted"] else 1)
        doc = json.loads(res.read_text())
        doc["margin"] += 1
        res.write_text(json.dumps(doc))
        assert self.run("verify", "--transcript", str(tr), "--result", str(res), capsys=capsys)[0] == 1

    def test_run_csv(self, capsys):
        code, out, _ = self.run("run", "--voters", "3", "--bits", "16", "--rounds", "2", "--trusted",
                                "--format", "csv", "--quiet", capsys=capsys)
        assert code == 0 and out.splitlines()[0].startswith("tallyman,round") and len(out.splitlines()) == 3

    def test_experiment(self, capsys):
        code, out, _ = self.run("experiment", "collision", "--voters", "2", "--bits", "6",
                                  "--trials", "20000", "--seed", "1", capsys=capsys)
        rep = json.loads(out)
        assert code == 0 and abs(rep["estimate"] - 0.6) < 0.02

    def test_experiment_param(self, capsys):
        code, out, _ = self.run("experiment", "tag", "--param", "copies=2", "--trials", "2000", "--quiet",
                                capsys=capsys)
        assert code == 0 and json.loads(out)["params"]["copies"] == 2

    @pytest.mark.parametrize("argv", [
        ["experiment", "astrology"],
        ["run", "--voters", "5"],
        ["run", "--voters", "5", "--bits", "7"],
        ["run", "--voters", "3", "--bits", "8", "--votes", "01x"],
        ["experiment", "tag", "--param", "copies"],
        ["verify", "--transcript", "t", "--result", "r", "--tag", "1,2"],
        [],
    ])
    def test_usage_errors(self, argv, capsys, tmp_path):
        if argv[:1] == ["verify"]:
            (tmp_path / "t").write_text("")
            (tmp_path / "r").write_text(json.dumps({"schema": "qvote.result/1", "avg0": 0, "avg1": 0,
                                                     "margin": 0, "avg_complaints": 0,
                                                     "outcome": "undecided", "transcript_digest": ""}))
            argv = ["verify", "--transcript", str(tmp_path / "t"), "--result", str(tmp_path / "r"), "--tag", "1,2"]
        assert self.run(*argv, capsys=capsys)[0] == 2

    def test_bad_config_file(self, tmp_path, capsys):
        conf = tmp_path / "c.json"
        conf.write_text('{"voters": 3,\n "bits": 8,\n "rounds": "two"}')
        code, _, err = self.run("run", "--config", str(conf), capsys=capsys)
        assert code == 2 and "'rounds'" in err

    def test_runtime_error(self, tmp_path, capsys):
        missing = tmp_path / "none.jsonl"
        assert self.run("verify", "--transcript", str(missing), "--result", str(missing), capsys=capsys)[0] == 3

    def test_failing_verdict_exit(self, capsys, monkeypatch):
        def failing(params, trials, seed):
            return dict(kind="tag", estimate=0.5, ci_low=0.4, ci_high=0.6, bound=0.1, verdict=False,
                        trials=trials, params={}, details={})

        monkeypatch.setitem(experiments.KINDS, "tag", (failing, 10))
        assert self.run("experiment", "tag", "--no-rerun", "--quiet", capsys=capsys)[0] == 1

    def test_console_script(self):
        out = subprocess.run([sys.executable, "-m", "qvote.harness.cli", "--help"], capture_output=True, text=True)
        assert out.returncode == 0 and "experiment" in out.stdout
