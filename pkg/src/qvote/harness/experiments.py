"""Seeded Monte Carlo experiments with interval estimates and verdicts."""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from qvote import adversary, anonnet, ballot, election, qsim
from qvote.errors import ContractViolation, QVoteError
from qvote.harness import oracles
from qvote.stats import binomial_sigma, chi2_uniform_pvalue, mean_interval, wilson_interval

logger = logging.getLogger(__name__)

REPORT_SCHEMA = "qvote.report/1"
SIGNIFICANCE = 0.001


class UsageError(QVoteError, ValueError):
    """Unknown experiment kind or bad parameters."""


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    params: dict = field(default_factory=dict)
    trials: int | None = None
    seed: int = 0
    out_path: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"unknown experiment kind {self.kind!r}; choose from {sorted(KINDS)}")
        if self.trials is not None and self.trials < 1:
            raise UsageError("trials must be >= 1")


@dataclass(frozen=True)
class StatReport:
    kind: str
    estimate: float
    ci_low: float
    ci_high: float
    bound: float
    verdict: bool
    runtime_ms: float
    trials: int
    params: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.ci_low <= self.estimate <= self.ci_high:
            raise ContractViolation("interval does not contain the estimate")

    def to_dict(self) -> dict:
        return {"schema": REPORT_SCHEMA, **asdict(self)}


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for trial ``index``: reproducible without running earlier trials."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def trials_scale() -> float:
    raw = os.environ.get("QVOTE_TRIALS_SCALE", "1")
    try:
        scale = float(raw)
    except ValueError:
        raise UsageError(f"QVOTE_TRIALS_SCALE must be a number, got {raw!r}") from None
    if scale <= 0:
        raise UsageError("QVOTE_TRIALS_SCALE must be positive")
    return scale


def _frequency(kind, hits, trials, bound, verdict, params, details=None) -> dict:
    lo, hi = wilson_interval(hits, trials)
    return dict(kind=kind, estimate=hits / trials, ci_low=min(lo, hits / trials),
                ci_high=max(hi, hits / trials), bound=float(bound), verdict=bool(verdict),
                trials=trials, params=params, details=details or {})


def _within_3sigma(hits: int, trials: int, p: float) -> bool:
    return abs(hits / trials - p) <= 3 * binomial_sigma(p, trials) + 1e-12


# --------------------------------------------------------------------------
# kinds


def collision(params: dict, trials: int, seed: int) -> dict:
    """Rate of rounds where two honest voters' measured edges share a vertex."""
    N, n = int(params.get("voters", 2)), int(params.get("bits", 6))
    hits = 0
    for t in range(trials):
        rng = trial_rng(seed, t)
        x = ballot.RandomString.random(n, rng)
        state = ballot.encode_ballot(x)
        verts = []
        for _ in range(N):
            e, _ = ballot.measure_ballot(state, ballot.random_matching(n, rng), rng)
            verts += [e.i, e.j]
        hits += len(set(verts)) < len(verts)
    params = {"voters": N, "bits": n}
    if N == 2 and n <= 12:
        exact = oracles.brute_force_collision(N, n)
        return _frequency("collision", hits, trials, float(exact), _within_3sigma(hits, trials, float(exact)),
                          params, {"exact": str(exact), "comparison": "equal within 3 sigma"})
    bound = oracles.collision_bound(N, n)
    return _frequency("collision", hits, trials, bound, hits / trials <= bound, params,
                      {"comparison": "at most bound"})


def queue(params: dict, trials: int, seed: int) -> dict:
    """Secure-sum rounds needed to build the anonymous queue."""
    N = int(params.get("voters", 20))
    cfg = anonnet.RingConfig(N)
    rounds = np.empty(trials)
    first = 0
    for t in range(trials):
        run = anonnet.build_queue_run(cfg, trial_rng(seed, t))
        rounds[t] = run.rounds
        first += run.first_slot_rounds
    expected = anonnet.expected_queue_rounds(N)
    p1 = anonnet.queue_slot_probability(N, 1)
    mean, lo, hi = mean_interval(rounds)
    mean_ok = abs(mean - expected) <= 0.1 * expected
    first_ok = _within_3sigma(trials, first, p1)
    return dict(kind="queue", estimate=mean, ci_low=lo, ci_high=hi, bound=expected,
                verdict=bool(mean_ok and first_ok), trials=trials, params={"voters": N},
                details={"first_slot_success": trials / first, "first_slot_expected": p1,
                         "first_slot_rounds": first, "mean_within_10pct": bool(mean_ok),
                         "first_slot_within_3sigma": bool(first_ok)})


def noise(params: dict, trials: int, seed: int) -> dict:
    """Probability that one voter's measured parity is right after bit-flip noise."""
    n, p = int(params.get("bits", 8)), float(params.get("p", 0.05))
    q = n.bit_length() - 1
    if 1 << q != n:
        raise UsageError("noise experiment needs bits a power of two")
    hits = 0
    for t in range(trials):
        rng = trial_rng(seed, t)
        x = ballot.RandomString.random(n, rng)
        state = qsim.bitflip_channel(ballot.encode_ballot(x, padded=True), qsim.NoiseParams(p, q), rng)
        out = ballot.measure_ballot(state, ballot.random_matching(n, rng), rng)
        hits += not isinstance(out, ballot.Corrupted) and out[1] == x.parity(out[0].i, out[0].j)
    exact = oracles.noise_oracle(n, p)
    ok = hits == trials if exact == 1.0 else _within_3sigma(hits, trials, exact)
    return _frequency("noise", hits, trials, exact, ok, {"bits": n, "p": p})


def forgery(params: dict, trials: int, seed: int) -> dict:
    """Frequency with which every forged vote decodes to the forger's target."""
    k = int(params.get("controlled", 1))
    attempted = int(params.get("attempted", 2))
    n = int(params.get("bits", 64))
    target = int(params.get("target", 1))
    spec = adversary.ForgerSpec(tuple(range(k)), attempted, target)
    hits = 0
    for t in range(trials):
        rng = trial_rng(seed, t)
        x = ballot.RandomString.random(n, rng)
        state = ballot.encode_ballot(x)
        held = [ballot.measure_ballot(state, ballot.random_matching(n, rng), rng) for _ in range(k)]
        tags = adversary.forge(spec, held, rng, n=n)
        hits += all(ballot.decode_vote(tag, x) == target for tag in tags)
    bound = 0.5 ** (attempted - k)
    return _frequency("forgery", hits, trials, bound, _within_3sigma(hits, trials, bound),
                      {"controlled": k, "attempted": attempted, "bits": n, "target": target})


def repetition_setup(params: dict):
    honest = int(params.get("voters", 15))
    margin = int(params.get("margin", 3))
    if (honest + margin) % 2 or margin > honest:
        raise UsageError("voters and margin must have equal parity with margin <= voters")
    zeros = (honest + margin) // 2
    target = 1
    votes = (0,) * zeros + (1,) * (honest - zeros) + (target,)
    forgeries = int(params.get("forgeries", honest))
    spec = adversary.ForgerSpec((honest,), 1 + forgeries, target)
    cfg = election.ElectionConfig(
        honest + 1, int(params.get("bits", 16384)), rounds=int(params.get("rounds", honest)),
        trusted_tallyman=bool(params.get("trusted", True)), adversary=spec)
    return cfg, votes


def repetition(params: dict, trials: int, seed: int) -> dict:
    """Fraction of elections with a forger that still elect the true majority."""
    cfg, votes = repetition_setup(params)
    truth = election.majority(votes)
    hits = undecided = 0
    margins = np.empty(trials)
    for t in range(trials):
        res = election.run_election(cfg, votes, trial_rng(seed, t))
        hits += res.outcome == truth
        undecided += res.outcome == election.UNDECIDED
        margins[t] = res.margin
    true_margin = votes.count(0) - votes.count(1)
    shift = np.abs(margins - true_margin)
    p = {"voters": cfg.voters - 1, "margin": int(params.get("margin", 3)), "bits": cfg.bits,
         "rounds": cfg.rounds, "forgeries": cfg.adversary.extra_votes}
    return _frequency("repetition", hits, trials, 0.95, hits / trials >= 0.95, p,
                      {"undecided": undecided, "mean_margin": float(margins.mean()),
                       "shift_below_one_vote": float(np.mean(shift < 1)),
                       "true_margin_with_forger_vote": true_margin})


def anonymity(params: dict, trials: int, seed: int) -> dict:
    """Distinguishing advantage of the built-in strategies, plus announcement uniformity."""
    N, n = int(params.get("voters", 8)), int(params.get("bits", 64))
    names = params.get("strategy", "all")
    names = sorted(adversary.BUILTIN_STRATEGIES) if names == "all" else [names]
    for name in names:
        if name not in adversary.BUILTIN_STRATEGIES:
            raise UsageError(f"unknown strategy {name!r}")
    base = tuple(k % 2 for k in range(N))
    honest = tuple(range(N))
    perm = tuple((k + 1) % N for k in range(N))
    cfg = election.ElectionConfig(N, n, trusted_tallyman=bool(params.get("trusted", True)))
    game = adversary.AnonymityGame(honest, perm, base,
                                   [adversary.BUILTIN_STRATEGIES[s] for s in names], max(2, trials))
    run = adversary.play_anonymity_game_full(game, cfg, np.random.default_rng(seed))
    p_queue = chi2_uniform_pvalue(run.queue_announcements)
    p_bits = chi2_uniform_pvalue(run.bit_announcements)
    worst = max(run.results, key=lambda r: abs(r.advantage))
    contains = all(r.ci_low <= 0 <= r.ci_high for r in run.results)
    excludes = all(-0.02 < r.ci_low and r.ci_high < 0.02 for r in run.results)
    uniform = p_queue >= SIGNIFICANCE and p_bits >= SIGNIFICANCE
    return dict(kind="anonymity", estimate=worst.advantage, ci_low=worst.ci_low, ci_high=worst.ci_high,
                bound=0.0, verdict=bool(contains and excludes and uniform), trials=worst.trials,
                params={"voters": N, "bits": n, "strategy": params.get("strategy", "all")},
                details={"strategies": {names[i]: asdict(r) for i, r in enumerate(run.results)},
                         "queue_announcement_pvalue": p_queue, "bit_announcement_pvalue": p_bits,
                         "intervals_contain_zero": contains, "intervals_exclude_0.02": excludes})


def purification(params: dict, trials: int, seed: int) -> dict:
    """Rounds of purification needed for the anonymity target (deterministic)."""
    eps, gamma = float(params.get("epsilon", 0.1)), float(params.get("gamma", 0.1))
    N = int(params.get("voters", 4))
    plan = anonnet.purification_plan(eps, gamma, N, int(params.get("max_rounds", 200)))
    return dict(kind="purification", estimate=plan.fidelity, ci_low=plan.fidelity, ci_high=plan.fidelity,
                bound=plan.target, verdict=plan.fidelity >= plan.target, trials=1,
                params={"epsilon": eps, "gamma": gamma, "voters": N},
                details={"rounds": plan.rounds, "bell_cost": plan.bell_cost,
                         "exact_fidelity": plan.exact_fidelity,
                         "one_round_exact": plan.one_round_exact,
                         "one_round_linear": plan.one_round_linear,
                         "one_round_p_success": plan.one_round_p_success})


def tag(params: dict, trials: int, seed: int) -> dict:
    """Pass rate of a ballotless forger against tag verification with extra parities."""
    copies = int(params.get("copies", 3))
    n = int(params.get("bits", 64))
    target = int(params.get("target", 1))
    if 2 * copies > n:
        raise UsageError("not enough labels for disjoint tag edges")
    passed = joint = 0
    for t in range(trials):
        rng = trial_rng(seed, t)
        x = ballot.RandomString.random(n, rng)
        verts = rng.choice(n, size=2 * copies, replace=False).reshape(-1, 2)
        edges = [ballot.Edge.of(a, b) for a, b in verts]
        guesses = rng.integers(0, 2, size=copies)
        forged = ballot.make_tag(edges[0], int(guesses[0]), target,
                                 [(e, int(g)) for e, g in zip(edges[1:], guesses[1:])])
        ok = ballot.verify_tag(forged, x)
        passed += ok
        joint += ok and ballot.decode_vote(forged, x) == target
    bound = 0.5 ** (copies - 1)
    joint_bound = 0.5**copies
    return _frequency("tag", passed, trials, bound, _within_3sigma(passed, trials, bound),
                      {"copies": copies, "bits": n, "target": target},
                      {"pass_and_target": joint / trials, "pass_and_target_expected": joint_bound,
                       "pass_and_target_within_3sigma": _within_3sigma(joint, trials, joint_bound)})


KINDS: dict[str, tuple[Callable[[dict, int, int], dict], int]] = {
    "collision": (collision, 100_000),
    "queue": (queue, 1_000),
    "noise": (noise, 100_000),
    "forgery": (forgery, 100_000),
    "repetition": (repetition, 1_000),
    "anonymity": (anonymity, 100_000),
    "purification": (purification, 1),
    "tag": (tag, 100_000),
}


def run_experiment(spec: ExperimentSpec, rerun_on_fail: bool = True) -> StatReport:
    """Run ``spec.kind`` and persist the report to ``spec.out_path`` when set.

    A failing verdict is re-run once with ten times the trials and that
    second report is returned.
    """
    fn, default_trials = KINDS[spec.kind]
    trials = spec.trials if spec.trials is not None else default_trials
    trials = max(1, round(trials * trials_scale()))
    report = _timed(fn, spec, trials)
    if not report.verdict and rerun_on_fail and spec.kind != "purification":
        logger.info("%s failed with %d trials; re-running with %d", spec.kind, trials, 10 * trials)
        report = _timed(fn, spec, 10 * trials)
        report = replace(report, details={**report.details, "rerun": True})
    if spec.out_path:
        write_report(report, spec.out_path)
    return report


def _timed(fn, spec: ExperimentSpec, trials: int) -> StatReport:
    start = time.perf_counter()
    fields = fn(spec.params, trials, spec.seed)
    return StatReport(runtime_ms=(time.perf_counter() - start) * 1e3, **fields)


def write_report(report: StatReport, path: str | Path, fmt: str = "json") -> None:
    try:
        Path(path).write_text(format_report(report, fmt))
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write report: {exc.strerror}", str(path)) from None


def format_report(report: StatReport, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), sort_keys=True, indent=2, default=_jsonable) + "\n"
    if fmt == "csv":
        cols = ["kind", "estimate", "ci_low", "ci_high", "bound", "verdict", "runtime_ms", "trials"]
        row = [str(getattr(report, c)) for c in cols]
        return ",".join(cols) + "\n" + ",".join(row) + "\n"
    raise UsageError(f"unknown format {fmt!r}")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and math.isnan(obj):
        return None
    raise TypeError(f"not serializable: {type(obj).__name__}")
