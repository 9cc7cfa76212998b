"""Command-line front end: ``run``, ``experiment <kind>`` and ``verify``.

Exit status: 0 success or passing verdict, 1 failing verdict or rejected
audit, 2 usage or config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from qvote import election
from qvote.ballot import Edge, VoteTag
from qvote.errors import ContractViolation, QVoteError
from qvote.harness import config as cfgio
from qvote.harness import experiments, transcripts

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("qvote")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--out", default=argparse.SUPPRESS, help="output file (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default=argparse.SUPPRESS)
    p.add_argument("--trials", type=int, default=argparse.SUPPRESS)
    p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="qvote", parents=[common],
                                     description="Quantum voting protocol simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run a full election")
    run.add_argument("--config", help="election config document (JSON)")
    run.add_argument("--voters", type=int)
    run.add_argument("--bits", type=int)
    run.add_argument("--rounds", type=int)
    run.add_argument("--tag-copies", type=int)
    run.add_argument("--tallymen", type=int)
    run.add_argument("--trusted", action="store_true", default=None, help="direct ballot delivery")
    run.add_argument("--noise", type=float, help="bit-flip probability per ballot qubit")
    run.add_argument("--votes", help="vote bits, e.g. 00011")
    run.add_argument("--transcripts", help="transcript file (default <out>.transcripts.jsonl)")

    exp = sub.add_parser("experiment", parents=[common], help="run a statistical experiment")
    exp.add_argument("kind", choices=sorted(experiments.KINDS))
    exp.add_argument("--voters", type=int)
    exp.add_argument("--bits", type=int)
    exp.add_argument("--rounds", type=int)
    exp.add_argument("--p", type=float, help="bit-flip probability (noise)")
    exp.add_argument("--epsilon", type=float)
    exp.add_argument("--gamma", type=float)
    exp.add_argument("--copies", type=int, help="tag copies (tag)")
    exp.add_argument("--controlled", type=int, help="ballots held by the forger")
    exp.add_argument("--attempted", type=int, help="votes output by the forger")
    exp.add_argument("--margin", type=int)
    exp.add_argument("--strategy")
    exp.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    exp.add_argument("--no-rerun", action="store_true", help="report the first verdict")

    ver = sub.add_parser("verify", parents=[common], help="audit a transcript against a result")
    ver.add_argument("--transcript", required=True)
    ver.add_argument("--result", required=True)
    ver.add_argument("--tag", help="own tag as i,j,a to check it was counted")
    ver.add_argument("--vote", type=int, choices=(0, 1))
    return parser


def _opt(args, name, default=None):
    return getattr(args, name, default)


def _emit(text: str, args) -> None:
    out = _opt(args, "out")
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    if args.config:
        cfg, votes = cfgio.load_config(args.config)
        doc = cfgio.config_to_dict(cfg, votes)
    else:
        if args.voters is None or args.bits is None:
            raise cfgio.ConfigError("run needs --config or both --voters and --bits")
        doc = {"voters": args.voters, "bits": args.bits}
    overrides = {"voters": args.voters, "bits": args.bits, "rounds": args.rounds,
                 "tag_copies": args.tag_copies, "tallymen": args.tallymen,
                 "trusted_tallyman": args.trusted, "seed": _opt(args, "seed")}
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if args.noise is not None:
        doc["noise"] = {"p": args.noise}
    if args.votes is not None:
        if any(c not in "01" for c in args.votes):
            raise cfgio.ConfigError("--votes must be a string of 0/1")
        doc["votes"] = [int(c) for c in args.votes]
    cfg, votes = cfgio.config_from_dict(doc)
    run = election.run_election_full(cfg, votes, np.random.default_rng(cfg.seed))
    result_doc = transcripts.result_document(run.result, cfgio.config_to_dict(cfg, votes))
    if _opt(args, "format", "json") == "csv":
        _emit(_rounds_csv(run), args)
    else:
        _emit(cfgio.dumps(result_doc), args)
    tpath = args.transcripts or (f"{args.out}.transcripts.jsonl" if _opt(args, "out") else None)
    if tpath:
        transcripts.write_transcripts(tpath, run.transcripts)
    if not _opt(args, "quiet", False):
        log.info("outcome: %s (margin %.3f, complaints %.3f)", run.result.outcome,
                 run.result.margin, run.result.avg_complaints)
    return EXIT_OK


def _rounds_csv(run: election.ElectionRun) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tallyman", "round", "tags", "counted_zeros", "counted_ones", "complaints", "x"])
    for k, rounds in enumerate(run.transcripts):
        for t in rounds:
            zeros = sum(1 for c, v in zip(t.counted, t.decoded_votes) if c and not v)
            ones = sum(1 for c, v in zip(t.counted, t.decoded_votes) if c and v)
            w.writerow([k, t.round_index, len(t.tags), zeros, ones, t.complaints, t.x.to_hex()])
    return buf.getvalue()


_PARAM_FLAGS = ("voters", "bits", "rounds", "p", "epsilon", "gamma", "copies", "controlled",
                "attempted", "margin", "strategy")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def cmd_experiment(args) -> int:
    params = {k: getattr(args, k) for k in _PARAM_FLAGS if getattr(args, k) is not None}
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep:
            raise experiments.UsageError(f"--param expects KEY=VALUE, got {item!r}")
        params[key] = _parse_value(value)
    spec = experiments.ExperimentSpec(args.kind, params, _opt(args, "trials"), _opt(args, "seed", 0))
    report = experiments.run_experiment(spec, rerun_on_fail=not args.no_rerun)
    _emit(experiments.format_report(report, _opt(args, "format", "json")), args)
    if not _opt(args, "quiet", False):
        log.info("%s: estimate %.6g [%.6g, %.6g] vs %.6g -> %s", report.kind, report.estimate,
                 report.ci_low, report.ci_high, report.bound, "pass" if report.verdict else "FAIL")
    return EXIT_OK if report.verdict else EXIT_FAIL


def cmd_verify(args) -> int:
    per_tallyman = transcripts.read_transcripts(args.transcript)
    result = transcripts.result_from_document(json.loads(Path(args.result).read_text()))
    my_tag = None
    if args.tag:
        try:
            i, j, a = (int(v) for v in args.tag.split(","))
        except ValueError:
            raise experiments.UsageError("--tag expects i,j,a") from None
        my_tag = VoteTag(Edge.of(i, j), a)
    if not per_tallyman:
        raise ContractViolation("transcript file has no rounds")
    counted, valid = election.verify_transcript(result, per_tallyman, my_tag,
                                                args.vote if args.vote is not None else 0)
    if my_tag is None:
        counted = True
    report = {"outcome_valid": valid, "vote_counted": counted if my_tag is not None else None}
    _emit(json.dumps(report, sort_keys=True) + "\n", args)
    return EXIT_OK if valid and counted else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if _opt(args, "quiet", False) else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    handler = {"run": cmd_run, "experiment": cmd_experiment, "verify": cmd_verify}[args.command]
    try:
        return handler(args)
    except (cfgio.ConfigError, experiments.UsageError) as exc:
        print(f"qvote: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QVoteError, OSError, ValueError) as exc:
        print(f"qvote: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
