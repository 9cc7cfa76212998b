"""Line-oriented transcript files and result documents."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

from qvote.ballot import Edge, RandomString, VoteTag
from qvote.election import ElectionResult, RoundTranscript
from qvote.errors import ContractViolation

RESULT_SCHEMA = "qvote.result/1"


def transcript_lines(per_tallyman: Sequence[Sequence[RoundTranscript]]) -> Iterable[str]:
    """One JSON record per round followed by one per tag, in broadcast order."""
    for k, rounds in enumerate(per_tallyman):
        for t in rounds:
            pub = t.public_dict()
            yield _line({"type": "round", "tallyman": k, "round": t.round_index, "n": t.x.n,
                         "x": pub["x"], "complaints": t.complaints, "tags": len(t.tags)})
            for rec in pub["tags"]:
                yield _line({"type": "tag", "tallyman": k, "round": t.round_index, **rec})


def _line(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n"


def write_transcripts(path: str | Path, per_tallyman) -> None:
    Path(path).write_text("".join(transcript_lines(per_tallyman)))


def parse_transcripts(text: str) -> tuple[tuple[RoundTranscript, ...], ...]:
    """Inverse of :func:`transcript_lines`; private fields come back empty."""
    rounds: dict[tuple[int, int], dict] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            key = (int(rec["tallyman"]), int(rec["round"]))
            if rec["type"] == "round":
                rounds[key] = {"x": RandomString.from_hex(rec["x"], int(rec["n"])),
                               "complaints": int(rec["complaints"]), "tags": []}
            elif rec["type"] == "tag":
                extras = tuple((Edge(int(i), int(j)), int(p)) for i, j, p in rec["extras"])
                tag = VoteTag(Edge(int(rec["i"]), int(rec["j"])), int(rec["a"]), extras)
                rounds[key]["tags"].append((int(rec["position"]), tag, bool(rec["counted"]),
                                            int(rec["decoded_vote"])))
            else:
                raise ContractViolation(f"unknown record type {rec['type']!r}")
        except (KeyError, ValueError, TypeError, ContractViolation) as exc:
            raise ContractViolation(f"transcript line {lineno}: {exc}") from None
    out: dict[int, list[RoundTranscript]] = {}
    for (k, r), d in sorted(rounds.items()):
        tags = sorted(d["tags"], key=lambda item: item[0])
        if [p for p, *_ in tags] != list(range(len(tags))):
            raise ContractViolation(f"tallyman {k} round {r}: tag positions are not contiguous")
        out.setdefault(k, []).append(RoundTranscript(
            r, tuple(t for _, t, _, _ in tags), d["x"], tuple(c for *_, c, _ in tags),
            tuple(v for *_, v in tags), d["complaints"]))
    return tuple(tuple(out[k]) for k in sorted(out))


def read_transcripts(path: str | Path):
    return parse_transcripts(Path(path).read_text())


def result_document(result: ElectionResult, config_doc: dict | None = None) -> dict:
    doc = {"schema": RESULT_SCHEMA, **result.to_dict()}
    if config_doc is not None:
        doc["config"] = config_doc
    return doc


def result_from_document(doc: dict) -> ElectionResult:
    if doc.get("schema") != RESULT_SCHEMA:
        raise ContractViolation(f"unsupported result schema {doc.get('schema')!r}")
    return ElectionResult.from_dict(doc)
