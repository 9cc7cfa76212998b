"""Election config documents: JSON with a versioned schema field."""

from __future__ import annotations

import json
from pathlib import Path

from qvote.adversary import AdversarySpec
from qvote.election import ElectionConfig
from qvote.errors import ContractViolation

SCHEMA = "qvote.election/1"

_FIELDS = {
    "voters": int,
    "bits": int,
    "rounds": int,
    "tag_copies": int,
    "tallymen": int,
    "trusted_tallyman": bool,
    "ghz_fidelity": (int, float),
    "seed": int,
}


class ConfigError(ContractViolation):
    """Malformed config document; the message names the offending field or line."""


def default_votes(voters: int) -> tuple[int, ...]:
    """Majority 0: the first ``ceil(N/2)`` voters vote 0, the rest 1."""
    zeros = (voters + 1) // 2
    return (0,) * zeros + (1,) * (voters - zeros)


def config_to_dict(cfg: ElectionConfig, votes=None) -> dict:
    doc = {
        "schema": SCHEMA,
        "voters": cfg.voters,
        "bits": cfg.bits,
        "rounds": cfg.rounds,
        "tag_copies": cfg.tag_copies,
        "tallymen": cfg.tallymen,
        "trusted_tallyman": cfg.trusted_tallyman,
        "noise": {"p": cfg.noise},
        "ghz_fidelity": cfg.ghz_fidelity,
        "adversary": cfg.adversary.to_dict() if cfg.adversary else None,
        "seed": cfg.seed,
    }
    if votes is not None:
        doc["votes"] = list(votes)
    return doc


def config_from_dict(doc: dict) -> tuple[ElectionConfig, tuple[int, ...]]:
    """Parse a config document into ``(config, votes)``.

    Raises:
        ConfigError: naming the first bad field.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    schema = doc.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ConfigError(f"field 'schema': unsupported version {schema!r}, expected {SCHEMA!r}")
    known = set(_FIELDS) | {"schema", "noise", "adversary", "votes"}
    for key in doc:
        if key not in known:
            raise ConfigError(f"field {key!r}: unknown field")
    kwargs = {}
    for key, typ in _FIELDS.items():
        if key in doc:
            value = doc[key]
            if isinstance(value, bool) and typ is not bool or not isinstance(value, typ):
                raise ConfigError(f"field {key!r}: expected {_type_name(typ)}, got {value!r}")
            kwargs[key] = value
    for key in ("voters", "bits"):
        if key not in kwargs:
            raise ConfigError(f"field {key!r}: required")
    noise = doc.get("noise")
    if noise is not None:
        if not isinstance(noise, dict) or not isinstance(noise.get("p"), (int, float)):
            raise ConfigError("field 'noise': expected an object {\"p\": probability}")
        kwargs["noise"] = float(noise["p"])
    if doc.get("adversary") is not None:
        try:
            kwargs["adversary"] = AdversarySpec.from_dict(doc["adversary"])
        except ContractViolation as exc:
            raise ConfigError(f"field 'adversary': {exc}") from None
    try:
        cfg = ElectionConfig(**kwargs)
    except ContractViolation as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    votes = doc.get("votes")
    if votes is None:
        votes = default_votes(cfg.voters)
    elif not isinstance(votes, list) or len(votes) != cfg.voters or any(v not in (0, 1) for v in votes):
        raise ConfigError(f"field 'votes': expected {cfg.voters} bits")
    return cfg, tuple(int(v) for v in votes)


def _type_name(typ) -> str:
    if isinstance(typ, tuple):
        return "number"
    return {int: "integer", bool: "boolean"}[typ]


def dumps(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def parse_config_text(text: str) -> tuple[ElectionConfig, tuple[int, ...]]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return config_from_dict(doc)


def load_config(path: str | Path) -> tuple[ElectionConfig, tuple[int, ...]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text)
