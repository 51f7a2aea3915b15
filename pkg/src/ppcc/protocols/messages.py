"""Stage messages and their canonical text encoding.

Payload integers are written as lowercase hex strings; the envelope is
compact JSON with sorted keys, so equal messages always serialize to equal
bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

OPERATOR = "operator"

# kinds of payload; the operator may only ever receive the first four
CIPHERTEXT = "ciphertext"
INDICATOR = "indicator"
MASKED = "masked"
PARTIAL = "partial"
MASK = "mask"
PARTIALS = "partials"
TDEC_REQUEST = "tdec_request"

OPERATOR_INBOUND = frozenset({CIPHERTEXT, INDICATOR, MASKED, PARTIAL})
KINDS = OPERATOR_INBOUND | {MASK, PARTIALS, TDEC_REQUEST}


def user_id(i: int) -> str:
    return f"u{i}"


def user_index(party: str) -> int:
    if not party.startswith("u"):
        raise ValueError(f"not a user id: {party}")
    return int(party[1:])


def _enc(v: Any) -> Any:
    if isinstance(v, bool):
        return format(int(v), "x")
    if isinstance(v, int):
        if v < 0:
            raise ValueError("payload integers must be non-negative")
        return format(v, "x")
    if isinstance(v, dict):
        return {k: _enc(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_enc(x) for x in v]
    raise TypeError(f"unsupported payload value {type(v).__name__}")


def _dec(v: Any) -> Any:
    if isinstance(v, str):
        return int(v, 16)
    if isinstance(v, dict):
        return {k: _dec(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_dec(x) for x in v]
    raise TypeError(f"unexpected payload node {v!r}")


@dataclass(frozen=True)
class StageMessage:
    protocol: str
    stage: str
    slot: int | None
    sender: str
    receiver: str
    kind: str
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown message kind {self.kind!r}")

    def encode(self) -> str:
        return json.dumps(
            {
                "protocol": self.protocol,
                "stage": self.stage,
                "slot": self.slot,
                "sender": self.sender,
                "receiver": self.receiver,
                "kind": self.kind,
                "payload": _enc(self.payload),
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    def to_bytes(self) -> bytes:
        return self.encode().encode("utf-8")

    @classmethod
    def decode(cls, text: str | bytes) -> StageMessage:
        if isinstance(text, bytes):
            text = text.decode("utf-8")
        d = json.loads(text)
        return cls(
            protocol=d["protocol"],
            stage=d["stage"],
            slot=d["slot"],
            sender=d["sender"],
            receiver=d["receiver"],
            kind=d["kind"],
            payload=_dec(d["payload"]),
        )
