"""Message delivery between parties with exact byte accounting.

The default :class:`Network` is an in-process, single-threaded mailbox
system.  Every message is serialized on send, the serialized bytes are what
gets ledgered and queued, and the receiver decodes them again, so the
accounting always reflects real wire sizes.  :func:`send_frame` and
:func:`recv_frame` carry the same bytes over a stream socket.
"""

from __future__ import annotations

import csv
import io
import socket
import struct
import threading
import time
from collections import defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from ppcc.protocols.messages import StageMessage

LEDGER_COLUMNS = ("sender", "receiver", "protocol", "stage", "messages", "bytes")


class UnknownEndpoint(KeyError):
    pass


@dataclass(frozen=True)
class Receipt:
    seq: int
    size: int


@dataclass
class Endpoint:
    party: str
    inbox: deque = field(default_factory=deque)


class TrafficLedger:
    def __init__(self):
        self._rows: dict[tuple[str, str, str, str], list[int]] = defaultdict(lambda: [0, 0])
        self._lock = threading.Lock()

    def record(self, msg: StageMessage, size: int) -> None:
        with self._lock:
            row = self._rows[(msg.sender, msg.receiver, msg.protocol, msg.stage)]
            row[0] += 1
            row[1] += size

    def rows(self) -> list[tuple[str, str, str, str, int, int]]:
        return [(*k, v[0], v[1]) for k, v in sorted(self._rows.items())]

    @property
    def total_bytes(self) -> int:
        return sum(v[1] for v in self._rows.values())

    @property
    def total_messages(self) -> int:
        return sum(v[0] for v in self._rows.values())

    def count(self, sender: str | None = None, receiver: str | None = None, stages: Iterable[str] | None = None) -> int:
        stages = set(stages) if stages is not None else None
        return sum(
            v[0]
            for (s, r, _, st), v in self._rows.items()
            if (sender is None or s == sender)
            and (receiver is None or r == receiver)
            and (stages is None or st in stages)
        )

    def bytes_between(self, a: str, b: str, stages: Iterable[str] | None = None) -> int:
        stages = set(stages) if stages is not None else None
        return sum(
            v[1]
            for (s, r, _, st), v in self._rows.items()
            if {s, r} == {a, b} and (stages is None or st in stages)
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LEDGER_COLUMNS)
        w.writerows(self.rows())
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())


class Network:
    """In-process transport: FIFO mailboxes, serialized payloads, full trace."""

    def __init__(self, parties: Iterable[str] = ()):
        self.endpoints: dict[str, Endpoint] = {}
        self.ledger = TrafficLedger()
        self.trace: list[bytes] = []
        self.sent = 0
        self.received = 0
        for p in parties:
            self.register(p)

    def register(self, party: str) -> Endpoint:
        ep = self.endpoints.setdefault(party, Endpoint(party))
        return ep

    def send(self, msg: StageMessage) -> Receipt:
        for p in (msg.sender, msg.receiver):
            if p not in self.endpoints:
                raise UnknownEndpoint(p)
        data = msg.to_bytes()
        self.ledger.record(msg, len(data))
        self.trace.append(data)
        self.endpoints[msg.receiver].inbox.append((msg.kind, data))
        self.sent += 1
        return Receipt(self.sent, len(data))

    def send_all(self, msgs: Iterable[StageMessage]) -> None:
        for m in msgs:
            self.send(m)

    def receive(self, party: str, kinds: Iterable[str] | None = None) -> list[StageMessage]:
        """Drain the party's inbox (optionally only some kinds), in arrival order."""
        if party not in self.endpoints:
            raise UnknownEndpoint(party)
        box = self.endpoints[party].inbox
        kinds = set(kinds) if kinds is not None else None
        taken, kept = [], deque()
        while box:
            kind, data = box.popleft()
            if kinds is None or kind in kinds:
                taken.append(StageMessage.decode(data))
            else:
                kept.append((kind, data))
        box.extend(kept)
        self.received += len(taken)
        return taken

    def pending(self) -> int:
        return sum(len(ep.inbox) for ep in self.endpoints.values())

    def trace_text(self) -> str:
        return b"\n".join(self.trace).decode("utf-8") + "\n"


# --------------------------------------------------------------------------- timing


class StageTimer:
    """Per-party, per-stage CPU time."""

    def __init__(self, clock: Callable[[], float] = time.process_time):
        self.clock = clock
        self.times: dict[tuple[str, str], float] = defaultdict(float)

    def call(self, party: str, stage: str, fn, *args, **kwargs):
        t0 = self.clock()
        try:
            return fn(*args, **kwargs)
        finally:
            self.times[(party, stage)] += self.clock() - t0

    def operator_times(self) -> dict[str, float]:
        out: dict[str, float] = defaultdict(float)
        for (party, stage), t in self.times.items():
            if party == "operator":
                out[stage] += t
        return dict(out)

    def user_times(self) -> dict[str, float]:
        """Stage times averaged over users."""
        totals: dict[str, float] = defaultdict(float)
        users: dict[str, set] = defaultdict(set)
        for (party, stage), t in self.times.items():
            if party != "operator":
                totals[stage] += t
                users[stage].add(party)
        return {s: totals[s] / len(users[s]) for s in totals}

    def by_major_stage(self) -> dict[str, float]:
        """Collapse ``s1.*``/``s2.*``/``s3.*`` sub-steps into role-level stage totals."""
        out: dict[str, float] = defaultdict(float)
        for role, times in (("operator", self.operator_times()), ("user", self.user_times())):
            for stage, t in times.items():
                out[f"{role}_stage{stage[1]}"] += t
        return dict(out)


# --------------------------------------------------------------------------- socket framing

_LEN = struct.Struct(">I")


def encode_frame(msg: StageMessage) -> bytes:
    data = msg.to_bytes()
    return _LEN.pack(len(data)) + data


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("connection closed mid-frame")
        buf.extend(chunk)
    return bytes(buf)


def send_frame(sock: socket.socket, msg: StageMessage) -> int:
    frame = encode_frame(msg)
    sock.sendall(frame)
    return len(frame)


def recv_frame(sock: socket.socket) -> StageMessage:
    (n,) = _LEN.unpack(_recv_exact(sock, _LEN.size))
    return StageMessage.decode(_recv_exact(sock, n))


# --------------------------------------------------------------------------- driver


@dataclass
class RunResult:
    config: object
    operator_output: object
    user_results: list
    ledger: TrafficLedger
    timing: StageTimer
    trace: list[bytes]
    operator: object = None
    users: list = field(default_factory=list)


def run_to_completion(config, keys, inputs, paid: dict[int, bool] | None = None) -> RunResult:
    """Drive one protocol run over a fresh in-process network."""
    from ppcc.protocols import runner

    return runner.run(config, keys, inputs, paid=paid)
