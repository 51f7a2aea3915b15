"""Shared builders for protocol tests."""

import random

from ppcc.eval import experiments as X
from ppcc.protocols.parties import ProtocolConfig
from ppcc.protocols.runner import run
from ppcc.protocols.schedules import DemandSchedule, UsageSchedule


def usage(rows):
    return [UsageSchedule(i, row) for i, row in enumerate(rows, start=1)]


def demands(rows):
    return [DemandSchedule(i, row) for i, row in enumerate(rows, start=1)]


def run_facility(keys, rows, protocol="ufs", seed=0, paid=None, **kw):
    cfg = ProtocolConfig(protocol=protocol, users=len(rows), slots=len(rows[0]), seed=seed, **kw)
    return run(cfg, keys, usage(rows), paid=paid)


def run_service(keys, rows, seed=0, **kw):
    cfg = ProtocolConfig(protocol="css", users=len(rows), slots=len(rows[0]), seed=seed, **kw)
    return run(cfg, keys, demands(rows))


def random_bits(users, slots, seed):
    return X.random_usage(users, slots, random.Random(seed))


def random_demand_rows(users, slots, seed):
    return X.random_demands(users, slots, random.Random(seed))


# one line per acceptance criterion, echoed in the pytest terminal summary
ACCEPTANCE_LINES: list[str] = []


def report(number: int, ok: bool, text: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {text}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
