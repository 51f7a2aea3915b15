"""Plaintext ground truth, evaluated straight from the problem definitions.

Only the evaluation harness ever sees these plaintext inputs.  Nothing here
imports protocol code, so the oracles stay independent of what they check.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

Bits = Sequence[Sequence[int]]
Demands = Sequence[Sequence[Fraction]]


def occupant_counts(bits: Bits) -> list[int]:
    m = len(bits[0])
    return [sum(row[j] for row in bits) for j in range(m)]


def occupancy(bits: Bits) -> list[int]:
    m = len(bits[0])
    return [int(any(row[j] for row in bits)) for j in range(m)]


def tier(x: int, capacities: Sequence[int]) -> int:
    """Smallest facility whose capacity covers ``x``; 0 when nobody shows up."""
    if x == 0:
        return 0
    bounds = [0, *capacities]
    for r in range(1, len(bounds)):
        if bounds[r - 1] < x <= bounds[r]:
            return r
    raise ValueError(f"{x} exceeds every capacity")


def capacity_schedule(bits: Bits, capacities: Sequence[int]) -> list[int]:
    return [tier(x, capacities) for x in occupant_counts(bits)]


def user_counts(bits: Bits) -> list[list[int | None]]:
    """What each user may learn: ``N^j`` where it requested, nothing elsewhere."""
    counts = occupant_counts(bits)
    return [[counts[j] if row[j] else None for j in range(len(row))] for row in bits]


def service_schedule(demands: Demands, threshold) -> list[int]:
    """Brute-force sweep: each action is the first slot after the previous one
    at which the demand accumulated since then reaches ``threshold``."""
    m = len(demands[0])
    actions, prev = [], 0
    while True:
        nxt = None
        for t in range(prev + 1, m + 1):
            acc = sum(sum(row[prev:t]) for row in demands)
            if acc >= threshold:
                nxt = t
                break
        if nxt is None:
            return actions
        actions.append(nxt)
        prev = nxt


def action_totals(demands: Demands, actions: Sequence[int]) -> list[Fraction]:
    out, prev = [], 0
    for s in actions:
        out.append(sum((sum(row[prev:s], Fraction(0)) for row in demands), Fraction(0)))
        prev = s
    return out


def cost_shares(demands: Demands, actions: Sequence[int]) -> list[list[Fraction]]:
    """``q_i^k``: user share of each action's total demand (0 with no own demand)."""
    totals = action_totals(demands, actions)
    shares = []
    for row in demands:
        prev, q = 0, []
        for s, total in zip(actions, totals):
            own = sum(row[prev:s], Fraction(0))
            q.append(own / total if own > 0 else Fraction(0))
            prev = s
        shares.append(q)
    return shares


@dataclass(frozen=True)
class FacilityTruth:
    counts: list[int]
    occupancy: list[int]
    tiers: list[int] | None
    user_counts: list[list[int | None]]


@dataclass(frozen=True)
class ServiceTruth:
    actions: list[int]
    totals: list[Fraction]
    shares: list[list[Fraction]]


def brute_force_oracles(protocol: str, inputs, capacities: Sequence[int] = (), threshold=None):
    if protocol in ("ufs", "cfs"):
        return FacilityTruth(
            counts=occupant_counts(inputs),
            occupancy=occupancy(inputs),
            tiers=capacity_schedule(inputs, capacities) if protocol == "cfs" else None,
            user_counts=user_counts(inputs),
        )
    if protocol == "css":
        actions = service_schedule(inputs, threshold)
        return ServiceTruth(actions, action_totals(inputs, actions), cost_shares(inputs, actions))
    raise ValueError(f"unknown protocol {protocol!r}")
