"""Plaintext inputs and outputs of the three sharing problems."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

from ppcc.paillier import to_fraction


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class UsageSchedule:
    user_id: int
    bits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        if any(b not in (0, 1) for b in self.bits):
            raise ScheduleError(f"user {self.user_id}: usage bits must be 0 or 1")
        if not any(self.bits):
            raise ScheduleError(f"user {self.user_id}: schedule has no requested slot")

    @property
    def slot_count(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class DemandSchedule:
    user_id: int
    demands: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "demands", tuple(to_fraction(p) for p in self.demands))
        if any(p < 0 for p in self.demands):
            raise ScheduleError(f"user {self.user_id}: negative demand")
        if not any(self.demands):
            raise ScheduleError(f"user {self.user_id}: schedule has no positive demand")

    @property
    def slot_count(self) -> int:
        return len(self.demands)


@dataclass(frozen=True)
class EstimationFunction:
    """Maps an occupant count to the smallest facility tier that holds it."""

    capacities: tuple[int, ...]

    def __post_init__(self):
        caps = tuple(int(c) for c in self.capacities)
        object.__setattr__(self, "capacities", caps)
        if not caps or caps[0] <= 0 or any(a >= b for a, b in zip(caps, caps[1:])):
            raise ScheduleError(f"capacities must be positive and strictly increasing: {caps}")

    @property
    def tiers(self) -> int:
        return len(self.capacities)

    def __call__(self, x: int) -> int:
        if x <= 0:
            return 0
        if x > self.capacities[-1]:
            raise CapacityExceeded(f"{x} occupants exceed the largest capacity {self.capacities[-1]}")
        return bisect.bisect_left(self.capacities, x) + 1


class CapacityExceeded(ScheduleError):
    pass


@dataclass(frozen=True)
class KnownCount:
    count: int


@dataclass(frozen=True)
class Masked:
    raw: int


SlotResult = Union[KnownCount, Masked]


@dataclass
class UserResultUFS:
    """What a user ends up with after a facility-sharing run."""

    user_id: int
    entries: list[SlotResult] = field(default_factory=list)
    access_keys: dict[int, int] = field(default_factory=dict)
    fee: Fraction = Fraction(0)

    def counts(self) -> list[int | None]:
        return [e.count if isinstance(e, KnownCount) else None for e in self.entries]


@dataclass(frozen=True)
class ServiceActionSchedule:
    actions: tuple[int, ...]
    threshold: Fraction

    def windows(self) -> list[tuple[int, int]]:
        """Half-open slot windows ``(s^{k-1}, s^k]`` of each action."""
        prev, out = 0, []
        for s in self.actions:
            out.append((prev, s))
            prev = s
        return out


@dataclass
class UserResultCSS:
    user_id: int
    fractions: list[Fraction] = field(default_factory=list)
    # unscaled total demand of each action, recovered only when own demand was positive
    totals: list[Fraction | None] = field(default_factory=list)
    residual: Fraction = Fraction(0)
    fee: Fraction = Fraction(0)


def check_dimensions(schedules: Sequence, users: int, slots: int) -> None:
    if len(schedules) != users:
        raise ScheduleError(f"expected {users} user schedules, got {len(schedules)}")
    for s in schedules:
        if s.slot_count != slots:
            raise ScheduleError(f"user {s.user_id}: expected {slots} slots, got {s.slot_count}")
