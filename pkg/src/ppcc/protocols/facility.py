"""Facility sharing: PP-UFS and its capacitated generalisation PP-CFS.

Both protocols share stages 0, 1 and 3; they differ only in the payload a
requesting user contributes in stage 2 (``1/N^j`` versus ``f(N^j)/N^j``) and
in how the operator reads the unmasked result.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from ppcc import paillier
from ppcc.paillier import Ciphertext
from ppcc.protocols import messages as M
from ppcc.protocols.messages import StageMessage
from ppcc.protocols.parties import (
    KeyMaterial,
    OperatorParty,
    ProtocolAbort,
    ProtocolConfig,
    StalledRound,
    UserParty,
    by_sender_slot,
    expect,
)
from ppcc.protocols.schedules import (
    CapacityExceeded,
    EstimationFunction,
    KnownCount,
    Masked,
    UsageSchedule,
    UserResultUFS,
)

S1_SUBMIT = "s1.submit"
S1_RETURN = "s1.return"
S2_MASKS = "s2.masks"
S2_CONTRIBUTE = "s2.contribute"
S2_BROADCAST = "s2.broadcast"
S2_REVEAL = "s2.reveal"
S3_PAY = "s3.pay"
S3_KEYS = "s3.keys"


def estimator_for(config: ProtocolConfig) -> EstimationFunction | None:
    return EstimationFunction(config.capacities) if config.protocol == "cfs" else None


# --------------------------------------------------------------------------- stateless stage rules


def stage1_product(pk, column: Ciphertext, masked_r: Ciphertext, own: Ciphertext, r: int) -> Ciphertext:
    """``(prod_i E[b_i]) * E[R] * E[b_own]^-R``: plaintext ``sum(b) + R*(1 - b_own)``."""
    return paillier.hom_add(pk, paillier.hom_add(pk, column, masked_r), paillier.hom_scale(pk, own, -r))


def interpret_stage1(bit: int, value: int, users: int) -> KnownCount | Masked:
    if bit:
        if not 1 <= value <= users:
            raise ProtocolAbort(S1_RETURN, f"requesting user decrypted count {value} outside [1, {users}]")
        return KnownCount(value)
    return Masked(value)


def stage2_payload(bit: int, count: int | None, scale: int, estimator: EstimationFunction | None) -> int:
    """Scaled share ``floor(S * f(N)/N)`` a requesting user adds on top of its mask."""
    if not bit:
        return 0
    if count is None:
        raise ProtocolAbort(S2_CONTRIBUTE, "requesting user has no known count")
    tier = 1 if estimator is None else estimator(count)
    return scale * tier // count


def finalize_slot(unmasked: int, scale: int, users: int, estimator: EstimationFunction | None) -> int:
    """Round the unmasked aggregate ``u`` to the nearest multiple of ``scale``."""
    if estimator is None and not 0 <= unmasked <= scale + users:
        raise ProtocolAbort(S2_REVEAL, f"unmasked aggregate {unmasked} outside [0, S + N]")
    if unmasked < 0:
        raise ProtocolAbort(S2_REVEAL, f"negative unmasked aggregate {unmasked}")
    tier = (2 * unmasked + scale) // (2 * scale)
    if estimator is None:
        return min(tier, 1)
    if tier > estimator.tiers:
        raise ProtocolAbort(S2_REVEAL, f"recovered tier {tier} exceeds {estimator.tiers}")
    return tier


# --------------------------------------------------------------------------- operator


@dataclass
class FacilityMasks:
    """Operator-private randomness of a facility-sharing run."""

    slot_masks: dict[int, int] = field(default_factory=dict)
    user_masks: dict[tuple[str, int], int] = field(default_factory=dict)
    access_keys: dict[int, int] = field(default_factory=dict)

    def user_mask_sum(self, slot: int) -> int:
        return sum(r for (_, j), r in self.user_masks.items() if j == slot)


@dataclass
class FacilityOperatorOutput:
    schedule: list[int]
    # u^j / S before rounding, kept for error accounting
    raw_aggregates: list[Fraction]


class FacilityOperator(OperatorParty):
    def __init__(self, config: ProtocolConfig, keys: KeyMaterial | paillier.PublicKey):
        pk = keys.public if isinstance(keys, KeyMaterial) else keys
        super().__init__(config, pk)
        self.estimator = estimator_for(config)
        self.slots = range(1, config.slots + 1)
        self.masks = FacilityMasks()
        self.encrypted_slot_masks: dict[int, Ciphertext] = {}
        self.submissions: dict[tuple[str, int], Ciphertext] = {}
        self.output: FacilityOperatorOutput | None = None

    def setup(self) -> list[StageMessage]:
        for j in self.slots:
            r = self.draw_mask()
            self.masks.slot_masks[j] = r
            self.encrypted_slot_masks[j] = self.encrypt(r)
        return []

    def stage1_return(self, inbox: list[StageMessage]) -> list[StageMessage]:
        msgs = expect(inbox, S1_SUBMIT, M.CIPHERTEXT)
        table = by_sender_slot(msgs, S1_SUBMIT, self.user_ids, self.slots)
        out = []
        for j in self.slots:
            column = [Ciphertext(table[u, j].payload["value"]) for u in self.user_ids]
            for u, c in zip(self.user_ids, column):
                self.submissions[u, j] = c
            total = paillier.hom_sum(self.pk, column)
            r = self.masks.slot_masks[j]
            for u, c in zip(self.user_ids, column):
                out.append(self.ct_message(S1_RETURN, j, u, stage1_product(self.pk, total, self.encrypted_slot_masks[j], c, r)))
        return out

    def stage2_masks(self) -> list[StageMessage]:
        out = []
        for u in self.user_ids:
            for j in self.slots:
                r = self.draw_mask()
                self.masks.user_masks[u, j] = r
                out.append(self.message(S2_MASKS, j, u, M.MASK, value=r))
        return out

    def stage2_broadcast(self, inbox: list[StageMessage]) -> list[StageMessage]:
        msgs = expect(inbox, S2_CONTRIBUTE, M.CIPHERTEXT)
        table = by_sender_slot(msgs, S2_CONTRIBUTE, self.user_ids, self.slots)
        out = []
        for j in self.slots:
            prod = paillier.hom_sum(self.pk, (Ciphertext(table[u, j].payload["value"]) for u in self.user_ids))
            out.extend(self.ct_message(S2_BROADCAST, j, u, prod) for u in self.user_ids)
        return out

    def stage2_finalize(self, inbox: list[StageMessage]) -> FacilityOperatorOutput:
        msgs = expect(inbox, S2_REVEAL, M.MASKED)
        table = by_sender_slot(msgs, S2_REVEAL, self.user_ids, self.slots)
        schedule, raw = [], []
        S = self.config.scale
        for j in self.slots:
            values = {table[u, j].payload["value"] for u in self.user_ids}
            if len(values) != 1:
                raise ProtocolAbort(S2_REVEAL, f"users disagree on the decrypted aggregate of slot {j}")
            unmasked = values.pop() - self.masks.user_mask_sum(j)
            schedule.append(finalize_slot(unmasked, S, self.config.users, self.estimator))
            raw.append(Fraction(unmasked, S))
        self.output = FacilityOperatorOutput(schedule, raw)
        return self.output

    def stage3_keys(self, inbox: list[StageMessage]) -> list[StageMessage]:
        """Send ``E[b_i^j]^kappa^j`` to every user that paid."""
        msgs = expect(inbox, S3_PAY, M.INDICATOR)
        paid = {m.sender for m in msgs if m.payload["value"] == 1}
        for j in self.slots:
            self.masks.access_keys[j] = self.draw_mask()
        out = []
        for u in self.user_ids:
            if u not in paid:
                continue
            for j in self.slots:
                key_ct = paillier.hom_scale(self.pk, self.submissions[u, j], self.masks.access_keys[j])
                out.append(self.ct_message(S3_KEYS, j, u, key_ct))
        return out


# --------------------------------------------------------------------------- user


class FacilityUser(UserParty):
    def __init__(self, schedule: UsageSchedule, config: ProtocolConfig, keys: KeyMaterial, paid: bool = True):
        super().__init__(schedule.user_id, config, keys)
        self.schedule = schedule
        self.estimator = estimator_for(config)
        self.paid = paid
        self.slots = range(1, config.slots + 1)
        self.result = UserResultUFS(user_id=schedule.user_id)
        self._masks: dict[int, int] = {}
        self.revealed: dict[int, int] = {}

    def bit(self, j: int) -> int:
        return self.schedule.bits[j - 1]

    def stage1_submit(self) -> list[StageMessage]:
        return [self.ct_message(S1_SUBMIT, j, M.OPERATOR, self.encrypt(self.bit(j))) for j in self.slots]

    def stage1_decrypt(self, inbox: list[StageMessage]) -> None:
        values = self.decrypt_inbox(inbox, S1_RETURN)
        missing = [j for j in self.slots if j not in values]
        if missing:
            raise StalledRound(S1_RETURN, f"{self.id} missing slots {missing}")
        self.result.entries = [interpret_stage1(self.bit(j), values[j], self.config.users) for j in self.slots]

    def known_count(self, j: int) -> int | None:
        e = self.result.entries[j - 1]
        return e.count if isinstance(e, KnownCount) else None

    def stage2_contribute(self, inbox: list[StageMessage]) -> list[StageMessage]:
        msgs = expect(inbox, S2_MASKS, M.MASK)
        self._masks = {m.slot: m.payload["value"] for m in msgs}
        out = []
        for j in self.slots:
            if j not in self._masks:
                raise StalledRound(S2_MASKS, f"{self.id} has no mask for slot {j}")
            try:
                payload = stage2_payload(self.bit(j), self.known_count(j), self.config.scale, self.estimator)
            except CapacityExceeded as e:
                raise ProtocolAbort(S2_CONTRIBUTE, str(e)) from e
            value = self.encode(payload + self._masks[j], S2_CONTRIBUTE)
            out.append(self.ct_message(S2_CONTRIBUTE, j, M.OPERATOR, self.encrypt(value)))
        return out

    def stage2_reveal(self, inbox: list[StageMessage]) -> list[StageMessage]:
        self.revealed = self.decrypt_inbox(inbox, S2_BROADCAST)
        return [self.message(S2_REVEAL, j, M.OPERATOR, M.MASKED, value=self.revealed[j]) for j in self.slots]

    def stage3_pay(self) -> list[StageMessage]:
        rate = self.config.fee_rate
        fee = Fraction(0)
        for j in self.slots:
            n_j = self.known_count(j)
            if n_j:
                tier = 1 if self.estimator is None else self.estimator(n_j)
                fee += rate * tier / n_j
        self.result.fee = fee
        return [self.message(S3_PAY, None, M.OPERATOR, M.INDICATOR, value=int(self.paid))]

    def stage3_decrypt(self, inbox: list[StageMessage]) -> None:
        keys = self.decrypt_inbox(inbox, S3_KEYS)
        self.result.access_keys = {j: k for j, k in sorted(keys.items()) if self.bit(j)}
        # a slot the user did not request must decrypt to zero
        leaked = [j for j, k in keys.items() if not self.bit(j) and k != 0]
        if leaked:
            raise ProtocolAbort(S3_KEYS, f"non-requested slots {leaked} yielded a key")
