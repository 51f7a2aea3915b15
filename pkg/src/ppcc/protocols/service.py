"""Communal service sharing (PP-CSS).

Stage 1 probes the accumulated demand slot by slot under a positive
multiplicative mask, so every party learns only the sign of
``sum(p) - C``.  Stage 2 lets each user with positive demand recover the
action's total demand, and hence its cost share, through a four-message
exchange.
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
from ppcc.protocols.schedules import DemandSchedule, ServiceActionSchedule, UserResultCSS

S1_PROBE = "s1.probe"
S1_BROADCAST = "s1.broadcast"
S1_VOTE = "s1.vote"
S2_SUBMIT = "s2.submit"
S2_MASKED_SUM = "s2.masked_sum"
S2_BLIND = "s2.blind"
S2_UNMASK = "s2.unmask"


def threshold_share(config: ProtocolConfig) -> int:
    """Each user's scaled slice of the service threshold, ``floor(S*C/N)``."""
    return paillier.scale_floor(config.service_threshold / config.users, config.scale)


@dataclass
class ServiceMasks:
    probe_masks: dict[int, int] = field(default_factory=dict)
    action_masks: dict[int, int] = field(default_factory=dict)


class ServiceOperator(OperatorParty):
    def __init__(self, config: ProtocolConfig, keys: KeyMaterial | paillier.PublicKey):
        pk = keys.public if isinstance(keys, KeyMaterial) else keys
        super().__init__(config, pk)
        self.masks = ServiceMasks()
        self.actions: list[int] = []
        self.last_action = 0
        self.t = 1
        self.submitted: dict[tuple[str, int], Ciphertext] = {}
        self.encrypted_action_masks: dict[int, Ciphertext] = {}
        self.schedule: ServiceActionSchedule | None = None

    @property
    def probing(self) -> bool:
        return self.t <= self.config.slots

    def probe_broadcast(self, inbox: list[StageMessage], mask: int | None = None) -> list[StageMessage]:
        msgs = expect(inbox, S1_PROBE, M.CIPHERTEXT)
        table = by_sender_slot(msgs, S1_PROBE, self.user_ids, [self.t])
        r = self.draw_mask(self.config.probe_mask_bits) if mask is None else mask
        if r <= 0:
            raise ProtocolAbort(S1_BROADCAST, "probe mask must be strictly positive")
        self.masks.probe_masks[self.t] = r
        total = paillier.hom_sum(self.pk, (Ciphertext(table[u, self.t].payload["value"]) for u in self.user_ids))
        masked = paillier.hom_scale(self.pk, total, r)
        return [self.ct_message(S1_BROADCAST, self.t, u, masked) for u in self.user_ids]

    def probe_decide(self, inbox: list[StageMessage]) -> bool:
        msgs = expect(inbox, S1_VOTE, M.INDICATOR)
        table = by_sender_slot(msgs, S1_VOTE, self.user_ids, [self.t])
        votes = {table[u, self.t].payload["value"] for u in self.user_ids}
        if len(votes) != 1:
            raise ProtocolAbort(S1_VOTE, f"indicator votes disagree at slot {self.t}")
        fire = votes.pop() == 1
        if fire:
            self.actions.append(self.t)
            self.last_action = self.t
        self.t += 1
        if not self.probing:
            self.schedule = ServiceActionSchedule(tuple(self.actions), self.config.service_threshold)
        return fire

    @property
    def action_indices(self) -> range:
        return range(1, len(self.actions) + 1)

    def stage2_masked_sum(self, inbox: list[StageMessage]) -> list[StageMessage]:
        msgs = expect(inbox, S2_SUBMIT, M.CIPHERTEXT)
        table = by_sender_slot(msgs, S2_SUBMIT, self.user_ids, self.action_indices)
        out = []
        for k in self.action_indices:
            r = self.draw_mask()
            self.masks.action_masks[k] = r
            self.encrypted_action_masks[k] = self.encrypt(r)
            cts = [Ciphertext(table[u, k].payload["value"]) for u in self.user_ids]
            for u, c in zip(self.user_ids, cts):
                self.submitted[u, k] = c
            masked = paillier.hom_add(self.pk, paillier.hom_sum(self.pk, cts), self.encrypted_action_masks[k])
            out.extend(self.ct_message(S2_MASKED_SUM, k, u, masked) for u in self.user_ids)
        return out

    def stage2_unmask(self, inbox: list[StageMessage]) -> list[StageMessage]:
        msgs = expect(inbox, S2_BLIND, M.CIPHERTEXT)
        table = by_sender_slot(msgs, S2_BLIND, self.user_ids, self.action_indices)
        out = []
        for k in self.action_indices:
            r = self.masks.action_masks[k]
            for u in self.user_ids:
                blinded = Ciphertext(table[u, k].payload["value"])
                c = paillier.hom_add(self.pk, blinded, paillier.hom_scale(self.pk, self.submitted[u, k], -r))
                out.append(self.ct_message(S2_UNMASK, k, u, c))
        return out


class ServiceUser(UserParty):
    def __init__(self, demands: DemandSchedule, config: ProtocolConfig, keys: KeyMaterial):
        super().__init__(demands.user_id, config, keys)
        self.demands = demands
        S = config.scale
        self.scaled = [paillier.scale_floor(p, S) for p in demands.demands]
        self.threshold_slice = threshold_share(config)
        self.last_action = 0
        self.t = 1
        self.actions: list[int] = []
        self.action_demand: dict[int, int] = {}
        self.probe_values: dict[int, int] = {}
        self.result = UserResultCSS(user_id=demands.user_id)

    def window_demand(self, lo: int, hi: int) -> int:
        """Scaled own demand over slots ``lo+1 .. hi``."""
        return sum(self.scaled[lo:hi])

    def probe(self) -> list[StageMessage]:
        if not 0 <= self.last_action < self.t <= self.config.slots:
            raise ProtocolAbort(S1_PROBE, f"window ({self.last_action}, {self.t}] out of range")
        v = self.window_demand(self.last_action, self.t) - self.threshold_slice
        return [self.ct_message(S1_PROBE, self.t, M.OPERATOR, self.encrypt(self.encode(v, S1_PROBE)))]

    def vote(self, inbox: list[StageMessage]) -> list[StageMessage]:
        values = self.decrypt_inbox(inbox, S1_BROADCAST)
        if self.t not in values:
            raise StalledRound(S1_BROADCAST, f"{self.id} missing broadcast for slot {self.t}")
        value = paillier.signed_int(values[self.t], self.pk)
        self.probe_values[self.t] = value
        fire = value >= 0
        msg = self.message(S1_VOTE, self.t, M.OPERATOR, M.INDICATOR, value=int(fire))
        if fire:
            self.actions.append(self.t)
            self.last_action = self.t
        self.t += 1
        return [msg]

    def stage2_submit(self) -> list[StageMessage]:
        out, prev = [], 0
        for k, s in enumerate(self.actions, start=1):
            P = self.window_demand(prev, s)
            self.action_demand[k] = P
            out.append(self.ct_message(S2_SUBMIT, k, M.OPERATOR, self.encrypt(self.encode(P, S2_SUBMIT))))
            prev = s
        self.result.residual = Fraction(self.window_demand(prev, self.config.slots), self.config.scale)
        return out

    def stage2_blind(self, inbox: list[StageMessage]) -> list[StageMessage]:
        msgs = expect(inbox, S2_MASKED_SUM, M.CIPHERTEXT)
        out = []
        for m in sorted(msgs, key=lambda m: m.slot):
            P = self.action_demand[m.slot]
            scaled = paillier.hom_scale(self.pk, Ciphertext(m.payload["value"]), P)
            # fresh E[0] hides P == 1, where the product would come back unchanged
            blinded = paillier.hom_add(self.pk, scaled, self.encrypt(0))
            out.append(self.ct_message(S2_BLIND, m.slot, M.OPERATOR, blinded))
        if len(out) != len(self.actions):
            raise StalledRound(S2_MASKED_SUM, f"{self.id} got {len(out)} of {len(self.actions)} actions")
        return out

    def stage2_decrypt(self, inbox: list[StageMessage]) -> None:
        values = self.decrypt_inbox(inbox, S2_UNMASK)
        fractions, totals = [], []
        fee = Fraction(0)
        for k in range(1, len(self.actions) + 1):
            if k not in values:
                raise StalledRound(S2_UNMASK, f"{self.id} missing action {k}")
            P, v = self.action_demand[k], values[k]
            if P == 0:
                if v != 0:
                    raise ProtocolAbort(S2_UNMASK, f"zero-demand user decrypted {v} for action {k}")
                fractions.append(Fraction(0))
                totals.append(None)
                continue
            total, rem = divmod(v, P)
            if rem or total < P:
                raise ProtocolAbort(S2_UNMASK, f"decrypted value for action {k} is inconsistent with own demand")
            q = Fraction(P, total)
            fractions.append(q)
            totals.append(Fraction(total, self.config.scale))
            fee += self.config.fee_rate * q
        self.result.fractions = fractions
        self.result.totals = totals
        self.result.fee = fee
