"""Synchronous round drivers for the three protocols.

The operator always waits for every user's message of a stage before it
moves on.  In threshold mode each ciphertext a user must decrypt is
preceded by a partial-decryption sub-round relayed by the operator.
"""

from __future__ import annotations

from typing import Sequence

from ppcc.protocols import facility as F
from ppcc.protocols import messages as M
from ppcc.protocols import service as C
from ppcc.protocols.parties import KeyMaterial, ProtocolAbort, ProtocolConfig
from ppcc.protocols.schedules import DemandSchedule, UsageSchedule, check_dimensions
from ppcc.transport import Network, RunResult, StageTimer


class _Round:
    def __init__(self, net: Network, timer: StageTimer, operator, users, threshold: bool):
        self.net, self.timer = net, timer
        self.op, self.users = operator, users
        self.threshold = threshold

    def op_step(self, stage: str, fn, *args):
        out = self.timer.call(self.op.id, stage, fn, *args)
        if isinstance(out, list):
            self.net.send_all(out)
        return out

    def op_recv(self, stage: str, fn):
        return self.op_step(stage, fn, self.net.receive(self.op.id))

    def user_step(self, stage: str, method: str, with_inbox: bool = True):
        for u in self.users:
            fn = getattr(u, method)
            args = (self.net.receive(u.id),) if with_inbox else ()
            out = self.timer.call(u.id, stage, fn, *args)
            if out:
                self.net.send_all(out)

    def decryption_help(self, stage: str, sent: list[M.StageMessage]) -> None:
        """Collect ``t - 1`` partial decryptions for every ciphertext in ``sent``."""
        if not self.threshold or not sent:
            return
        self.op_step(stage, self.op.request_partials, sent)
        for u in self.users:
            reqs = self.net.receive(u.id, kinds=[M.TDEC_REQUEST])
            if reqs:
                self.net.send_all(self.timer.call(u.id, stage, u.answer_partials, reqs))
        self.op_step(stage, self.op.forward_partials, self.net.receive(self.op.id, kinds=[M.PARTIAL]))

    def finish(self) -> None:
        if self.net.pending():
            raise ProtocolAbort("end", f"{self.net.pending()} undelivered messages")


def _setup(config: ProtocolConfig, keys: KeyMaterial):
    if config.key_mode != keys.mode:
        raise ValueError(f"config key mode {config.key_mode} does not match key material ({keys.mode})")
    if keys.mode == "threshold" and keys.threshold != config.threshold_t:
        raise ValueError("threshold t in config does not match the key shares")
    net = Network([M.OPERATOR] + [M.user_id(i) for i in range(1, config.users + 1)])
    return net, StageTimer()


def run_facility(
    config: ProtocolConfig,
    keys: KeyMaterial,
    schedules: Sequence[UsageSchedule],
    paid: dict[int, bool] | None = None,
) -> RunResult:
    check_dimensions(schedules, config.users, config.slots)
    net, timer = _setup(config, keys)
    paid = paid or {}
    op = F.FacilityOperator(config, keys)
    users = [F.FacilityUser(s, config, keys, paid=paid.get(s.user_id, True)) for s in sorted(schedules, key=lambda s: s.user_id)]
    r = _Round(net, timer, op, users, keys.mode == "threshold")

    r.op_step("s0.setup", op.setup)
    r.user_step(F.S1_SUBMIT, "stage1_submit", with_inbox=False)
    sent = r.op_recv(F.S1_RETURN, op.stage1_return)
    r.decryption_help(F.S1_RETURN, sent)
    r.user_step(F.S1_RETURN, "stage1_decrypt")

    r.op_step(F.S2_MASKS, op.stage2_masks)
    r.user_step(F.S2_CONTRIBUTE, "stage2_contribute")
    sent = r.op_recv(F.S2_BROADCAST, op.stage2_broadcast)
    r.decryption_help(F.S2_BROADCAST, sent)
    r.user_step(F.S2_REVEAL, "stage2_reveal")
    output = r.op_recv(F.S2_REVEAL, op.stage2_finalize)

    r.user_step(F.S3_PAY, "stage3_pay", with_inbox=False)
    sent = r.op_recv(F.S3_KEYS, op.stage3_keys)
    r.decryption_help(F.S3_KEYS, sent)
    r.user_step(F.S3_KEYS, "stage3_decrypt")
    r.finish()
    return RunResult(config, output, [u.result for u in users], net.ledger, timer, net.trace, op, users)


def run_service(config: ProtocolConfig, keys: KeyMaterial, demands: Sequence[DemandSchedule]) -> RunResult:
    check_dimensions(demands, config.users, config.slots)
    net, timer = _setup(config, keys)
    op = C.ServiceOperator(config, keys)
    users = [C.ServiceUser(d, config, keys) for d in sorted(demands, key=lambda d: d.user_id)]
    r = _Round(net, timer, op, users, keys.mode == "threshold")

    while op.probing:
        r.user_step(C.S1_PROBE, "probe", with_inbox=False)
        sent = r.op_recv(C.S1_BROADCAST, op.probe_broadcast)
        r.decryption_help(C.S1_BROADCAST, sent)
        r.user_step(C.S1_VOTE, "vote")
        r.op_recv(C.S1_VOTE, op.probe_decide)

    r.user_step(C.S2_SUBMIT, "stage2_submit", with_inbox=False)
    if op.actions:
        r.op_recv(C.S2_MASKED_SUM, op.stage2_masked_sum)
        r.user_step(C.S2_BLIND, "stage2_blind")
        sent = r.op_recv(C.S2_UNMASK, op.stage2_unmask)
        r.decryption_help(C.S2_UNMASK, sent)
        r.user_step(C.S2_UNMASK, "stage2_decrypt")
    else:
        for u in users:
            u.stage2_decrypt([])
    r.finish()
    return RunResult(config, op.schedule, [u.result for u in users], net.ledger, timer, net.trace, op, users)


def run(config: ProtocolConfig, keys: KeyMaterial, inputs, paid=None) -> RunResult:
    if config.protocol == "css":
        return run_service(config, keys, inputs)
    return run_facility(config, keys, inputs, paid=paid)
