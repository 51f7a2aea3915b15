"""Trace audits for the visibility guarantees of a finished run.

These checks need the simulator's full knowledge (plaintext inputs and the
operator's masks), so they live outside the parties.
"""

from __future__ import annotations

from ppcc.paillier import scale_floor
from ppcc.protocols import messages as M
from ppcc.protocols.messages import StageMessage
from ppcc.protocols.service import threshold_share


def operator_inbound_violations(trace: list[bytes]) -> list[str]:
    """Messages to the operator carrying anything but ciphertexts, indicator
    bits, masked decryptions or partial decryptions."""
    bad = []
    for raw in trace:
        m = StageMessage.decode(raw)
        if m.receiver == M.OPERATOR and m.kind not in M.OPERATOR_INBOUND:
            bad.append(f"{m.sender}->{m.receiver} {m.stage} slot={m.slot} kind={m.kind}")
    return bad


def operator_partial_violations(trace: list[bytes], threshold: int) -> list[str]:
    """Ciphertexts for which the operator relayed ``threshold`` or more
    distinct partial decryptions, enough to decrypt them on its own."""
    targets: dict[tuple[str, int | None, int], int] = {}
    seen: dict[int, set[int]] = {}
    for raw in trace:
        m = StageMessage.decode(raw)
        if m.kind == M.TDEC_REQUEST:
            targets[m.stage, m.slot, m.payload["target"], M.user_index(m.receiver)] = m.payload["value"]
        elif m.kind == M.PARTIAL:
            key = (m.stage, m.slot, m.payload["target"], M.user_index(m.sender))
            seen.setdefault(targets[key], set()).add(m.payload["index"])
    return [f"ciphertext {c:x}: {len(ix)} partials" for c, ix in seen.items() if len(ix) >= threshold]


def facility_user_violations(result, bits: list[list[int]]) -> list[str]:
    """Every value a non-requesting user decrypts must carry a live operator mask."""
    op = result.operator
    counts = [sum(col) for col in zip(*bits)]
    bad = []
    for user in result.users:
        i = user.index
        for j, entry in enumerate(user.result.entries, start=1):
            b = bits[i - 1][j - 1]
            r = op.masks.slot_masks[j]
            expected = counts[j - 1] + r * (1 - b)
            value = getattr(entry, "count", None) if b else getattr(entry, "raw", None)
            if value != expected:
                bad.append(f"u{i} slot {j}: stage-1 value {value} != {expected}")
            if not b and r == 0:
                bad.append(f"u{i} slot {j}: stage-1 value is unmasked")
            mask_sum = op.masks.user_mask_sum(j)
            if mask_sum == 0 or user.revealed[j] < mask_sum:
                bad.append(f"u{i} slot {j}: stage-2 broadcast lacks the mask sum")
    return bad


def service_user_violations(result, demands, scale: int) -> list[str]:
    """Every probe value users decrypt is the scaled slack times a positive mask."""
    op = result.operator
    slice_ = threshold_share(result.config)
    scaled = [[scale_floor(p, scale) for p in row] for row in demands]
    bad = []
    last = 0
    for t in sorted(op.masks.probe_masks):
        r = op.masks.probe_masks[t]
        if r < 1:
            bad.append(f"probe {t}: non-positive mask")
        slack = sum(sum(row[last:t]) for row in scaled) - len(demands) * slice_
        for user in result.users:
            if user.probe_values[t] != r * slack:
                bad.append(f"u{user.index} probe {t}: decrypted {user.probe_values[t]} != R^t * slack")
        if t in op.actions:
            last = t
    return bad
