"""Shared party machinery: configuration, key material, randomness, decryption."""

from __future__ import annotations

import json
import random
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

from ppcc import paillier
from ppcc.paillier import Ciphertext, DecryptionShare, KeyShare, PrivateKey, PublicKey
from ppcc.protocols import messages as M
from ppcc.protocols.messages import StageMessage

PROTOCOLS = ("ufs", "cfs", "css")


class ProtocolAbort(RuntimeError):
    """Raised when a run cannot continue; carries the stage that failed."""

    def __init__(self, stage: str, reason: str):
        super().__init__(f"[{stage}] {reason}")
        self.stage = stage
        self.reason = reason


class StalledRound(ProtocolAbort):
    pass


@dataclass
class ProtocolConfig:
    protocol: str
    users: int
    slots: int
    scale: int = 100
    service_threshold: Fraction = Fraction(100)
    capacities: tuple[int, ...] = ()
    key_mode: str = "common"
    threshold_t: int | None = None
    seed: int = 0
    mask_bits: int = 64
    probe_mask_bits: int = 32
    fee_rate: Fraction = Fraction(1)

    def __post_init__(self):
        self.service_threshold = paillier.to_fraction(self.service_threshold)
        self.fee_rate = paillier.to_fraction(self.fee_rate)
        self.capacities = tuple(int(c) for c in self.capacities)
        self.validate()

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.users < 1 or self.slots < 1:
            raise ValueError("need at least one user and one slot")
        if self.scale < 1:
            raise ValueError("scale must be a positive integer")
        if self.protocol == "cfs" and not self.capacities:
            raise ValueError("cfs needs a capacity ladder")
        if self.protocol == "css" and self.service_threshold <= 0:
            raise ValueError("service threshold must be positive")
        if self.key_mode not in ("common", "threshold"):
            raise ValueError(f"unknown key mode {self.key_mode!r}")
        if self.key_mode == "threshold":
            if self.threshold_t is None:
                raise ValueError("threshold mode needs threshold_t")
            paillier.check_threshold_params(self.users, self.threshold_t)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["service_threshold"] = str(self.service_threshold)
        d["fee_rate"] = str(self.fee_rate)
        d["capacities"] = list(self.capacities)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ProtocolConfig:
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> ProtocolConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))


def party_rng(seed: int, party: str, purpose: str) -> random.Random:
    # one independent stream per (party, purpose) keeps mask draws identical
    # across key modes and protocols on the same seed
    return random.Random(f"{seed}/{party}/{purpose}")


@dataclass(frozen=True)
class KeyMaterial:
    public: PublicKey
    private: PrivateKey | None = None
    shares: tuple[KeyShare, ...] = ()

    @property
    def mode(self) -> str:
        return "threshold" if self.shares else "common"

    @property
    def threshold(self) -> int | None:
        return self.shares[0].threshold if self.shares else None

    @classmethod
    def generate(
        cls, bits: int, mode: str = "common", users: int = 1, t: int | None = None, rng: random.Random | None = None
    ) -> KeyMaterial:
        if mode == "common":
            pk, sk = paillier.keygen(bits, rng)
            return cls(public=pk, private=sk)
        if t is None:
            raise ValueError("threshold mode needs t")
        pk, shares = paillier.threshold_keygen(bits, users, t, rng)
        return cls(public=pk, shares=tuple(shares))

    def decryptor_for(self, user: int) -> Decryptor:
        if self.private is not None:
            return Decryptor(self.public, private=self.private)
        share = next((s for s in self.shares if s.index == user), None)
        if share is None:
            raise ValueError(f"no key share for user {user}")
        return Decryptor(self.public, share=share)


@dataclass
class Decryptor:
    public: PublicKey
    private: PrivateKey | None = None
    share: KeyShare | None = None

    @property
    def threshold_mode(self) -> bool:
        return self.share is not None

    def partial(self, c: Ciphertext) -> DecryptionShare:
        return paillier.partial_decrypt(self.share, c)

    def decrypt(self, c: Ciphertext, helpers: list[DecryptionShare] = ()) -> int:
        if self.private is not None:
            return paillier.decrypt(self.private, c)
        own = self.partial(c)
        shares = [own] + [h for h in helpers if h.index != own.index]
        return paillier.combine_shares(self.public, shares, self.share.threshold)


class Party:
    protocol_tag = "?"

    def __init__(self, party_id: str, config: ProtocolConfig, pk: PublicKey):
        self.id = party_id
        self.config = config
        self.pk = pk
        self.enc_rng = party_rng(config.seed, party_id, "enc")

    def encrypt(self, m: int) -> Ciphertext:
        return paillier.encrypt(self.pk, m, rng=self.enc_rng)

    def encode(self, value: int, stage: str) -> int:
        # masked protocol values must stay well inside the signed range
        if abs(value) >= self.pk.n // 4:
            raise ProtocolAbort(stage, "value exceeds n/4; key too small for the mask range")
        return value % self.pk.n

    def message(self, stage: str, slot: int | None, receiver: str, kind: str, **payload) -> StageMessage:
        return StageMessage(self.config.protocol.upper(), stage, slot, self.id, receiver, kind, payload)

    def ct_message(self, stage: str, slot: int | None, receiver: str, c: Ciphertext) -> StageMessage:
        return self.message(stage, slot, receiver, M.CIPHERTEXT, value=c.value)


def expect(inbox: list[StageMessage], stage: str, kind: str) -> list[StageMessage]:
    out = [m for m in inbox if m.stage == stage and m.kind == kind]
    if len(out) != len(inbox):
        stray = {(m.stage, m.kind) for m in inbox} - {(stage, kind)}
        raise ProtocolAbort(stage, f"unexpected messages {sorted(stray)}")
    return out


def by_sender_slot(msgs: list[StageMessage], stage: str, senders: list[str], slots) -> dict:
    table = {(m.sender, m.slot): m for m in msgs}
    missing = [(s, j) for s in senders for j in slots if (s, j) not in table]
    if missing:
        raise StalledRound(stage, f"missing {len(missing)} messages, first {missing[0]}")
    return table


class UserParty(Party):
    def __init__(self, index: int, config: ProtocolConfig, keys: KeyMaterial):
        super().__init__(M.user_id(index), config, keys.public)
        self.index = index
        self.decryptor = keys.decryptor_for(index)

    def answer_partials(self, inbox: list[StageMessage]) -> list[StageMessage]:
        out = []
        for req in inbox:
            share = self.decryptor.partial(Ciphertext(req.payload["value"]))
            out.append(
                self.message(
                    req.stage, req.slot, M.OPERATOR, M.PARTIAL,
                    index=share.index, value=share.value, target=req.payload["target"],
                )
            )
        return out

    def decrypt_inbox(self, inbox: list[StageMessage], stage: str) -> dict[int | None, int]:
        """Decrypt every ciphertext of ``stage`` in the inbox, keyed by slot."""
        cts, helpers = {}, defaultdict(list)
        for m in inbox:
            if m.stage != stage:
                raise ProtocolAbort(stage, f"unexpected stage {m.stage}")
            if m.kind == M.CIPHERTEXT:
                cts[m.slot] = Ciphertext(m.payload["value"])
            elif m.kind == M.PARTIALS:
                n = self.config.users
                helpers[m.slot] = [DecryptionShare(s["index"], s["value"], n) for s in m.payload["shares"]]
            else:
                raise ProtocolAbort(stage, f"unexpected kind {m.kind}")
        out = {}
        for slot, c in cts.items():
            if self.decryptor.threshold_mode and slot not in helpers:
                raise StalledRound(stage, f"no decryption shares for slot {slot}")
            try:
                out[slot] = self.decryptor.decrypt(c, helpers.get(slot, []))
            except paillier.PaillierError as e:
                raise ProtocolAbort(stage, f"decryption failed at slot {slot}: {e}") from e
        return out


class OperatorParty(Party):
    def __init__(self, config: ProtocolConfig, pk: PublicKey):
        super().__init__(M.OPERATOR, config, pk)
        self.mask_rng = party_rng(config.seed, M.OPERATOR, "mask")
        self.helper_rng = party_rng(config.seed, M.OPERATOR, "helpers")
        self.user_ids = [M.user_id(i) for i in range(1, config.users + 1)]

    def draw_mask(self, bits: int | None = None) -> int:
        return self.mask_rng.randrange(1, 1 << (bits or self.config.mask_bits))

    def ct_message(self, stage: str, slot: int | None, receiver: str, c: Ciphertext) -> StageMessage:
        # Under threshold keys each receiver gets its own re-randomised copy.
        # Helper partials for one copy cannot be combined with those of
        # another, so the operator never holds t partials of one ciphertext,
        # even for a value broadcast to every user.
        if self.config.key_mode == "threshold":
            c = paillier.hom_add(self.pk, c, self.encrypt(0))
        return super().ct_message(stage, slot, receiver, c)

    def request_partials(self, sent: list[StageMessage]) -> list[StageMessage]:
        """Ask ``t - 1`` randomly chosen other users for a partial decryption of each ciphertext."""
        t = self.config.threshold_t
        out = []
        for m in sent:
            others = [u for u in self.user_ids if u != m.receiver]
            for helper in sorted(self.helper_rng.sample(others, t - 1), key=M.user_index):
                out.append(
                    self.message(
                        m.stage, m.slot, helper, M.TDEC_REQUEST,
                        value=m.payload["value"], target=M.user_index(m.receiver),
                    )
                )
        return out

    def forward_partials(self, inbox: list[StageMessage]) -> list[StageMessage]:
        bundles = defaultdict(list)
        for m in inbox:
            if m.kind != M.PARTIAL:
                raise ProtocolAbort(m.stage, f"expected partial decryptions, got {m.kind}")
            p = m.payload
            bundles[(p["target"], m.stage, m.slot)].append({"index": p["index"], "value": p["value"]})
        return [
            self.message(stage, slot, M.user_id(target), M.PARTIALS, shares=shares)
            for (target, stage, slot), shares in bundles.items()
        ]
