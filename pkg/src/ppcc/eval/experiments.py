"""Accuracy, timing and traffic experiments.

Every number in a report comes from a live protocol run; the oracles only
supply the plaintext reference it is compared against.
"""

from __future__ import annotations

import csv
import io
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from ppcc.eval import oracles
from ppcc.protocols import messages as M
from ppcc.protocols.parties import KeyMaterial, ProtocolConfig, party_rng
from ppcc.protocols.runner import run
from ppcc.protocols.schedules import DemandSchedule, UsageSchedule

STAGE_COLUMNS = ("user_stage1_s", "user_stage2_s", "operator_stage1_s", "operator_stage2_s")
REPORT_COLUMNS = ("protocol", "N", "m", "S", "C", "mre", "mre_pre_rounding", *STAGE_COLUMNS, "total_bytes")

# per-slot stage 1-2 traffic between the operator and one user, in bits,
# as estimated with 1024-bit ciphertexts and plaintexts
ESTIMATED_BITS_PER_SLOT = {"ufs": 1024 * 4 + 1024 + 1024, "cfs": 1024 * 4 + 1024 + 1024, "css": 1024 * 6 + 1024}


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str
    users: int = 20
    slots: int = 48
    scale: int = 100
    service_threshold: Fraction = Fraction(100)
    capacities: tuple[int, ...] = ()
    demand_low: Fraction = Fraction(10)
    demand_high: Fraction = Fraction(20)
    # demands are drawn on a grid of 10**-demand_decimals
    demand_decimals: int = 1
    usage_prob: float = 0.5
    seed: int = 0
    repetitions: int = 20
    key_bits: int = 1024
    key_mode: str = "common"
    threshold_t: int | None = None

    def protocol_config(self, rep: int) -> ProtocolConfig:
        return ProtocolConfig(
            protocol=self.protocol,
            users=self.users,
            slots=self.slots,
            scale=self.scale,
            service_threshold=self.service_threshold,
            capacities=self.capacities,
            key_mode=self.key_mode,
            threshold_t=self.threshold_t,
            seed=self.seed * 100_003 + rep,
        )


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    mre: float
    mre_per_rep: list[float]
    mre_pre_rounding: float
    stage_times: dict[str, float]
    operator_time_per_slot: float
    total_bytes: float
    messages: float
    bytes_per_user_slot: float
    estimated_bytes_per_user_slot: float
    oracle_agreement: float

    def row(self, bench: bool = True) -> dict:
        c = self.config
        r = {"protocol": c.protocol, "N": c.users, "m": c.slots, "S": c.scale, "C": str(c.service_threshold), "mre": f"{self.mre:.6g}"}
        r["mre_pre_rounding"] = f"{self.mre_pre_rounding:.6g}"
        for col in STAGE_COLUMNS:
            r[col] = f"{self.stage_times.get(col[:-2], 0.0):.6f}" if bench else ""
        r["total_bytes"] = f"{self.total_bytes:.0f}"
        return r


# --------------------------------------------------------------------------- instances


def random_usage(users: int, slots: int, rng: random.Random, prob: float = 0.5) -> list[list[int]]:
    """Random usage bits; a row with no requested slot is redrawn."""
    rows = []
    for _ in range(users):
        while True:
            row = [int(rng.random() < prob) for _ in range(slots)]
            if any(row):
                rows.append(row)
                break
    return rows


def random_demands(
    users: int, slots: int, rng: random.Random, low=Fraction(10), high=Fraction(20), decimals: int = 1
) -> list[list[Fraction]]:
    unit = 10**decimals
    lo, hi = int(Fraction(low) * unit), int(Fraction(high) * unit)
    return [[Fraction(rng.randint(lo, hi), unit) for _ in range(slots)] for _ in range(users)]


def make_inputs(protocol: str, plain):
    if protocol == "css":
        return [DemandSchedule(i, row) for i, row in enumerate(plain, start=1)]
    return [UsageSchedule(i, row) for i, row in enumerate(plain, start=1)]


def instance(cfg: ExperimentConfig, rep: int):
    rng = random.Random(f"{cfg.seed}/instance/{rep}/{cfg.users}/{cfg.slots}")
    if cfg.protocol == "css":
        return random_demands(cfg.users, cfg.slots, rng, cfg.demand_low, cfg.demand_high, cfg.demand_decimals)
    return random_usage(cfg.users, cfg.slots, rng, cfg.usage_prob)


def experiment_keys(cfg: ExperimentConfig) -> KeyMaterial:
    rng = party_rng(cfg.seed, "harness", f"keys/{cfg.key_bits}/{cfg.key_mode}/{cfg.users}/{cfg.threshold_t}")
    return KeyMaterial.generate(cfg.key_bits, cfg.key_mode, cfg.users, cfg.threshold_t, rng)


# --------------------------------------------------------------------------- error measures


def compute_mre(recovered: Sequence, true: Sequence) -> Fraction:
    """Mean over measurable slots of ``|recovered - true| / true``.

    Slots whose true aggregate is zero are skipped.
    """
    if len(recovered) != len(true):
        raise ValueError("recovered and true aggregates differ in length")
    terms = [abs(Fraction(r) - Fraction(t)) / Fraction(t) for r, t in zip(recovered, true) if t != 0]
    if not terms:
        raise ValueError("no slot with a nonzero true aggregate")
    return sum(terms, Fraction(0)) / len(terms)


def recovered_action_totals(user_results) -> list[Fraction]:
    """Per-action total demand as decrypted by the users (all must agree)."""
    k = len(user_results[0].fractions)
    out = []
    for a in range(k):
        seen = {r.totals[a] for r in user_results if r.totals[a] is not None}
        if len(seen) != 1:
            raise AssertionError(f"users disagree on the total of action {a + 1}: {seen}")
        out.append(seen.pop())
    return out


def run_mre(cfg: ExperimentConfig, plain, result) -> tuple[Fraction, Fraction, bool]:
    """MRE of one run, its pre-rounding variant, and whether the operator
    output matched the oracle.

    For UFS/CFS the headline MRE compares the operator's decided c (or the
    facility tier) with the truth; the pre-rounding variant uses u/S instead.
    For CSS both compare the users' recovered action totals with the true
    window sums, so they coincide.
    """
    if cfg.protocol == "css":
        truth = oracles.brute_force_oracles("css", plain, threshold=cfg.service_threshold)
        actions = list(result.operator_output.actions)
        if not actions:
            return Fraction(0), Fraction(0), actions == truth.actions
        true_totals = oracles.action_totals(plain, actions)
        mre = compute_mre(recovered_action_totals(result.user_results), true_totals)
        return mre, mre, actions == truth.actions
    truth = oracles.brute_force_oracles(cfg.protocol, plain, capacities=cfg.capacities)
    reference = truth.tiers if cfg.protocol == "cfs" else truth.occupancy
    out = result.operator_output
    pre = compute_mre(out.raw_aggregates, reference)
    return compute_mre(out.schedule, reference), pre, out.schedule == reference


# --------------------------------------------------------------------------- experiments


def stage_bytes_per_user_slot(result, cfg: ExperimentConfig) -> float:
    stages = {st for (_, _, _, st, _, _) in result.ledger.rows() if st[:2] in ("s1", "s2")}
    per_user = [
        result.ledger.bytes_between(M.OPERATOR, M.user_id(i), stages) for i in range(1, cfg.users + 1)
    ]
    return sum(per_user) / len(per_user) / cfg.slots


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    keys = experiment_keys(cfg)
    mres, pres, agree = [], [], 0
    times: dict[str, float] = {}
    total_bytes = messages = per_slot = op_per_slot = 0.0
    for rep in range(cfg.repetitions):
        plain = instance(cfg, rep)
        result = run(cfg.protocol_config(rep), keys, make_inputs(cfg.protocol, plain))
        mre, pre, ok = run_mre(cfg, plain, result)
        mres.append(float(mre))
        pres.append(float(pre))
        agree += ok
        stage = result.timing.by_major_stage()
        for k, v in stage.items():
            times[k] = times.get(k, 0.0) + v / cfg.repetitions
        op_per_slot += (stage.get("operator_stage1", 0.0) + stage.get("operator_stage2", 0.0)) / cfg.slots / cfg.repetitions
        total_bytes += result.ledger.total_bytes / cfg.repetitions
        messages += result.ledger.total_messages / cfg.repetitions
        per_slot += stage_bytes_per_user_slot(result, cfg) / cfg.repetitions
    return ExperimentReport(
        config=cfg,
        mre=sum(mres) / len(mres),
        mre_per_rep=mres,
        mre_pre_rounding=sum(pres) / len(pres),
        stage_times=times,
        operator_time_per_slot=op_per_slot,
        total_bytes=total_bytes,
        messages=messages,
        bytes_per_user_slot=per_slot,
        estimated_bytes_per_user_slot=ESTIMATED_BITS_PER_SLOT[cfg.protocol] / 8,
        oracle_agreement=agree / cfg.repetitions,
    )


def sweep_configs(base: ExperimentConfig, axis: str, values: Sequence[int]) -> list[ExperimentConfig]:
    field_name = {"S": "scale", "N": "users"}.get(axis)
    if field_name is None:
        raise ValueError(f"sweep axis must be S or N, got {axis!r}")
    return [replace(base, **{field_name: v}) for v in values]


def run_mre_sweep(base: ExperimentConfig, axis: str, values: Sequence[int], workers: int = 1) -> list[ExperimentReport]:
    configs = sweep_configs(base, axis, values)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(run_experiment, configs))
    return [run_experiment(c) for c in configs]


def bench_timing(cfg: ExperimentConfig) -> dict[str, float]:
    rep = run_experiment(cfg)
    return {**rep.stage_times, "operator_per_slot": rep.operator_time_per_slot}


# --------------------------------------------------------------------------- export


def reports_csv(reports: Sequence[ExperimentReport], bench: bool = False) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.row(bench))
    return buf.getvalue()


def write_reports(reports: Sequence[ExperimentReport], path: str | Path, bench: bool = False) -> None:
    Path(path).write_text(reports_csv(reports, bench))


def summary(reports: Sequence[ExperimentReport]) -> str:
    lines = []
    for r in reports:
        c = r.config
        lines.append(
            f"{c.protocol.upper()} N={c.users} m={c.slots} S={c.scale}: MRE={r.mre:.4g} (pre-rounding {r.mre_pre_rounding:.4g}) "
            f"oracle-agreement={r.oracle_agreement:.0%} "
            f"traffic/user/slot={r.bytes_per_user_slot:.0f}B (1024-bit estimate {r.estimated_bytes_per_user_slot:.0f}B) "
            f"operator/slot={r.operator_time_per_slot * 1e3:.3f}ms"
        )
    return "\n".join(lines)


def config_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    for k in ("service_threshold", "demand_low", "demand_high"):
        d[k] = str(d[k])
    d["capacities"] = list(cfg.capacities)
    return d
