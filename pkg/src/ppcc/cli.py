"""``ppcc`` command line: key generation, protocol runs and evaluation sweeps.

Every flag can also be set through an environment variable named
``PPCC_<FLAG>`` (upper case, dashes as underscores), e.g. ``PPCC_SEED=7``.
Flags given on the command line win over the environment.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import secrets
import sys
from fractions import Fraction
from pathlib import Path

from ppcc import paillier
from ppcc.eval import experiments
from ppcc.protocols import ProtocolAbort, ProtocolConfig
from ppcc.protocols.parties import KeyMaterial, party_rng
from ppcc.protocols.runner import run
from ppcc.protocols.schedules import DemandSchedule, KnownCount, ScheduleError, UsageSchedule

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ABORT = 3

ENV_PREFIX = "PPCC_"


class InputError(Exception):
    pass


def _env(name: str, default=None):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), default)


def _add(p: argparse.ArgumentParser, flag: str, **kw):
    kw["default"] = _env(flag.lstrip("-"), kw.get("default"))
    p.add_argument(flag, **kw)


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def parse_sweep(text: str) -> tuple[str, list[int]]:
    """``S=1,10,100``, ``N=4..20`` or ``N=4..20:4``."""
    try:
        axis, spec = text.split("=", 1)
        axis = axis.strip().upper()
        if ".." in spec:
            rng, _, step = spec.partition(":")
            lo, hi = (int(x) for x in rng.split(".."))
            values = list(range(lo, hi + 1, int(step) if step else 1))
        else:
            values = _int_list(spec)
    except ValueError as e:
        raise InputError(f"bad sweep {text!r}: {e}") from e
    if axis not in ("S", "N") or not values:
        raise InputError(f"bad sweep {text!r}")
    return axis, values


def _seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    seed = secrets.randbits(32)
    print(f"seed: {seed}")
    return seed


# --------------------------------------------------------------------------- key files


def write_keys(keys: KeyMaterial, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "public.json"]
    written[0].write_text(json.dumps(keys.public.to_dict(), sort_keys=True, indent=2) + "\n")
    if keys.private is not None:
        p = out / "private.json"
        p.write_text(json.dumps(keys.private.to_dict(), sort_keys=True, indent=2) + "\n")
        written.append(p)
    for s in keys.shares:
        p = out / f"share_{s.index}.json"
        p.write_text(json.dumps(s.to_dict(), sort_keys=True, indent=2) + "\n")
        written.append(p)
    return written


def read_keys(directory: Path) -> KeyMaterial:
    pub = directory / "public.json"
    if not pub.exists():
        raise InputError(f"no public.json in {directory}")
    public = paillier.PublicKey.from_dict(json.loads(pub.read_text()))
    priv = directory / "private.json"
    if priv.exists():
        return KeyMaterial(public=public, private=paillier.PrivateKey.from_dict(json.loads(priv.read_text())))
    shares = sorted(
        (paillier.KeyShare.from_dict(json.loads(p.read_text())) for p in directory.glob("share_*.json")),
        key=lambda s: s.index,
    )
    if not shares:
        raise InputError(f"no private key or shares in {directory}")
    return KeyMaterial(public=public, shares=tuple(shares))


# --------------------------------------------------------------------------- schedules


def read_schedules(path: Path, protocol: str):
    try:
        rows = [r for r in csv.reader(path.read_text().splitlines()) if r and any(c.strip() for c in r)]
    except OSError as e:
        raise InputError(str(e)) from e
    try:
        if protocol == "css":
            return [DemandSchedule(i, [Fraction(c.strip()) for c in row]) for i, row in enumerate(rows, start=1)]
        return [UsageSchedule(i, [int(c) for c in row]) for i, row in enumerate(rows, start=1)]
    except (ValueError, ScheduleError) as e:
        raise InputError(f"{path}: {e}") from e


# --------------------------------------------------------------------------- commands


def cmd_keygen(args) -> int:
    bits = int(args.bits)
    users = int(args.users) if args.users is not None else 1
    t = int(args.threshold_t) if args.threshold_t is not None else None
    try:
        if args.key_mode == "threshold":
            if t is None:
                raise InputError("threshold mode needs --threshold-t")
            paillier.check_threshold_params(users, t)
        keys = KeyMaterial.generate(bits, args.key_mode, users, t, party_rng(_seed(args), "harness", "keys"))
    except paillier.PaillierError as e:
        raise InputError(str(e)) from e
    for p in write_keys(keys, Path(args.out_dir)):
        print(p)
    return EXIT_OK


def build_config(args, schedules) -> ProtocolConfig:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
    base["protocol"] = args.protocol or base.get("protocol")
    overrides = {
        "users": args.users,
        "slots": args.slots,
        "scale": args.scale,
        "service_threshold": args.threshold_C,
        "key_mode": args.key_mode,
        "threshold_t": args.threshold_t,
    }
    for k, v in overrides.items():
        if v is not None:
            base[k] = v
    if args.capacities is not None:
        base["capacities"] = _int_list(args.capacities)
    base.setdefault("users", len(schedules))
    base.setdefault("slots", schedules[0].slot_count if schedules else 0)
    for k in ("users", "slots", "scale", "threshold_t"):
        if base.get(k) is not None:
            base[k] = int(base[k])
    base["seed"] = _seed(args) if args.seed is not None or "seed" not in base else int(base["seed"])
    try:
        return ProtocolConfig.from_dict(base)
    except (TypeError, ValueError, paillier.PaillierError) as e:
        raise InputError(f"bad configuration: {e}") from e


def _frac(x: Fraction) -> str:
    return str(x)


def write_run_outputs(result, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    if cfg.protocol == "css":
        op = {"protocol": "css", "actions": list(result.operator_output.actions)}
        users = [
            {
                "user": r.user_id,
                "shares": [_frac(q) for q in r.fractions],
                "fee": _frac(r.fee),
                "residual_demand": _frac(r.residual),
            }
            for r in result.user_results
        ]
    else:
        key = "schedule" if cfg.protocol == "ufs" else "tiers"
        op = {"protocol": cfg.protocol, key: result.operator_output.schedule}
        users = [
            {
                "user": r.user_id,
                "counts": [e.count if isinstance(e, KnownCount) else None for e in r.entries],
                "fee": _frac(r.fee),
            }
            for r in result.user_results
        ]
        with open(out / "access_keys.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("user", "slot", "key"))
            for r in result.user_results:
                for slot, k in sorted(r.access_keys.items()):
                    w.writerow((r.user_id, slot, format(k, "x")))
    op["config"] = cfg.to_dict()
    (out / "operator_output.json").write_text(json.dumps(op, indent=2) + "\n")
    (out / "user_outputs.json").write_text(json.dumps(users, indent=2) + "\n")
    result.ledger.write_csv(out / "traffic.csv")
    (out / "trace.txt").write_text(b"\n".join(result.trace).decode() + "\n")


def cmd_run(args) -> int:
    protocol = args.protocol
    if protocol is None and args.config:
        protocol = json.loads(Path(args.config).read_text()).get("protocol")
    if protocol not in ("ufs", "cfs", "css"):
        raise InputError("--protocol must be one of ufs, cfs, css")
    args.protocol = protocol
    schedules = read_schedules(Path(args.input), protocol)
    config = build_config(args, schedules)
    if args.keys:
        keys = read_keys(Path(args.keys))
    else:
        keys = KeyMaterial.generate(
            int(args.bits), config.key_mode, config.users, config.threshold_t,
            party_rng(config.seed, "harness", "keys"),
        )
    paid = {int(i): False for i in _int_list(args.unpaid)} if args.unpaid else None
    try:
        result = run(config, keys, schedules, paid=paid)
    except ScheduleError as e:
        raise InputError(str(e)) from e
    except ValueError as e:
        raise InputError(str(e)) from e
    write_run_outputs(result, Path(args.out_dir))
    times = result.timing.by_major_stage()
    print(f"{protocol.upper()} run complete: {result.ledger.total_messages} messages, {result.ledger.total_bytes} bytes")
    for k in sorted(times):
        print(f"  {k}: {times[k]:.4f}s")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.protocol not in ("ufs", "cfs", "css"):
        raise InputError("--protocol must be one of ufs, cfs, css")
    base = experiments.ExperimentConfig(
        protocol=args.protocol,
        users=int(args.users) if args.users is not None else 20,
        slots=int(args.slots) if args.slots is not None else 48,
        scale=int(args.scale) if args.scale is not None else 100,
        service_threshold=Fraction(args.threshold_C) if args.threshold_C is not None else Fraction(100),
        capacities=tuple(_int_list(args.capacities)) if args.capacities else (),
        seed=_seed(args),
        repetitions=int(args.repetitions),
        key_bits=int(args.bits),
        key_mode=args.key_mode or "common",
        threshold_t=int(args.threshold_t) if args.threshold_t is not None else None,
    )
    axis, values = parse_sweep(args.sweep) if args.sweep else ("N", [base.users])
    try:
        reports = experiments.run_mre_sweep(base, axis, values, workers=int(args.workers))
    except ValueError as e:
        raise InputError(str(e)) from e
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    experiments.write_reports(reports, out / "report.csv", bench=args.bench)
    text = experiments.summary(reports)
    (out / "summary.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ppcc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    kg = sub.add_parser("keygen", help="generate a common key pair or threshold key shares")
    _add(kg, "--bits", default=str(paillier.DEFAULT_KEY_BITS))
    _add(kg, "--key-mode", choices=("common", "threshold"), default="common")
    _add(kg, "--users")
    _add(kg, "--threshold-t")
    _add(kg, "--seed")
    _add(kg, "--out-dir", default="keys")
    kg.set_defaults(func=cmd_keygen)

    rn = sub.add_parser("run", help="run one protocol end to end from a schedule CSV")
    _add(rn, "--protocol", choices=("ufs", "cfs", "css"))
    _add(rn, "--input", required=_env("input") is None)
    _add(rn, "--config")
    _add(rn, "--keys")
    _add(rn, "--bits", default=str(paillier.DEFAULT_KEY_BITS))
    _add(rn, "--users")
    _add(rn, "--slots")
    _add(rn, "--scale")
    _add(rn, "--threshold-C", dest="threshold_C")
    _add(rn, "--capacities")
    _add(rn, "--key-mode", choices=("common", "threshold"))
    _add(rn, "--threshold-t")
    _add(rn, "--unpaid", help="comma-separated users who did not pay")
    _add(rn, "--seed")
    _add(rn, "--out-dir", default="out")
    rn.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="MRE / timing / traffic sweeps")
    _add(ev, "--protocol", choices=("ufs", "cfs", "css"), default="ufs")
    _add(ev, "--sweep", help="S=1,10,100 or N=4..20[:step]")
    _add(ev, "--users")
    _add(ev, "--slots")
    _add(ev, "--scale")
    ev.add_argument("--S", dest="scale", help=argparse.SUPPRESS)
    _add(ev, "--threshold-C", dest="threshold_C")
    _add(ev, "--capacities")
    _add(ev, "--key-mode", choices=("common", "threshold"))
    _add(ev, "--threshold-t")
    _add(ev, "--repetitions", default="20")
    _add(ev, "--bits", default=str(paillier.DEFAULT_KEY_BITS))
    _add(ev, "--workers", default="1")
    _add(ev, "--seed")
    _add(ev, "--out-dir", default="eval-out")
    ev.add_argument("--bench", action="store_true", default=_env("bench") not in (None, "", "0"))
    ev.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ProtocolAbort as e:
        print(f"protocol aborted at stage {e.stage}: {e.reason}", file=sys.stderr)
        return EXIT_ABORT
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
