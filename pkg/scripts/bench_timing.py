"""Per-stage CPU time of each protocol as the number of users grows.

User times are averaged over users; operator times are per run.  Absolute
numbers depend on the machine, only the trend is meaningful.

    python scripts/bench_timing.py --bits 1024 --repetitions 3
"""

import argparse
import csv
from pathlib import Path

from ppcc.eval import experiments as X

COLUMNS = ("protocol", "N", "user_stage1", "user_stage2", "operator_stage1", "operator_stage2", "operator_per_slot")


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--bits", type=int, default=1024)
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--slots", type=int, default=48)
    p.add_argument("--users", default="4,8,12,16,20", help="comma-separated, each at least 2")
    p.add_argument("--out", default="results/timing.csv")
    a = p.parse_args()
    rows = []
    for protocol in ("ufs", "cfs", "css"):
        for n in (int(x) for x in a.users.split(",")):
            cfg = X.ExperimentConfig(
                protocol,
                users=n,
                slots=a.slots,
                repetitions=a.repetitions,
                key_bits=a.bits,
                capacities=(n // 2, n) if protocol == "cfs" else (),
                scale=10 if protocol == "css" else 100,
            )
            t = X.bench_timing(cfg)
            row = {"protocol": protocol, "N": n, **{k: f"{t.get(k, 0.0):.6f}" for k in COLUMNS[2:]}}
            rows.append(row)
            print(" ".join(f"{k}={row[k]}" for k in COLUMNS))
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
