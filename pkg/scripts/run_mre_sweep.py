"""Reproduce the accuracy study: MRE against the scaling factor S and the user count N.

Writes one CSV per sweep into --out-dir and prints a summary.

    python scripts/run_mre_sweep.py --bits 1024 --repetitions 20
    python scripts/run_mre_sweep.py --bits 256 --repetitions 5   # quick look
"""

import argparse
from dataclasses import replace
from pathlib import Path

from ppcc.eval import experiments as X


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--bits", type=int, default=1024)
    p.add_argument("--repetitions", type=int, default=20)
    p.add_argument("--slots", type=int, default=48)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default="results/mre")
    a = p.parse_args()
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    for protocol in ("ufs", "css"):
        base = X.ExperimentConfig(protocol, slots=a.slots, repetitions=a.repetitions, key_bits=a.bits, seed=a.seed)
        # MRE vs S at N=20
        reports = X.run_mre_sweep(base, "S", [1, 10, 100, 1000], workers=a.workers)
        X.write_reports(reports, out / f"{protocol}_vs_S.csv")
        print(X.summary(reports))
        # MRE vs N at S=1 and at the smallest zero-error scale
        for scale in (1, 100 if protocol == "ufs" else 10):
            reports = X.run_mre_sweep(replace(base, scale=scale), "N", range(4, 21, 4), workers=a.workers)
            X.write_reports(reports, out / f"{protocol}_vs_N_S{scale}.csv")
            print(X.summary(reports))


if __name__ == "__main__":
    main()
