"""Measured stage 1-2 traffic per user and slot, next to the 1024-bit estimate.

Message sizes are exact serialized lengths (hex-encoded JSON), so they sit
above the raw ciphertext-bit estimate.

    python scripts/traffic_report.py --bits 1024
"""

import argparse

from ppcc.eval import experiments as X


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--bits", type=int, default=1024)
    p.add_argument("--users", type=int, default=20)
    p.add_argument("--slots", type=int, default=48)
    a = p.parse_args()
    for protocol in ("ufs", "cfs", "css"):
        cfg = X.ExperimentConfig(
            protocol,
            users=a.users,
            slots=a.slots,
            repetitions=1,
            key_bits=a.bits,
            capacities=(a.users,) if protocol == "cfs" else (),
            scale=10 if protocol == "css" else 100,
        )
        r = X.run_experiment(cfg)
        print(
            f"{protocol.upper()}: {r.messages:.0f} messages, {r.total_bytes:.0f} bytes total, "
            f"{r.bytes_per_user_slot:.0f} B per user per slot (estimate {r.estimated_bytes_per_user_slot:.0f} B)"
        )


if __name__ == "__main__":
    main()
