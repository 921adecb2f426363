"""Run every scenario with and without its characteristic faults and print the decision tables.

    python scripts/run_all_scenarios.py [--seed N] [--out DIR]
"""

import argparse
from pathlib import Path

from telcotrust.pipeline import DEFAULT_SEED
from telcotrust.scenarios import Fault, build_scenario, inject_fault, run_scenario

RUNS = [
    ("oru-trust", []),
    ("oru-trust", ["ManoOnlyLoss:nfvi-1"]),
    ("oru-trust", ["TamperFirmware:oru-1"]),
    ("oru-trust", ["SignerKeyLeak:oru-1"]),
    ("oru-trust", ["StaleNonceReplay:oru-1"]),
    ("odu-trust", []),
    ("odu-trust", ["TamperFirmware:nfvi-2"]),
    ("odu-trust", ["NetworkCut:oru-1"]),
    ("odu-confidential", []),
    ("odu-confidential", ["TamperFirmware:nfvi-2"]),
    ("odu-confidential", ["MoveEnclaveOffHost:enc-1"]),
]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=lambda s: int(s, 0), default=DEFAULT_SEED)
    ap.add_argument("--out", type=Path, default=None, help="also write each JSON report here")
    args = ap.parse_args()
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
    for name, faults in RUNS:
        s = build_scenario(name, args.seed)
        for f in faults:
            s = inject_fault(s, Fault.parse(f))
        report = run_scenario(s)
        label = name + ("" if not faults else " + " + ", ".join(faults))
        print(f"== {label}")
        print(report.to_table())
        if args.out:
            stem = "_".join([name] + [f.replace(":", "-") for f in faults])
            (args.out / f"{stem}.json").write_text(report.to_json(), encoding="utf-8")


if __name__ == "__main__":
    main()
