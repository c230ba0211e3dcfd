"""Cumulative bytes on the wire per UE-registration step for v1, v2 and tls."""

import argparse
import csv
import sys
from pathlib import Path

from didsba import scenarios


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--script", type=Path, default=Path(__file__).with_name("ue_registration.json"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", type=Path, help="also write the curves here")
    args = ap.parse_args()

    script = scenarios.ScenarioScript.load(args.script)
    curves = {}
    for protocol in ("v1", "v2", "tls"):
        with scenarios.build_topology(protocol, seed=args.seed) as topo:
            result = scenarios.run_ue_registration(topo, script)
        if not result.completed:
            sys.exit(f"{protocol}: {result.failure}")
        curves[protocol] = result.cumulative_bytes

    print(f"{'step':>4}  {'label':<28}" + "".join(f"{p:>10}" for p in curves))
    for i, step in enumerate(script.steps):
        label = step.message_type.rsplit("/", 1)[-1]
        print(f"{i:>4}  {label:<28}" + "".join(f"{c[i]:>10}" for c in curves.values()))
    if args.csv:
        with args.csv.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", *curves])
            for i in range(len(script.steps)):
                w.writerow([i, *(c[i] for c in curves.values())])


if __name__ == "__main__":
    main()
