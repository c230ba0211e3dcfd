"""Message count at which cumulative v2 bytes overtake v1 on one AMF->SMF channel."""

import argparse

from didsba import scenarios


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=40)
    ap.add_argument("--payload-size", type=int, default=scenarios.MEAN_PAYLOAD)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    runs = {}
    for protocol in ("v1", "v2"):
        with scenarios.build_topology(protocol, seed=args.seed) as topo:
            runs[protocol] = scenarios.repeat_messages(topo, args.count, args.payload_size)

    handshake = runs["v1"].handshake_bytes
    o1, o2 = scenarios.envelope_overhead(runs["v1"]), scenarios.envelope_overhead(runs["v2"])
    print(f"v1 handshake {handshake} B, per-message overhead v1 {o1} B, v2 {o2} B")
    print(f"predicted crossover: message {scenarios.predicted_crossover(handshake, o1, o2)}")
    print(f"observed crossover:  message {scenarios.crossover(runs['v1'], runs['v2'])}")
    for i, (a, b) in enumerate(zip(runs["v1"].cumulative_bytes, runs["v2"].cumulative_bytes), start=1):
        print(f"{i:>4} {a:>10} {b:>10} {b - a:>+8}")


if __name__ == "__main__":
    main()
