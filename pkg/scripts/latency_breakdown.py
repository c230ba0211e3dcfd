"""Per-message phase decomposition at the mean payload, with and without a resolver cache."""

import argparse

from didsba.bench import BenchConfig, render_markdown, run_bench
from didsba.resolver import CachePolicy


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--iterations", type=int, default=10)
    ap.add_argument("--resolver-delay-ms", type=float, default=14.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    for cache in ("none", "ttl:60"):
        config = BenchConfig(
            scenario="repeat",
            iterations=args.iterations,
            resolver_delay=args.resolver_delay_ms / 1000,
            cache=CachePolicy.parse(cache),
            seed=args.seed,
        )
        results = run_bench(config)
        print(render_markdown(results))
        v2 = results.latency.get("v2")
        if v2 and v2.encapsulation.mean > 0:
            print(
                f"v2 resolution share: encapsulation {v2.encap_resolution.mean / v2.encapsulation.mean:.0%}, "
                f"decapsulation {v2.decap_resolution.mean / v2.decapsulation.mean:.0%}\n"
            )


if __name__ == "__main__":
    main()
