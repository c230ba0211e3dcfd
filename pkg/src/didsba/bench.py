"""Benchmark driver: latency breakdowns and byte ledgers for v1, v2 and tls.

Each protocol gets a fresh topology. The scenario runs once as a warm-up,
which also supplies the byte ledger (so v1's DID Exchange is on it), then
``iterations`` more times; every delivery receipt from those runs feeds the
latency aggregates.

    bench --protocols v1,v2,tls --scenario ue-registration --iterations 10 \\
          --resolver-delay-ms 14 --cache none --seed 0 --out results.md --format md
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import gc
import json
import statistics
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterator, Sequence

from didsba import scenarios
from didsba.agent import Agent, DeliveryReceipt, PROTOCOLS
from didsba.errors import DeliveryError, HandshakeError, ValidationError
from didsba.resolver import CachePolicy

SCHEMA_VERSION = 1
SCENARIOS = ("ue-registration", "sm-context", "repeat")
FORMATS = ("csv", "json", "md")
PHASES = ("total", "encapsulation", "decapsulation", "network_and_other", "encap_resolution", "decap_resolution")
STATISTICS = ("mean", "median", "min", "max")


@dataclass(frozen=True)
class BenchConfig:
    protocols: tuple[str, ...] = PROTOCOLS
    scenario: str = "ue-registration"
    iterations: int = 10
    resolver_delay: float = 0.014
    cache: CachePolicy = field(default_factory=CachePolicy)
    seed: int = 0
    output: Path | None = None
    format: str = "md"
    script: scenarios.ScenarioScript = scenarios.UE_REGISTRATION
    payload_size: int = scenarios.MEAN_PAYLOAD  # repeat scenario only
    messages: int = 1  # repeat scenario only

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if not self.protocols or any(p not in PROTOCOLS for p in self.protocols):
            raise ValidationError(f"protocols must be a non-empty subset of {PROTOCOLS}")
        if self.scenario not in SCENARIOS:
            raise ValidationError(f"scenario must be one of {SCENARIOS}")
        if self.format not in FORMATS:
            raise ValidationError(f"format must be one of {FORMATS}")
        if self.resolver_delay < 0 or self.messages < 1 or self.payload_size < 0:
            raise ValidationError("resolver_delay, messages and payload_size must be non-negative (messages >= 1)")


@dataclass(frozen=True)
class PhaseStats:
    mean: float
    median: float
    min: float
    max: float

    @classmethod
    def of(cls, values: Sequence[float]) -> PhaseStats:
        if not values:
            return cls(0.0, 0.0, 0.0, 0.0)
        return cls(statistics.fmean(values), statistics.median(values), min(values), max(values))


@dataclass(frozen=True)
class LatencyBreakdown:
    """Per-message phase statistics in seconds; ledger reads are per-message means."""

    protocol: str
    iterations: int
    samples: int
    total: PhaseStats
    encapsulation: PhaseStats
    decapsulation: PhaseStats
    network_and_other: PhaseStats
    encap_resolution: PhaseStats
    decap_resolution: PhaseStats
    encap_ledger_reads: float
    decap_ledger_reads: float

    @property
    def ledger_reads(self) -> float:
        return self.encap_ledger_reads + self.decap_ledger_reads

    @classmethod
    def from_receipts(cls, protocol: str, iterations: int, receipts: Sequence[DeliveryReceipt]) -> LatencyBreakdown:
        def stats(attr: str) -> PhaseStats:
            return PhaseStats.of([getattr(r, attr) for r in receipts])

        n = max(len(receipts), 1)
        return cls(
            protocol,
            iterations,
            len(receipts),
            stats("total"),
            stats("encapsulation"),
            stats("decapsulation"),
            stats("network_and_other"),
            stats("encap_resolution_time"),
            stats("decap_resolution_time"),
            sum(r.encap_ledger_reads for r in receipts) / n,
            sum(r.decap_ledger_reads for r in receipts) / n,
        )

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> LatencyBreakdown:
        d = dict(d)
        for phase in PHASES:
            d[phase] = PhaseStats(**d[phase])
        return cls(**d)


@dataclass(frozen=True)
class LedgerStep:
    index: int
    label: str
    step_bytes: int
    cumulative_bytes: int


@dataclass(frozen=True)
class ByteLedger:
    protocol: str
    steps: tuple[LedgerStep, ...]
    handshake_bytes: int = 0

    @classmethod
    def from_result(cls, result: scenarios.ScenarioResult) -> ByteLedger:
        steps = tuple(LedgerStep(s.index, s.label, s.step_bytes, s.cumulative_bytes) for s in result.steps)
        return cls(result.protocol, steps, result.handshake_bytes if result.protocol == "v1" else 0)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ByteLedger:
        return cls(d["protocol"], tuple(LedgerStep(**s) for s in d["steps"]), d["handshake_bytes"])

    @property
    def cumulative(self) -> list[int]:
        return [s.cumulative_bytes for s in self.steps]

    def prefix_sums_hold(self) -> bool:
        running = 0
        for s in self.steps:
            running += s.step_bytes
            if running != s.cumulative_bytes:
                return False
        return True


@dataclass
class BenchResults:
    config: dict[str, Any]
    latency: dict[str, LatencyBreakdown] = field(default_factory=dict)
    ledgers: dict[str, ByteLedger] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "config": self.config,
            "latency": {p: asdict(b) for p, b in self.latency.items()},
            "ledgers": {p: asdict(l) for p, l in self.ledgers.items()},
            "failures": self.failures,
            "violations": self.violations,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> BenchResults:
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValidationError(f"unsupported results schema {d.get('schema_version')!r}")
        return cls(
            d["config"],
            {p: LatencyBreakdown.from_dict(b) for p, b in d["latency"].items()},
            {p: ByteLedger.from_dict(l) for p, l in d["ledgers"].items()},
            dict(d["failures"]),
            list(d["violations"]),
        )

    @property
    def ok(self) -> bool:
        return not self.failures and not self.violations


def _config_summary(config: BenchConfig) -> dict[str, Any]:
    return {
        "protocols": list(config.protocols),
        "scenario": config.scenario,
        "script": config.script.name,
        "iterations": config.iterations,
        "resolver_delay": config.resolver_delay,
        "cache": str(config.cache),
        "seed": config.seed,
        "payload_size": config.payload_size,
        "messages": config.messages,
    }


def _run_once(config: BenchConfig, topology: scenarios.Topology) -> scenarios.ScenarioResult:
    if config.scenario == "ue-registration":
        return scenarios.run_ue_registration(topology, config.script, seed=config.seed)
    if config.scenario == "sm-context":
        return scenarios.run_sm_context(topology)
    return scenarios.repeat_messages(topology, config.messages, config.payload_size, seed=config.seed)


def _receipt_violations(protocol: str, receipts: Sequence[DeliveryReceipt], cache: CachePolicy) -> list[str]:
    out = []
    for r in receipts:
        if not r.timestamps.is_monotone():
            out.append(f"{protocol}: receipt {r.receipt_id} has out-of-order phase timestamps")
        if min(r.encapsulation, r.decapsulation, r.network_and_other) < 0:
            out.append(f"{protocol}: receipt {r.receipt_id} has a negative phase duration")
        reads = (r.encap_ledger_reads, r.decap_ledger_reads)
        if protocol == "v2" and cache.mode == "none" and reads != (2, 2):
            out.append(f"{protocol}: receipt {r.receipt_id} made {reads} ledger reads, expected (2, 2)")
        if protocol in ("v1", "tls") and (sum(reads) or r.handshake_ledger_reads or r.handshake_bytes):
            out.append(f"{protocol}: steady-state receipt {r.receipt_id} touched the ledger or handshook")
    return out


@contextlib.contextmanager
def _collector_paused() -> Iterator[None]:
    # a full collection in a large host process stalls one message by 10-20 ms
    gc.collect()
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was_enabled:
            gc.enable()


def run_bench(config: BenchConfig) -> BenchResults:
    results = BenchResults(_config_summary(config))
    for protocol in config.protocols:
        try:
            topology = scenarios.build_topology(protocol, seed=config.seed, resolver_delay=config.resolver_delay, cache=config.cache)
        except Exception as exc:  # a protocol that cannot start is reported, the others still run
            results.failures[protocol] = f"startup: {type(exc).__name__}: {exc}"
            continue
        with topology:
            warmup = _run_once(config, topology)
            results.ledgers[protocol] = ByteLedger.from_result(warmup)
            if not warmup.completed:
                results.failures[protocol] = f"warm-up: {warmup.failure}"
                continue
            receipts: list[DeliveryReceipt] = []
            with _collector_paused():
                for i in range(config.iterations):
                    run = _run_once(config, topology)
                    receipts.extend(run.receipts)
                    if not run.completed:
                        results.failures[protocol] = f"iteration {i + 1}: {run.failure}"
                        break
            results.latency[protocol] = LatencyBreakdown.from_receipts(protocol, config.iterations, receipts)
            results.violations.extend(_receipt_violations(protocol, receipts, config.cache))
        ledger = results.ledgers[protocol]
        if not ledger.prefix_sums_hold():
            results.violations.append(f"{protocol}: byte ledger cumulative column is not the prefix sum of step bytes")
    return results


# reports -------------------------------------------------------------


def _bytes_path(path: Path) -> Path:
    return path.with_name(path.stem + ".bytes.csv")


def report(results: BenchResults, fmt: str, path: str | Path) -> Path:
    """Write ``results`` as csv (plus a ``.bytes.csv`` ledger), json or markdown."""
    if not results.latency and not results.ledgers:
        raise ValidationError("nothing to report")
    path = Path(path)
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["schema_version", "protocol", "phase", "statistic", "value"])
            for protocol, b in results.latency.items():
                for phase in PHASES:
                    stats = getattr(b, phase)
                    for stat in STATISTICS:
                        w.writerow([SCHEMA_VERSION, protocol, phase, stat, repr(getattr(stats, stat))])
                w.writerow([SCHEMA_VERSION, protocol, "encap_ledger_reads", "mean", repr(b.encap_ledger_reads)])
                w.writerow([SCHEMA_VERSION, protocol, "decap_ledger_reads", "mean", repr(b.decap_ledger_reads)])
        with _bytes_path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["schema_version", "protocol", "step", "label", "step_bytes", "cumulative_bytes", "handshake_bytes"])
            for protocol, ledger in results.ledgers.items():
                for s in ledger.steps:
                    w.writerow([SCHEMA_VERSION, protocol, s.index, s.label, s.step_bytes, s.cumulative_bytes, ledger.handshake_bytes])
    elif fmt == "json":
        path.write_text(json.dumps(results.to_dict(), indent=2))
    elif fmt == "md":
        path.write_text(render_markdown(results))
    else:
        raise ValidationError(f"format must be one of {FORMATS}")
    return path


def load_json(path: str | Path) -> BenchResults:
    return BenchResults.from_dict(json.loads(Path(path).read_text()))


def render_markdown(results: BenchResults) -> str:
    c = results.config
    lines = [
        f"# {c['scenario']} ({c['iterations']} iterations, resolver delay {c['resolver_delay'] * 1000:g} ms, cache {c['cache']}, seed {c['seed']})",
        "",
        "Mean per-message time in ms; resolution time is the share of the phase spent reading the ledger.",
        "",
        "| protocol | total | encapsulation | (resolution) | decapsulation | (resolution) | network and other | ledger reads |",
        "|---|---:|---:|---:|---:|---:|---:|---:|",
    ]
    for p, b in results.latency.items():
        ms = [x.mean * 1000 for x in (b.total, b.encapsulation, b.encap_resolution, b.decapsulation, b.decap_resolution, b.network_and_other)]
        lines.append(f"| {p} | " + " | ".join(f"{v:.2f}" for v in ms) + f" | {b.ledger_reads:g} |")
    lines += ["", "Cumulative bytes on the wire per step (first run, handshakes included).", ""]
    protocols = list(results.ledgers)
    lines.append("| step | " + " | ".join(protocols) + " |")
    lines.append("|---|" + "---:|" * len(protocols))
    depth = max((len(l.steps) for l in results.ledgers.values()), default=0)
    for i in range(depth):
        cells = [str(l.steps[i].cumulative_bytes) if i < len(l.steps) else "" for l in results.ledgers.values()]
        label = next(l.steps[i].label for l in results.ledgers.values() if i < len(l.steps))
        lines.append(f"| {i} {label} | " + " | ".join(cells) + " |")
    if results.failures or results.violations:
        lines += ["", "## Problems", ""]
        lines += [f"- {p}: {msg}" for p, msg in results.failures.items()]
        lines += [f"- {msg}" for msg in results.violations]
    return "\n".join(lines) + "\n"


# tls baseline ----------------------------------------------------------


@dataclass
class TlsSession:
    """One mutually authenticated channel from ``sender`` to ``receiver``, opened once."""

    sender: Agent
    receiver: Agent
    handshake_bytes: int
    handshake_time: float
    receipts: list[DeliveryReceipt] = field(default_factory=list)

    def send(self, message_type: str, body: bytes) -> DeliveryReceipt:
        receipt = self.sender.send(self.receiver.did, message_type, body)
        self.receipts.append(receipt)
        return receipt

    @property
    def per_message(self) -> LatencyBreakdown:
        return LatencyBreakdown.from_receipts("tls", 1, self.receipts)


def tls_baseline_session(a: Agent, b: Agent) -> TlsSession:
    """Open (or reuse) ``a``'s channel to ``b``; raises HandshakeError if either certificate is rejected."""
    if a.protocol != "tls" or b.protocol != "tls":
        raise ValidationError("tls_baseline_session needs two tls agents")
    conn = a.connection_to(str(b.did))
    if conn.connected:
        return TlsSession(a, b, 0, 0.0)
    handshake_bytes = conn.connect()
    # with TLS 1.3 the server's verdict on our certificate only arrives with the first response
    try:
        probe = conn.post(b"", "application/json", "/health")
    except DeliveryError as exc:
        conn.close()
        raise HandshakeError(f"{b.config.nf_name} rejected the channel: {exc}") from exc
    if probe.status != 200:
        raise HandshakeError(f"{b.config.nf_name} answered the channel probe with HTTP {probe.status}")
    return TlsSession(a, b, handshake_bytes, conn.handshake_time)


# CLI -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description="Compare DIDComm v1, DIDComm v2 and mutual TLS between simulated 5G core NFs.")
    p.add_argument("--protocols", default="v1,v2,tls", help="comma-separated subset of v1,v2,tls")
    p.add_argument("--scenario", choices=SCENARIOS, default="ue-registration")
    p.add_argument("--script", type=Path, help="JSON scenario script for ue-registration (default: built-in 5-step script)")
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--resolver-delay-ms", type=float, default=14.0)
    p.add_argument("--cache", default="none", help="none or ttl:<seconds>")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--payload-size", type=int, default=scenarios.MEAN_PAYLOAD, help="repeat scenario message size")
    p.add_argument("--messages", type=int, default=1, help="repeat scenario messages per iteration")
    p.add_argument("--out", type=Path, help="output file (default: markdown on stdout)")
    p.add_argument("--format", choices=FORMATS, default="md")
    return p


def config_from_args(args: argparse.Namespace) -> BenchConfig:
    return BenchConfig(
        protocols=tuple(p.strip() for p in args.protocols.split(",") if p.strip()),
        scenario=args.scenario,
        iterations=args.iterations,
        resolver_delay=args.resolver_delay_ms / 1000.0,
        cache=CachePolicy.parse(args.cache),
        seed=args.seed,
        output=args.out,
        format=args.format,
        script=scenarios.ScenarioScript.load(args.script) if args.script else scenarios.UE_REGISTRATION,
        payload_size=args.payload_size,
        messages=args.messages,
    )


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
    except (ValidationError, ValueError, OSError) as exc:
        parser.error(str(exc))
    if config.output is None and config.format == "csv":
        parser.error("--format csv needs --out")
    results = run_bench(config)
    if config.output is None:
        sys.stdout.write(render_markdown(results) if config.format == "md" else json.dumps(results.to_dict(), indent=2) + "\n")
    else:
        try:
            report(results, config.format, config.output)
        except (OSError, ValidationError) as exc:
            print(f"bench: cannot write report: {exc}", file=sys.stderr)
            return 2
    for protocol, msg in results.failures.items():
        print(f"bench: {protocol} failed: {msg}", file=sys.stderr)
    for msg in results.violations:
        print(f"bench: invariant violated: {msg}", file=sys.stderr)
    return 0 if results.ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
