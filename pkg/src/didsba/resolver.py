"""DID resolution over the VDR with an optional TTL cache.

The default policy performs one ledger read per ``resolve`` call. ``track``
opens a per-thread span that records how many reads and how much time the
calling thread spent resolving, which is how agents attribute resolution
cost to encapsulation or decapsulation.
"""

from __future__ import annotations

import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator

from didsba.errors import ValidationError
from didsba.identity import Did, DidDocument
from didsba.vdr import VerifiableDataRegistry


@dataclass(frozen=True)
class CachePolicy:
    mode: str = "none"
    ttl: float = 0.0  # seconds

    def __post_init__(self) -> None:
        if self.mode not in ("none", "ttl"):
            raise ValidationError(f"unknown cache mode {self.mode!r}")
        if self.mode == "ttl" and self.ttl <= 0:
            raise ValidationError("ttl must be > 0 in ttl mode")

    @classmethod
    def parse(cls, text: str) -> CachePolicy:
        """Accepts ``none`` or ``ttl:<seconds>``."""
        if text == "none":
            return cls()
        mode, _, secs = text.partition(":")
        if mode != "ttl" or not secs:
            raise ValidationError(f"cache policy must be 'none' or 'ttl:<secs>', got {text!r}")
        return cls("ttl", float(secs))

    def __str__(self) -> str:
        return "none" if self.mode == "none" else f"ttl:{self.ttl:g}"


@dataclass(frozen=True)
class ResolverMetrics:
    resolve_calls: int = 0
    ledger_reads: int = 0
    cache_hits: int = 0
    total_resolve_time: float = 0.0


@dataclass
class ResolutionSpan:
    calls: int = 0
    ledger_reads: int = 0
    cache_hits: int = 0
    elapsed: float = 0.0


class Resolver:
    def __init__(
        self,
        vdr: VerifiableDataRegistry,
        policy: CachePolicy | None = None,
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        self.vdr = vdr
        self.policy = policy or CachePolicy()
        self._clock = clock
        self._lock = threading.Lock()
        self._cache: dict[str, tuple[DidDocument, float]] = {}
        self._metrics = ResolverMetrics()
        self._local = threading.local()

    def resolve(self, did: Did | str) -> DidDocument:
        key = str(did)
        start = time.perf_counter()
        hit = False
        try:
            if self.policy.mode == "ttl":
                now = self._clock()
                with self._lock:
                    cached = self._cache.get(key)
                if cached is not None and now - cached[1] < self.policy.ttl:
                    hit = True
                    return cached[0]
            fetched_at = self._clock()
            document, _ = self.vdr.read_document(key)
            if self.policy.mode == "ttl":
                with self._lock:
                    self._cache[key] = (document, fetched_at)
            return document
        finally:
            self._record(hit, time.perf_counter() - start)

    def _record(self, hit: bool, elapsed: float) -> None:
        with self._lock:
            m = self._metrics
            self._metrics = ResolverMetrics(
                resolve_calls=m.resolve_calls + 1,
                ledger_reads=m.ledger_reads + (0 if hit else 1),
                cache_hits=m.cache_hits + (1 if hit else 0),
                total_resolve_time=m.total_resolve_time + elapsed,
            )
        for span in getattr(self._local, "spans", ()):
            span.calls += 1
            span.elapsed += elapsed
            if hit:
                span.cache_hits += 1
            else:
                span.ledger_reads += 1

    @contextmanager
    def track(self) -> Iterator[ResolutionSpan]:
        """Accumulate this thread's resolution activity for the duration of the block."""
        span = ResolutionSpan()
        spans = getattr(self._local, "spans", None)
        if spans is None:
            spans = self._local.spans = []
        spans.append(span)
        try:
            yield span
        finally:
            spans.remove(span)

    def snapshot_metrics(self) -> ResolverMetrics:
        with self._lock:
            return self._metrics

    def reset_metrics(self) -> None:
        with self._lock:
            self._metrics = ResolverMetrics()

    def clear_cache(self) -> None:
        with self._lock:
            self._cache.clear()
