"""Region-scoped background power sampler.

Lifecycle::

    handle = init(SamplerConfig(source=..., output_path="run.csv"))
    handle.region_start("gemm")
    run_kernel()
    handle.region_stop("gemm")
    summary = handle.finalize()

A single background thread polls the source every ``period_ms`` while a
region is active and idles otherwise. Samples are buffered and appended to
the log whenever the buffer fills, and once more at finalize.

With a :class:`VirtualClock` no thread is started: sampling is driven by
``clock.advance()``, which makes the produced log fully deterministic.
"""

from __future__ import annotations

import bisect
import heapq
import itertools
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .errors import DomainError, LifecycleError, NestingError, SourceError, SourceExhausted
from .sources import PowerSource, PowerSourceSpec, RaplSource, open_source

logger = logging.getLogger(__name__)

LOG_MAGIC = "# wattline-log v1"


class MonotonicClock:
    """Microseconds since construction, from ``time.monotonic_ns``."""

    def __init__(self):
        self._base = time.monotonic_ns()
        self.epoch_unix_us = time.time_ns() // 1000

    def now_us(self) -> int:
        return (time.monotonic_ns() - self._base) // 1000


class VirtualClock:
    """Manually advanced clock with a tiny timer queue.

    ``advance`` fires every timer due within the step, in order, with the
    clock set to each timer's due time.
    """

    def __init__(self, start_us: int = 0, epoch_unix_us: int = 0):
        self._now = start_us
        self.epoch_unix_us = epoch_unix_us
        self._timers: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = itertools.count()

    def now_us(self) -> int:
        return self._now

    def call_at(self, t_us: int, callback: Callable[[], None]) -> None:
        heapq.heappush(self._timers, (t_us, next(self._seq), callback))

    def advance(self, delta_us: int) -> None:
        if delta_us < 0:
            raise ValueError("cannot move a clock backwards")
        target = self._now + delta_us
        while self._timers and self._timers[0][0] <= target:
            due, _, callback = heapq.heappop(self._timers)
            self._now = max(self._now, due)
            callback()
        self._now = target


Clock = Union[MonotonicClock, VirtualClock]


@dataclass(frozen=True)
class SamplerConfig:
    source: PowerSourceSpec
    output_path: Union[str, os.PathLike]
    period_ms: float = 2.0
    buffer_capacity: int = 4096

    def __post_init__(self):
        if not self.period_ms >= 1:
            raise DomainError(f"sampling period must be at least 1 ms, got {self.period_ms!r}")
        if self.buffer_capacity < 1:
            raise DomainError(f"buffer capacity must be at least 1, got {self.buffer_capacity!r}")

    @property
    def period_us(self) -> int:
        return int(round(self.period_ms * 1000))


@dataclass(frozen=True)
class PowerSample:
    t_us: int
    p_mw: float


@dataclass(frozen=True)
class RegionEvent:
    kind: str  # "begin" | "end"
    name: str
    t_us: int


@dataclass(frozen=True)
class LogSummary:
    sample_count: int
    region_count: int
    dropped_samples: int
    flush_count: int = 0
    truncated: bool = False
    source_errors: int = 0
    source_exhausted: bool = False
    first_error: Optional[str] = None


def format_header(period_us: int, source_kind: str, epoch_unix_us: int) -> str:
    return f"{LOG_MAGIC}, period_us={period_us}, source={source_kind}, epoch_unix_us={epoch_unix_us}\n"


def _check_region_name(name: str) -> None:
    if not name or "," in name or "\n" in name or "\r" in name:
        raise DomainError(f"region name must be non-empty without commas or newlines: {name!r}")


@dataclass
class _Buffer:
    # entries are (t_us, is_sample, line); kept sorted by t_us
    entries: list = field(default_factory=list)
    samples: int = 0


class Sampler:
    """Handle returned by :func:`init`. Owned by one application thread at a time."""

    def __init__(self, config: SamplerConfig, clock: Optional[Clock] = None, source: Optional[PowerSource] = None):
        self.config = config
        self._clock = clock if clock is not None else MonotonicClock()
        self._virtual = isinstance(self._clock, VirtualClock)
        self._origin = self._clock.now_us()
        self._source = source if source is not None else open_source(config.source)
        if isinstance(self._source, RaplSource):
            # prime the counter so in-region reads are real deltas
            self._source.read(0)

        self._file = open(config.output_path, "w", encoding="utf-8", newline="\n")
        self._file.write(format_header(config.period_us, self._source.kind, self._clock.epoch_unix_us))
        self._file.flush()

        self._lock = threading.Lock()
        self._wake = threading.Event()
        self._buffer = _Buffer()
        self._last_t = -1
        self._active: Optional[str] = None
        self._generation = 0
        self._stopping = False
        self._finalized = False

        self._sample_count = 0
        self._region_count = 0
        self._dropped = 0
        self._flushes = 0
        self._source_errors = 0
        self._first_error: Optional[str] = None
        self._exhausted = False

        self._thread: Optional[threading.Thread] = None
        if not self._virtual:
            self._thread = threading.Thread(target=self._run, name="wattline-sampler", daemon=True)
            self._thread.start()

    # -- application side --------------------------------------------------

    @property
    def active_region(self) -> Optional[str]:
        return self._active

    def region_start(self, name: str) -> None:
        _check_region_name(name)
        with self._lock:
            self._check_open()
            if self._active is not None:
                raise NestingError(f"region {name!r} started while {self._active!r} is active")
            t = self._stamp()
            self._append(t, False, f"B,{t},{name}\n")
            self._active = name
            self._generation += 1
            generation = self._generation
        if self._virtual:
            self._clock.call_at(self._clock.now_us(), lambda: self._virtual_tick(generation))
        else:
            self._wake.set()

    def region_stop(self, name: str) -> None:
        with self._lock:
            self._check_open()
            if self._active is None:
                raise LifecycleError(f"region_stop({name!r}) with no active region")
            if self._active != name:
                raise LifecycleError(f"region_stop({name!r}) but active region is {self._active!r}")
            t = self._stamp()
            self._append(t, False, f"E,{t},{name}\n")
            self._active = None
            self._region_count += 1

    def region(self, name: str) -> "_RegionContext":
        return _RegionContext(self, name)

    def finalize(self) -> LogSummary:
        with self._lock:
            self._check_open()
            self._stopping = True
        self._wake.set()
        if self._thread is not None:
            self._thread.join()
        with self._lock:
            truncated = False
            if self._active is not None:
                t = self._stamp()
                self._append(t, False, f"E,{t},{self._active}\n")
                logger.warning("finalize closed active region %r", self._active)
                self._active = None
                self._region_count += 1
                truncated = True
            self._flush()
            self._finalized = True
            self._file.close()
            self._source.close()
        return LogSummary(
            sample_count=self._sample_count,
            region_count=self._region_count,
            dropped_samples=self._dropped,
            flush_count=self._flushes,
            truncated=truncated,
            source_errors=self._source_errors,
            source_exhausted=self._exhausted,
            first_error=self._first_error,
        )

    def __enter__(self) -> "Sampler":
        return self

    def __exit__(self, *exc) -> None:
        if not self._finalized:
            self.finalize()

    # -- internals -----------------------------------------------------------

    def _check_open(self) -> None:
        if self._finalized or self._stopping:
            raise LifecycleError("sampler already finalized")

    def _stamp(self) -> int:
        # caller holds the lock; log timestamps are strictly increasing
        t = self._clock.now_us() - self._origin
        if t <= self._last_t:
            t = self._last_t + 1
        self._last_t = t
        return t

    def _append(self, t: int, is_sample: bool, line: str) -> None:
        entries = self._buffer.entries
        if not entries or entries[-1][0] < t:
            entries.append((t, is_sample, line))
        else:
            # a sample stamped before an event that was logged while the read was in flight
            bisect.insort(entries, (t, is_sample, line), key=lambda e: e[0])
        if is_sample:
            self._buffer.samples += 1

    def _flush(self) -> None:
        buf = self._buffer
        if not buf.entries:
            return
        try:
            self._file.write("".join(e[2] for e in buf.entries))
            self._file.flush()
            self._flushes += 1
        except OSError as exc:
            self._dropped += buf.samples
            self._sample_count -= buf.samples
            logger.error("log flush failed, dropped %d samples: %s", buf.samples, exc)
        self._buffer = _Buffer()

    def _take_sample(self) -> Optional[int]:
        """One poll. Returns the sample timestamp, or None when nothing was taken."""
        with self._lock:
            if self._active is None or self._stopping or self._exhausted:
                return None
            t = self._stamp()
        try:
            p = self._source.read(t)
        except SourceExhausted as exc:
            with self._lock:
                self._exhausted = True
                self._first_error = self._first_error or str(exc)
            logger.warning("power source exhausted: %s", exc)
            return None
        except SourceError as exc:
            with self._lock:
                self._source_errors += 1
                self._first_error = self._first_error or str(exc)
            logger.warning("power read failed: %s", exc)
            return t
        if getattr(self._source, "warmup", False):
            return t
        with self._lock:
            self._append(t, True, f"S,{t},{max(0, int(round(p)))}\n")
            self._sample_count += 1
            if self._buffer.samples >= self.config.buffer_capacity:
                self._flush()
        return t

    def _run(self) -> None:
        period = self.config.period_us
        while True:
            self._wake.clear()
            if self._stopping:
                return
            if self._active is None:
                # idle: poll the flag once per period
                self._wake.wait(period / 1e6)
                continue
            t = self._take_sample()
            if t is None:
                self._wake.wait(period / 1e6)
                continue
            deadline = t + period
            while not self._stopping:
                remaining = deadline - (self._clock.now_us() - self._origin)
                if remaining <= 0 or self._wake.wait(remaining / 1e6):
                    break

    def _virtual_tick(self, generation: int) -> None:
        if generation != self._generation or self._active is None or self._stopping:
            return
        t = self._take_sample()
        if t is None:
            return
        self._clock.call_at(self._origin + t + self.config.period_us, lambda: self._virtual_tick(generation))


class _RegionContext:
    def __init__(self, sampler: Sampler, name: str):
        self.sampler = sampler
        self.name = name

    def __enter__(self):
        self.sampler.region_start(self.name)
        return self.sampler

    def __exit__(self, *exc):
        self.sampler.region_stop(self.name)


def init(config: SamplerConfig, clock: Optional[Clock] = None) -> Sampler:
    """Open the source and log file and start the (idle) sampling activity."""
    return Sampler(config, clock=clock)
