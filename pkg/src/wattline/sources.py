"""Power sources the sampler can poll.

Each source answers ``read(t_us)`` with an instantaneous power in milliwatts,
where ``t_us`` is the sampler's time base (microseconds since init). Sources
that need real hardware (RAPL counters, vendor query tools) are wrapped by
file or subprocess reads so they can be exercised with fixtures.
"""

from __future__ import annotations

import math
import os
import shlex
import shutil
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from .errors import DomainError, SourceError, SourceExhausted, SourceInitError

COMMAND_TIMEOUT_S = 0.1
DEFAULT_RAPL_RANGE_UJ = 2**32
DEFAULT_TRACE_HOLD_US = 1_000_000


# -- synthetic waveforms ---------------------------------------------------


@dataclass(frozen=True)
class Constant:
    p_mw: float

    def __post_init__(self):
        if not self.p_mw >= 0:
            raise DomainError(f"constant power must be non-negative, got {self.p_mw!r}")

    def __call__(self, t_us: float) -> float:
        return self.p_mw


@dataclass(frozen=True)
class Ramp:
    """Linear from ``p0_mw`` to ``p1_mw`` over ``duration_us``, then held at ``p1_mw``."""

    p0_mw: float
    p1_mw: float
    duration_us: float

    def __post_init__(self):
        if not (self.p0_mw >= 0 and self.p1_mw >= 0):
            raise DomainError("ramp endpoints must be non-negative")
        if not self.duration_us > 0:
            raise DomainError("ramp duration must be positive")

    def __call__(self, t_us: float) -> float:
        frac = min(max(t_us / self.duration_us, 0.0), 1.0)
        return self.p0_mw + (self.p1_mw - self.p0_mw) * frac


@dataclass(frozen=True)
class Sinusoid:
    mean_mw: float
    amplitude_mw: float
    period_us: float

    def __post_init__(self):
        if not abs(self.amplitude_mw) <= self.mean_mw:
            raise DomainError("sinusoid amplitude must not exceed its mean (power would go negative)")
        if not self.period_us > 0:
            raise DomainError("sinusoid period must be positive")

    def __call__(self, t_us: float) -> float:
        return self.mean_mw + self.amplitude_mw * math.sin(2 * math.pi * t_us / self.period_us)


Waveform = Union[Constant, Ramp, Sinusoid]


# -- source specs ----------------------------------------------------------


@dataclass(frozen=True)
class RaplSpec:
    path: str
    max_range_uj: Optional[int] = None
    kind = "rapl"


@dataclass(frozen=True)
class CommandSpec:
    argv: tuple[str, ...]
    timeout_s: float = COMMAND_TIMEOUT_S
    kind = "command"


@dataclass(frozen=True)
class TraceSpec:
    path: str
    hold_us: int = DEFAULT_TRACE_HOLD_US
    kind = "trace"


@dataclass(frozen=True)
class SyntheticSpec:
    waveform: Waveform
    kind = "synthetic"


PowerSourceSpec = Union[RaplSpec, CommandSpec, TraceSpec, SyntheticSpec]


def _number(text: str, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DomainError(f"bad {what} {text!r}") from None
    if not math.isfinite(value):
        raise DomainError(f"bad {what} {text!r}")
    return value


def parse_source_spec(text: str) -> PowerSourceSpec:
    """Parse the single-string CLI form of a source.

    ``synthetic:constant:<mw>``, ``synthetic:ramp:<mw0>:<mw1>:<ms>``,
    ``synthetic:sinusoid:<mean>:<amp>:<period_ms>``, ``trace:<path>``,
    ``rapl:<path>[:max_uj]``, ``cmd:<executable> [args...]``.
    """
    kind, _, rest = text.partition(":")
    if not rest:
        raise DomainError(f"source spec {text!r} has no argument")
    if kind == "synthetic":
        shape, *args = rest.split(":")
        n = {"constant": 1, "ramp": 3, "sinusoid": 3}.get(shape)
        if n is None:
            raise DomainError(f"unknown synthetic waveform {shape!r}")
        if len(args) != n:
            raise DomainError(f"synthetic:{shape} takes {n} argument(s), got {len(args)}")
        vals = [_number(a, f"{shape} parameter") for a in args]
        if shape == "constant":
            return SyntheticSpec(Constant(vals[0]))
        if shape == "ramp":
            return SyntheticSpec(Ramp(vals[0], vals[1], vals[2] * 1000))
        return SyntheticSpec(Sinusoid(vals[0], vals[1], vals[2] * 1000))
    if kind == "trace":
        return TraceSpec(rest)
    if kind == "rapl":
        path, sep, max_uj = rest.rpartition(":")
        if sep and max_uj.isdigit():
            return RaplSpec(path, int(max_uj))
        return RaplSpec(rest)
    if kind in ("cmd", "command"):
        argv = tuple(shlex.split(rest))
        if not argv:
            raise DomainError("cmd source needs an executable")
        return CommandSpec(argv)
    raise DomainError(f"unknown source kind {kind!r}")


# -- sources ---------------------------------------------------------------


class PowerSource:
    kind = "abstract"

    def read(self, t_us: int) -> float:
        raise NotImplementedError

    def close(self) -> None:
        pass


class SyntheticSource(PowerSource):
    kind = "synthetic"

    def __init__(self, waveform: Waveform):
        self.waveform = waveform

    def read(self, t_us: int) -> float:
        return self.waveform(t_us)


class RaplSource(PowerSource):
    """Average power between consecutive reads of a cumulative µJ counter.

    The first read has nothing to difference against; it returns 0 and sets
    ``warmup``. A counter decrease is taken as one wrap of ``max_range_uj``.
    """

    kind = "rapl"

    def __init__(self, path: str | os.PathLike, max_range_uj: Optional[int] = None):
        self.path = Path(path)
        if max_range_uj is None:
            max_range_uj = self._sibling_range()
        if max_range_uj <= 0:
            raise SourceInitError(self.kind, f"max_range must be positive, got {max_range_uj}")
        self.max_range_uj = max_range_uj
        self.warmup = False
        self._last: Optional[tuple[int, int]] = None
        self._last_mw = 0.0
        try:
            self._read_counter()
        except SourceError as exc:
            raise SourceInitError(self.kind, str(exc)) from None

    def _sibling_range(self) -> int:
        sibling = self.path.with_name("max_energy_range_uj")
        try:
            return int(sibling.read_text().strip())
        except (OSError, ValueError):
            return DEFAULT_RAPL_RANGE_UJ

    def _read_counter(self) -> int:
        try:
            text = self.path.read_text()
        except OSError as exc:
            raise SourceError(f"{self.path}: {exc.strerror or exc}") from None
        try:
            return int(text.strip())
        except ValueError:
            raise SourceError(f"{self.path}: not an integer µJ counter: {text.strip()[:40]!r}") from None

    def read(self, t_us: int) -> float:
        energy = self._read_counter()
        if self._last is None:
            self._last = (t_us, energy)
            self.warmup = True
            return 0.0
        self.warmup = False
        t_prev, e_prev = self._last
        dt = t_us - t_prev
        if dt <= 0:
            return self._last_mw
        de = energy - e_prev
        if de < 0:
            de += self.max_range_uj
        self._last = (t_us, energy)
        self._last_mw = de / dt * 1000
        return self._last_mw


class CommandSource(PowerSource):
    """Runs a query tool per sample; its stdout must be one decimal mW value."""

    kind = "command"

    def __init__(self, argv: Sequence[str], timeout_s: float = COMMAND_TIMEOUT_S):
        self.argv = list(argv)
        self.timeout_s = timeout_s
        exe = self.argv[0]
        if shutil.which(exe) is None:
            raise SourceInitError(self.kind, f"{exe!r} is not an executable on PATH")

    def read(self, t_us: int) -> float:
        try:
            proc = subprocess.run(self.argv, capture_output=True, text=True, timeout=self.timeout_s)
        except subprocess.TimeoutExpired:
            raise SourceError(f"{self.argv[0]} did not answer within {self.timeout_s * 1000:.0f} ms") from None
        except OSError as exc:
            raise SourceError(f"{self.argv[0]}: {exc}") from None
        if proc.returncode != 0:
            raise SourceError(f"{self.argv[0]} exited with {proc.returncode}")
        out = proc.stdout.strip()
        try:
            value = float(out)
        except ValueError:
            raise SourceError(f"{self.argv[0]} printed {out[:40]!r}, expected a milliwatt value") from None
        if not (math.isfinite(value) and value >= 0):
            raise SourceError(f"{self.argv[0]} printed invalid power {out!r}")
        return value


def load_trace(path: str | os.PathLike) -> list[tuple[int, float]]:
    points: list[tuple[int, float]] = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise SourceError(f"{path}:{line_no}: expected '<t_us>,<p_mw>'")
            try:
                t, p = int(parts[0]), float(parts[1])
            except ValueError:
                raise SourceError(f"{path}:{line_no}: unparseable trace line {line!r}") from None
            if p < 0 or not math.isfinite(p):
                raise SourceError(f"{path}:{line_no}: negative or non-finite power")
            if points and t <= points[-1][0]:
                raise SourceError(f"{path}:{line_no}: timestamps must be strictly increasing")
            points.append((t, p))
    if not points:
        raise SourceError(f"{path}: empty trace")
    return points


class TraceSource(PowerSource):
    """Replays a recorded ``(t_us, p_mw)`` trace against elapsed sampler time.

    The value is held between trace points and after the last one; once
    ``hold_us`` has passed beyond the final point, reads raise
    ``SourceExhausted``.
    """

    kind = "trace"

    def __init__(self, path: str | os.PathLike, hold_us: int = DEFAULT_TRACE_HOLD_US):
        try:
            self.points = load_trace(path)
        except (OSError, SourceError) as exc:
            raise SourceInitError(self.kind, str(exc)) from None
        self.hold_us = hold_us
        self.cursor = 0
        self._t0 = self.points[0][0]

    def read(self, t_us: int) -> float:
        target = self._t0 + t_us
        pts = self.points
        while self.cursor + 1 < len(pts) and pts[self.cursor + 1][0] <= target:
            self.cursor += 1
        if self.cursor == len(pts) - 1 and target > pts[-1][0] + self.hold_us:
            raise SourceExhausted(f"trace ended at {pts[-1][0] - self._t0} µs")
        return pts[self.cursor][1]


def open_source(spec: PowerSourceSpec) -> PowerSource:
    if isinstance(spec, SyntheticSpec):
        return SyntheticSource(spec.waveform)
    if isinstance(spec, RaplSpec):
        return RaplSource(spec.path, spec.max_range_uj)
    if isinstance(spec, CommandSpec):
        return CommandSource(spec.argv, spec.timeout_s)
    if isinstance(spec, TraceSpec):
        return TraceSource(spec.path, spec.hold_us)
    raise TypeError(f"not a source spec: {spec!r}")
