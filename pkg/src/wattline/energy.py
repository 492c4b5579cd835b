"""Offline energy accounting over sampler logs.

Energy of a region is the trapezoidal integral of the sampled power over
the region window. Power at the window edges is linearly interpolated from
the bracketing samples; when a side has no sample the nearest in-window
value is held constant to the edge.
"""

from __future__ import annotations

import bisect
import math
import os
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, TextIO, Union

from .errors import InsufficientDataError, LogFormatError, UnknownRegionError, UnplaceableRecordError
from .model import MeasurementRecord, Precision
from .sampler import LOG_MAGIC, PowerSample

# mW * µs -> J
MW_US_TO_J = 1e-9

_HEADER_RE = re.compile(
    r"^# wattline-log v1, period_us=(\d+), source=([A-Za-z0-9_\-]+), epoch_unix_us=(-?\d+)$"
)


@dataclass(frozen=True)
class LogHeader:
    period_us: int
    source_kind: str
    epoch_unix_us: int


@dataclass(frozen=True)
class Region:
    name: str
    t_begin_us: int
    t_end_us: int


@dataclass(frozen=True)
class ParsedLog:
    header: LogHeader
    samples: tuple[PowerSample, ...]
    regions: tuple[Region, ...]

    def find(self, name: str, occurrence: int = 0) -> Region:
        matches = [r for r in self.regions if r.name == name]
        if len(matches) <= occurrence:
            raise UnknownRegionError(f"no region named {name!r} in log")
        return matches[occurrence]


def _parse_int(text: str, line_no: int, what: str) -> int:
    if not text.isdigit():
        raise LogFormatError(line_no, f"{what} must be a non-negative integer, got {text!r}")
    return int(text)


def parse_lines(lines: Iterable[str]) -> ParsedLog:
    it = iter(lines)
    first = next(it, None)
    if first is None:
        raise LogFormatError(1, "empty log")
    m = _HEADER_RE.match(first.rstrip("\n"))
    if not m:
        if first.startswith(LOG_MAGIC):
            raise LogFormatError(1, f"malformed header {first.rstrip()!r}")
        raise LogFormatError(1, "not a wattline-log v1 file")
    header = LogHeader(int(m.group(1)), m.group(2), int(m.group(3)))

    samples: list[PowerSample] = []
    regions: list[Region] = []
    open_region: Optional[tuple[str, int, int]] = None
    last_t = -1
    line_no = 1
    for line_no, raw in enumerate(it, 2):
        line = raw.rstrip("\n")
        if not line:
            raise LogFormatError(line_no, "blank line")
        parts = line.split(",")
        if len(parts) != 3 or parts[0] not in ("S", "B", "E"):
            raise LogFormatError(line_no, f"unrecognised line {line[:60]!r}")
        tag, t_text, value = parts
        t = _parse_int(t_text, line_no, "timestamp")
        if t <= last_t:
            raise LogFormatError(line_no, f"timestamp {t} not after previous {last_t}")
        last_t = t
        if tag == "S":
            samples.append(PowerSample(t, _parse_int(value, line_no, "power")))
        elif tag == "B":
            if not value:
                raise LogFormatError(line_no, "empty region name")
            if open_region is not None:
                raise LogFormatError(
                    line_no, f"begin of {value!r} while {open_region[0]!r} (line {open_region[2]}) is open"
                )
            open_region = (value, t, line_no)
        else:
            if open_region is None:
                raise LogFormatError(line_no, f"end of {value!r} without a matching begin")
            if open_region[0] != value:
                raise LogFormatError(line_no, f"end of {value!r} but open region is {open_region[0]!r}")
            regions.append(Region(value, open_region[1], t))
            open_region = None
    if open_region is not None:
        raise LogFormatError(open_region[2], f"region {open_region[0]!r} is never closed")
    return ParsedLog(header, tuple(samples), tuple(regions))


def parse_log(path: Union[str, os.PathLike, TextIO]) -> ParsedLog:
    if hasattr(path, "read"):
        return parse_lines(path)
    with open(path, encoding="utf-8", newline="") as f:
        return parse_lines(f)


# -- integration -------------------------------------------------------------


@dataclass(frozen=True)
class _Window:
    ts: list[float]
    ps: list[float]
    interpolated: bool
    interior: int


def _lerp(a: PowerSample, b: PowerSample, t: float) -> float:
    return a.p_mw + (b.p_mw - a.p_mw) * (t - a.t_us) / (b.t_us - a.t_us)


def _window(samples: Sequence[PowerSample], t0: float, t1: float, label: str) -> _Window:
    if not t1 > t0:
        raise InsufficientDataError(f"{label}: empty window [{t0}, {t1}]")
    times = [s.t_us for s in samples]
    lo = bisect.bisect_left(times, t0)
    hi = bisect.bisect_right(times, t1)
    n_inside = hi - lo
    before = samples[lo - 1] if lo > 0 else None
    after = samples[hi] if hi < len(samples) else None
    if not n_inside and (before is None or after is None):
        raise InsufficientDataError(f"{label}: no samples in or bracketing [{t0}, {t1}] µs")
    first = samples[lo] if lo < len(samples) else None  # first sample at or after t0
    last = samples[hi - 1] if hi > 0 else None  # last sample at or before t1

    interpolated = False
    if first is not None and first.t_us == t0:
        p0 = first.p_mw
    elif before is not None:
        p0 = _lerp(before, first, t0)
        interpolated = True
    else:
        p0 = first.p_mw
        interpolated = True

    if last is not None and last.t_us == t1:
        p1 = last.p_mw
    elif after is not None:
        p1 = _lerp(last, after, t1)
        interpolated = True
    else:
        p1 = last.p_mw
        interpolated = True

    strict = [s for s in samples[lo:hi] if t0 < s.t_us < t1]
    ts = [t0] + [s.t_us for s in strict] + [t1]
    ps = [p0] + [s.p_mw for s in strict] + [p1]
    return _Window(ts, ps, interpolated, n_inside)


def _trapezoid_mw_us(ts: Sequence[float], ps: Sequence[float]) -> float:
    return math.fsum((ps[i] + ps[i + 1]) * (ts[i + 1] - ts[i]) for i in range(len(ts) - 1)) / 2


def integrate_region(samples: Sequence[PowerSample], t0_us: float, t1_us: float, name: str = "window") -> float:
    """Energy in joules over ``[t0_us, t1_us]`` from time-ordered mW samples."""
    w = _window(samples, t0_us, t1_us, name)
    return _trapezoid_mw_us(w.ts, w.ps) * MW_US_TO_J


@dataclass(frozen=True)
class RegionReport:
    name: str
    duration: float
    energy: float
    avg_power: float
    min_power: float
    max_power: float
    sample_count: int
    boundary_interpolated: bool

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "duration_s": self.duration,
            "energy_j": self.energy,
            "avg_power_w": self.avg_power,
            "min_power_w": self.min_power,
            "max_power_w": self.max_power,
            "sample_count": self.sample_count,
            "boundary_interpolated": self.boundary_interpolated,
        }


def _report(log: ParsedLog, region: Region) -> RegionReport:
    w = _window(log.samples, region.t_begin_us, region.t_end_us, region.name)
    energy = _trapezoid_mw_us(w.ts, w.ps) * MW_US_TO_J
    duration = (region.t_end_us - region.t_begin_us) * 1e-6
    return RegionReport(
        name=region.name,
        duration=duration,
        energy=energy,
        avg_power=energy / duration,
        min_power=min(w.ps) * 1e-3,
        max_power=max(w.ps) * 1e-3,
        sample_count=w.interior,
        boundary_interpolated=w.interpolated,
    )


def region_report(log: ParsedLog, name: str, occurrence: int = 0) -> RegionReport:
    return _report(log, log.find(name, occurrence))


def region_reports(log: ParsedLog) -> list[RegionReport]:
    return [_report(log, r) for r in log.regions]


def to_measurement_record(
    report: RegionReport,
    W: float = 0.0,
    Q: float = 0.0,
    kernel_name: Optional[str] = None,
    config_label: str = "",
    precision: Union[str, Precision] = Precision.NA,
) -> MeasurementRecord:
    if not (W > 0 or Q > 0):
        raise UnplaceableRecordError(f"{report.name}: need W > 0 or Q > 0 to place a record")
    return MeasurementRecord(
        kernel_name=kernel_name or report.name,
        W=W,
        Q=Q,
        t=report.duration,
        E=report.energy,
        config_label=config_label,
        precision=precision,
    )
