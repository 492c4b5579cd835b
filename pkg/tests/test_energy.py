import io

import numpy as np
import pytest

from wattline.energy import (
    LogHeader,
    ParsedLog,
    Region,
    RegionReport,
    integrate_region,
    parse_lines,
    parse_log,
    region_report,
    region_reports,
    to_measurement_record,
)
from wattline.errors import InsufficientDataError, LogFormatError, UnknownRegionError, UnplaceableRecordError
from wattline.model import derive_metrics
from wattline.sampler import PowerSample, SamplerConfig, VirtualClock, format_header, init
from wattline.sources import Sinusoid, SyntheticSpec

HEADER = format_header(2000, "synthetic", 0)


def sinusoid_w(t_s):
    return 100.0 + 20.0 * np.sin(2 * np.pi * t_s / 0.1)


def riemann_oracle(t0_s, t1_s):
    """Midpoint sum at 1 µs resolution, independent of the trapezoid path."""
    n = int(round((t1_s - t0_s) * 1e6))
    mid = t0_s + (np.arange(n) + 0.5) * 1e-6
    return float(np.sum(sinusoid_w(mid)) * 1e-6)


def sinusoid_samples(period_us=2000, t_end_us=1_100_000):
    return [PowerSample(t, sinusoid_w(t * 1e-6) * 1000) for t in range(0, t_end_us + 1, period_us)]


def log_text(*body):
    return HEADER + "".join(line + "\n" for line in body)


# -- parsing ---------------------------------------------------------------------


def test_parse_well_formed():
    log = parse_lines(io.StringIO(log_text("B,10,k", "S,12,5000", "S,14,5000", "E,20,k")))
    assert len(log.samples) == 2
    assert [(r.name, r.t_begin_us, r.t_end_us) for r in log.regions] == [("k", 10, 20)]
    assert log.header.period_us == 2000


def test_parse_end_before_begin_names_the_line():
    with pytest.raises(LogFormatError) as exc:
        parse_lines(io.StringIO(log_text("S,1,5", "E,2,k", "B,3,k")))
    assert exc.value.line_no == 3


@pytest.mark.parametrize(
    "body, line_no",
    [
        (("B,1,a", "B,2,b"), 3),
        (("B,1,a", "E,2,b"), 3),
        (("S,5,1", "S,5,1"), 3),
        (("S,5,1", "S,4,1"), 3),
        (("X,5,1",), 2),
        (("S,5",), 2),
        (("S,5,-1",), 2),
        (("S,5,1.5",), 2),
        (("B,1,a",), 2),
    ],
)
def test_parse_errors(body, line_no):
    with pytest.raises(LogFormatError) as exc:
        parse_lines(io.StringIO(log_text(*body)))
    assert exc.value.line_no == line_no


def test_parse_bad_header():
    with pytest.raises(LogFormatError, match="line 1"):
        parse_lines(io.StringIO("S,1,1\n"))
    with pytest.raises(LogFormatError, match="malformed"):
        parse_lines(io.StringIO("# wattline-log v1, period_us=x\n"))


def test_sampler_log_round_trips(tmp_path):
    clock = VirtualClock()
    h = init(SamplerConfig(SyntheticSpec(Sinusoid(100_000, 20_000, 100_000)), tmp_path / "log.csv"), clock=clock)
    for i in range(4):
        h.region_start(f"r{i}")
        clock.advance(10_000 + 1_000 * i)
        h.region_stop(f"r{i}")
        clock.advance(500)
    summary = h.finalize()
    log = parse_log(tmp_path / "log.csv")
    assert len(log.samples) == summary.sample_count
    assert len(region_reports(log)) == 4


# -- integration ------------------------------------------------------------------


def test_constant_power_integral():
    samples = [PowerSample(t, 100_000) for t in range(0, 10_001, 2000)]
    assert integrate_region(samples, 0, 10_000) == pytest.approx(1.0, rel=1e-15)


def test_linear_ramp_integral_is_exact():
    samples = [PowerSample(t, 0.1 * t) for t in range(0, 1_000_001, 2000)]
    assert integrate_region(samples, 0, 1_000_000) == pytest.approx(50.0, rel=1e-12)


def test_sinusoid_matches_fine_grid_oracle():
    oracle = riemann_oracle(0.0, 1.0)
    assert oracle == pytest.approx(100.0, rel=1e-6)
    energy = integrate_region(sinusoid_samples(), 0, 1_000_000)
    assert abs(energy - oracle) / oracle < 0.005


def test_interpolated_boundaries_and_one_sided_extension():
    samples = [PowerSample(1000, 50_000), PowerSample(3000, 70_000), PowerSample(5000, 70_000)]
    # [2000, 3000]: start interpolated to 60 W, 1 ms trapezoid of 60..70 W = 65 mJ
    assert integrate_region(samples, 2000, 3000) == pytest.approx(0.065, rel=1e-12)
    # window past the last sample: hold 70 W constant to the edge
    assert integrate_region(samples, 5000, 7000) == pytest.approx(0.14, rel=1e-12)
    # window before the first sample but containing it
    assert integrate_region(samples, 0, 1000) == pytest.approx(0.05, rel=1e-12)
    # no interior samples but bracketed on both sides
    assert integrate_region(samples, 1500, 2500) == pytest.approx(0.06, rel=1e-12)


def test_insufficient_data():
    samples = [PowerSample(1000, 5)]
    with pytest.raises(InsufficientDataError, match="gemm"):
        integrate_region(samples, 2000, 3000, name="gemm")
    with pytest.raises(InsufficientDataError):
        integrate_region([], 0, 10)
    with pytest.raises(InsufficientDataError):
        integrate_region(samples, 10, 10)


def test_units_applied_once():
    # 1 mW for 1 µs is 1e-9 J
    samples = [PowerSample(0, 1), PowerSample(1, 1)]
    assert integrate_region(samples, 0, 1) == 1e-9


# -- reports -----------------------------------------------------------------------


def test_constant_region_report():
    # a log cannot put a sample and an event on one timestamp, so build the parsed form directly
    samples = tuple(PowerSample(t, 100_000) for t in range(0, 10_001, 2000))
    log = ParsedLog(LogHeader(2000, "synthetic", 0), samples, (Region("k", 0, 10_000),))
    rep = region_report(log, "k")
    assert rep.duration == pytest.approx(0.01)
    assert rep.energy == pytest.approx(1.0, rel=1e-12)
    assert rep.avg_power == pytest.approx(100.0)
    assert rep.min_power == rep.max_power == 100.0
    assert not rep.boundary_interpolated
    assert rep.sample_count == 6


def test_region_report_exact_window():
    log = parse_lines(io.StringIO(log_text("S,0,100000", "B,1,k", "S,2,100000", "E,10000,k", "S,10001,100000")))
    rep = region_report(log, "k")
    assert rep.energy == pytest.approx(0.9999, rel=1e-12)
    assert rep.energy == pytest.approx(rep.avg_power * rep.duration, rel=1e-9)


def test_region_report_midpoint_interpolation():
    log = parse_lines(io.StringIO(log_text("S,1000,50000", "B,2000,k", "S,3000,70000", "E,4000,k", "S,5000,70000")))
    rep = region_report(log, "k")
    assert rep.min_power == pytest.approx(60.0)
    assert rep.boundary_interpolated
    assert rep.sample_count == 1
    assert rep.min_power <= rep.avg_power <= rep.max_power


def test_region_report_unknown():
    log = parse_lines(io.StringIO(log_text("B,1,k", "S,2,1", "E,3,k")))
    with pytest.raises(UnknownRegionError):
        region_report(log, "missing")


def test_integral_beats_endpoint_estimate():
    # window starts at a sinusoid crest so the endpoint estimator is biased
    t0, t1 = 25_000, 1_025_000
    samples = sinusoid_samples()
    energy = integrate_region(samples, t0, t1)
    oracle = riemann_oracle(t0 * 1e-6, t1 * 1e-6)
    integral_err = abs(energy - oracle) / oracle
    naive = (sinusoid_w(t0 * 1e-6) + sinusoid_w(t1 * 1e-6)) / 2 * (t1 - t0) * 1e-6
    naive_err = abs(naive - oracle) / oracle
    assert integral_err < 0.005
    assert naive_err > 0.005 > integral_err


def test_to_measurement_record():
    log = parse_lines(io.StringIO(log_text("S,0,100000", "B,1,k", "E,10001,k", "S,10002,100000")))
    rep = region_report(log, "k")
    rec = to_measurement_record(rep, W=1e9)
    assert derive_metrics(rec).e_w == pytest.approx(1e-9, rel=1e-12)
    assert rec.kernel_name == "k"
    with pytest.raises(UnplaceableRecordError):
        to_measurement_record(rep, W=0, Q=0)


def test_sinusoid_record_energy_per_flop():
    energy = integrate_region(sinusoid_samples(), 0, 1_000_000)
    rep = RegionReport("sine", 1.0, energy, energy, 80.0, 120.0, 501, False)
    rec = to_measurement_record(rep, W=2e11)
    assert derive_metrics(rec).e_w == pytest.approx(0.5e-9, rel=0.005)


def test_refinement_does_not_increase_error():
    # non-periodic window so the trapezoid error is O(h^2) rather than spectrally small
    t0, t1 = 0, 137_000
    oracle = riemann_oracle(t0 * 1e-6, t1 * 1e-6)
    errors = []
    for period in (8000, 4000, 2000, 1000):
        samples = [PowerSample(t, sinusoid_w(t * 1e-6) * 1000) for t in range(0, 200_001, period)]
        samples.append(PowerSample(t1, sinusoid_w(t1 * 1e-6) * 1000))
        samples.sort(key=lambda s: s.t_us)
        dedup = [s for i, s in enumerate(samples) if i == 0 or s.t_us != samples[i - 1].t_us]
        errors.append(abs(integrate_region(dedup, t0, t1) - oracle))
    for coarse, fine in zip(errors, errors[1:]):
        assert fine <= coarse * 1.05
