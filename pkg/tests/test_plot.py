import re

import pytest

from wattline.builder import CORE_I7_6800K, GTX_970, build_model, group_records
from wattline.errors import PlotError
from wattline.model import Ceiling, Kind, MeasurementRecord, Precision, RooflineModel
from wattline.plot import render_svg, save_svg

G = 1e9


@pytest.fixture
def core_i7_sp():
    rates = {"FMA": 446.4, "no-FMA": 285.1, "no-SIMD": 147.8, "serial": 24.6}
    recs = [MeasurementRecord("peak", W=r * G, Q=0, t=1, E=1, config_label=c, precision="single") for c, r in rates.items()]
    return build_model(CORE_I7_6800K, group_records(recs, "compute", "single"))


def polylines(svg):
    return re.findall(r'<polyline class="ceiling" data-name="([^"]*)" data-ridge="([^"]*)" points="([^"]*)"', svg)


def test_one_polyline_per_ceiling_and_one_roof(core_i7_sp):
    svg = render_svg(core_i7_sp)
    lines = polylines(svg)
    assert [name for name, _, _ in lines] == ["FMA", "no-FMA", "no-SIMD", "serial"]
    assert svg.count('class="roof"') == 1
    ridges = [float(r) for _, r, _ in lines]
    assert ridges == sorted(ridges)
    assert ridges[0] == pytest.approx(0.3136, abs=5e-5)


def test_ceilings_meet_the_roof_exactly(core_i7_sp):
    svg = render_svg(core_i7_sp)
    roof_y = re.search(r'<line class="roof" x1="[^"]*" y1="([^"]*)"', svg).group(1)
    for _, _, points in polylines(svg):
        end_y = points.split()[-1].split(",")[1]
        assert end_y == roof_y


def test_render_is_deterministic(core_i7_sp, tmp_path):
    rec = MeasurementRecord("gemm", W=1e12, Q=0, t=10, E=500, config_label="FMA", precision="single")
    save_svg(core_i7_sp, tmp_path / "a.svg", [rec])
    save_svg(core_i7_sp, tmp_path / "b.svg", [rec])
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    assert (tmp_path / "a.svg").read_text().count('class="kernel"') == 1


def test_empty_records_still_render(core_i7_sp):
    svg = render_svg(core_i7_sp, [])
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert 'class="kernel"' not in svg


def test_memory_model_axis_units():
    m = RooflineModel("p", 100.0, Kind.MEMORY, Precision.NA, (Ceiling("stream", Kind.MEMORY, 50 * G),))
    svg = render_svg(m, [MeasurementRecord("copy", W=0, Q=1e9, t=1, E=50)])
    assert "J/GB" in svg


def test_wrong_points_are_rejected(core_i7_sp):
    with pytest.raises(PlotError, match="no W"):
        render_svg(core_i7_sp, [MeasurementRecord("copy", W=0, Q=1e9, t=1, E=50)])
    with pytest.raises(PlotError, match="double"):
        render_svg(core_i7_sp, [MeasurementRecord("gemm", W=1e9, Q=0, t=1, E=1, precision="double")])


def test_names_are_escaped():
    m = build_model(
        GTX_970,
        group_records([MeasurementRecord("p", W=G, Q=0, t=1, E=1, config_label='a"<b>')], "compute", "n/a"),
    )
    svg = render_svg(m)
    assert "<b>" not in svg
