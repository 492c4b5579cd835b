import io
import json
from pathlib import Path

import pytest

from wattline.builder import CORE_I7_6800K, build_model, group_records
from wattline.errors import SchemaError
from wattline.formats import (
    RECORDS_HEADER,
    dump_model,
    dump_platform,
    dump_records,
    load_model,
    load_platform,
    read_records,
    save_model,
    write_records,
)
from wattline.model import Kind, MeasurementRecord, Precision

DATA = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture
def core_i7_sp():
    recs = read_records(DATA / "core_i7_ceilings.csv")
    return build_model(CORE_I7_6800K, group_records(recs, "compute", "single"))


def test_model_save_load_save_is_a_fixpoint(tmp_path, core_i7_sp):
    first = tmp_path / "a.json"
    save_model(core_i7_sp, first)
    loaded = load_model(first)
    save_model(loaded, tmp_path / "b.json")
    assert first.read_bytes() == (tmp_path / "b.json").read_bytes()
    assert [c.name for c in loaded.ceilings] == [c.name for c in core_i7_sp.ceilings]
    assert loaded.top.rate == pytest.approx(core_i7_sp.top.rate, rel=1e-6)
    assert loaded.kind is Kind.COMPUTE and loaded.precision is Precision.SINGLE


def test_model_document_is_valid_json(core_i7_sp):
    doc = json.loads(dump_model(core_i7_sp))
    assert doc["schema"] == "wattline-model/v1"
    assert doc["p_peak_w"] == 140.0
    assert doc["ceilings"][0] == {"name": "FMA", "rate": 4.464e11, "unit": "flop_per_s"}


def mutate(model, fn):
    doc = json.loads(dump_model(model))
    fn(doc)
    return io.StringIO(json.dumps(doc))


def test_strict_model_rejects_unknown_keys(core_i7_sp):
    with pytest.raises(SchemaError, match=r"ceilings\[1\].*colour"):
        load_model(mutate(core_i7_sp, lambda d: d["ceilings"][1].update(colour="red")))
    with pytest.raises(SchemaError, match="extra"):
        load_model(mutate(core_i7_sp, lambda d: d.update(extra=1)))
    lenient = load_model(mutate(core_i7_sp, lambda d: d.update(extra=1)), lenient=True)
    assert lenient == load_model(io.StringIO(dump_model(core_i7_sp)))


@pytest.mark.parametrize(
    "fn, where",
    [
        (lambda d: d.pop("p_peak_w"), "p_peak_w"),
        (lambda d: d.update(schema="v0"), "schema"),
        (lambda d: d.update(p_peak_w="140"), "p_peak_w"),
        (lambda d: d["ceilings"][0].update(unit="byte_per_s"), r"ceilings\[0\].unit"),
        (lambda d: d["ceilings"][0].update(rate=-1.0), r"ceilings\[0\]"),
        (lambda d: d.update(kind="cache"), "kind"),
    ],
)
def test_model_schema_errors(core_i7_sp, fn, where):
    with pytest.raises(SchemaError, match=where):
        load_model(mutate(core_i7_sp, fn))


def test_invalid_json():
    with pytest.raises(SchemaError, match="line 1"):
        load_model(io.StringIO("{nope"))


def test_platform_files():
    p = load_platform(DATA / "core_i7_6800k.json")
    assert p.p_peak == 140.0
    assert load_platform(io.StringIO(dump_platform(p))) == p
    assert load_platform(DATA / "gtx970.json").p_peak == 222.0
    with pytest.raises(SchemaError):
        load_platform(io.StringIO('{"name": "x", "p_peak_w": 1, "tdp": 2}'))
    with pytest.raises(SchemaError):
        load_platform(io.StringIO('{"name": "x", "p_peak_w": 0}'))


def test_records_round_trip(tmp_path):
    recs = [
        MeasurementRecord("gemm", W=1e12, Q=3.5e9, t=0.1 + 0.2, E=1110.0, config_label="FMA", precision="double"),
        MeasurementRecord("copy", W=0, Q=1e9, t=1 / 3, E=50.0),
    ]
    path = tmp_path / "r.csv"
    write_records(recs, path)
    assert read_records(path) == recs


def test_records_strict_header():
    text = ",".join(RECORDS_HEADER) + ",notes\ngemm,FMA,double,1,0,1,1,x\n"
    with pytest.raises(SchemaError, match="notes"):
        read_records(io.StringIO(text))
    (rec,) = read_records(io.StringIO(text), lenient=True)
    assert rec.kernel_name == "gemm"
    with pytest.raises(SchemaError, match="missing"):
        read_records(io.StringIO("kernel,config\n"), lenient=True)


@pytest.mark.parametrize(
    "row, where",
    [
        ("gemm,FMA,double,abc,0,1,1", r"row 2.W_flop"),
        ("gemm,FMA,double,1,0,0,1", "row 2"),
        ("gemm,FMA,quad,1,0,1,1", "row 2"),
        ("gemm,FMA,double,1,0,1", "row 2"),
    ],
)
def test_records_row_errors(row, where):
    with pytest.raises(SchemaError, match=where):
        read_records(io.StringIO(",".join(RECORDS_HEADER) + "\n" + row + "\n"))


def test_records_empty_and_stdin(monkeypatch):
    with pytest.raises(SchemaError, match="empty"):
        read_records(io.StringIO(""))
    recs = [MeasurementRecord("k", W=1, Q=2, t=3, E=4)]
    monkeypatch.setattr("sys.stdin", io.StringIO(dump_records(recs)))
    assert read_records("-") == recs
