"""On-disk formats: model documents, platform specs and records tables.

Readers are strict by default: unknown keys or columns are rejected with
the offending path in the message. Pass ``lenient=True`` to ignore extras.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from typing import Any, Iterable, TextIO, Union

from .builder import PlatformSpec
from .errors import AnalysisError, SchemaError
from .model import Ceiling, EnergyCoefficients, Kind, MeasurementRecord, Precision, RooflineModel

MODEL_SCHEMA = "wattline-model/v1"
RECORDS_HEADER = ("kernel", "config", "precision", "W_flop", "Q_byte", "t_s", "E_j")
UNITS = {Kind.COMPUTE: "flop_per_s", Kind.MEMORY: "byte_per_s"}

PathOrFile = Union[str, os.PathLike, TextIO]


def fmt_float(x: float) -> str:
    return "%.6e" % x


# -- model documents -------------------------------------------------------


def dump_model(model: RooflineModel) -> str:
    unit = UNITS[model.kind]
    ceilings = ",\n".join(
        f'    {{"name": {json.dumps(c.name)}, "rate": {fmt_float(c.rate)}, "unit": "{unit}"}}'
        for c in model.ceilings
    )
    return (
        "{\n"
        f'  "schema": "{MODEL_SCHEMA}",\n'
        f'  "platform": {json.dumps(model.platform)},\n'
        f'  "p_peak_w": {fmt_float(model.p_peak)},\n'
        f'  "kind": "{model.kind.value}",\n'
        f'  "precision": "{model.precision.value}",\n'
        f'  "ceilings": [\n{ceilings}\n  ]\n'
        "}\n"
    )


def save_model(model: RooflineModel, path: Union[str, os.PathLike]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dump_model(model))


def _check_keys(obj: Any, path: str, required: Iterable[str], optional: Iterable[str] = (), lenient: bool = False) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(path, f"expected an object, got {type(obj).__name__}")
    required = list(required)
    for key in required:
        if key not in obj:
            raise SchemaError(f"{path}.{key}" if path else key, "missing required key")
    if not lenient:
        known = set(required) | set(optional)
        extra = sorted(k for k in obj if k not in known)
        if extra:
            raise SchemaError(path or "$", f"unknown key(s): {', '.join(extra)}")


def _number(obj: dict, key: str, path: str) -> float:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SchemaError(f"{path}.{key}" if path else key, f"expected a finite number, got {value!r}")
    return float(value)


def _string(obj: dict, key: str, path: str) -> str:
    value = obj[key]
    if not isinstance(value, str):
        raise SchemaError(f"{path}.{key}" if path else key, f"expected a string, got {value!r}")
    return value


def _read_json(source: PathOrFile) -> Any:
    try:
        if hasattr(source, "read"):
            return json.load(source)
        with open(source, encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise SchemaError("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def model_from_dict(doc: Any, lenient: bool = False) -> RooflineModel:
    _check_keys(doc, "", ("schema", "platform", "p_peak_w", "kind", "precision", "ceilings"), lenient=lenient)
    if doc["schema"] != MODEL_SCHEMA:
        raise SchemaError("schema", f"expected {MODEL_SCHEMA!r}, got {doc['schema']!r}")
    try:
        kind = Kind.parse(_string(doc, "kind", ""))
        precision = Precision.parse(_string(doc, "precision", ""))
    except AnalysisError as exc:
        raise SchemaError("kind/precision", str(exc)) from None
    if not isinstance(doc["ceilings"], list):
        raise SchemaError("ceilings", "expected an array")
    ceilings = []
    for i, c in enumerate(doc["ceilings"]):
        path = f"ceilings[{i}]"
        _check_keys(c, path, ("name", "rate", "unit"), lenient=lenient)
        if c["unit"] != UNITS[kind]:
            raise SchemaError(f"{path}.unit", f"expected {UNITS[kind]!r} for a {kind.value} model, got {c['unit']!r}")
        try:
            ceilings.append(Ceiling(_string(c, "name", path), kind, _number(c, "rate", path), precision))
        except AnalysisError as exc:
            raise SchemaError(path, str(exc)) from None
    try:
        return RooflineModel(_string(doc, "platform", ""), _number(doc, "p_peak_w", ""), kind, precision, tuple(ceilings))
    except AnalysisError as exc:
        raise SchemaError("", f"invalid model: {exc}") from None


def load_model(source: PathOrFile, lenient: bool = False) -> RooflineModel:
    return model_from_dict(_read_json(source), lenient=lenient)


# -- platform specs --------------------------------------------------------


def load_platform(source: PathOrFile, lenient: bool = False) -> PlatformSpec:
    doc = _read_json(source)
    _check_keys(doc, "", ("name", "p_peak_w"), ("notes",), lenient=lenient)
    notes = doc.get("notes", "")
    if not isinstance(notes, str):
        raise SchemaError("notes", "expected a string")
    try:
        return PlatformSpec(_string(doc, "name", ""), _number(doc, "p_peak_w", ""), notes)
    except AnalysisError as exc:
        raise SchemaError("p_peak_w", str(exc)) from None


def dump_platform(platform: PlatformSpec) -> str:
    return json.dumps({"name": platform.name, "p_peak_w": platform.p_peak, "notes": platform.notes}, indent=2) + "\n"


# -- records tables --------------------------------------------------------


def _open_text(source: PathOrFile):
    if hasattr(source, "read"):
        return source, False
    if str(source) == "-":
        return sys.stdin, False
    return open(source, encoding="utf-8", newline=""), True


def read_records(source: PathOrFile, lenient: bool = False) -> list[MeasurementRecord]:
    f, owned = _open_text(source)
    try:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise SchemaError("header", "records table is empty")
        header = [h.strip() for h in header]
        if lenient:
            missing = [c for c in RECORDS_HEADER if c not in header]
            if missing:
                raise SchemaError("header", f"missing column(s): {', '.join(missing)}")
        elif tuple(header) != RECORDS_HEADER:
            extra = [h for h in header if h not in RECORDS_HEADER]
            detail = f"unknown column(s): {', '.join(extra)}; " if extra else ""
            raise SchemaError("header", f"{detail}expected exactly {','.join(RECORDS_HEADER)}")
        idx = {name: header.index(name) for name in RECORDS_HEADER}
        records = []
        for row_no, row in enumerate(reader, 2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise SchemaError(f"row {row_no}", f"expected {len(header)} fields, got {len(row)}")
            values = {}
            for col in ("W_flop", "Q_byte", "t_s", "E_j"):
                text = row[idx[col]].strip()
                try:
                    values[col] = float(text)
                except ValueError:
                    raise SchemaError(f"row {row_no}.{col}", f"not a number: {text!r}") from None
            try:
                records.append(
                    MeasurementRecord(
                        kernel_name=row[idx["kernel"]].strip(),
                        config_label=row[idx["config"]].strip(),
                        precision=row[idx["precision"]].strip(),
                        W=values["W_flop"],
                        Q=values["Q_byte"],
                        t=values["t_s"],
                        E=values["E_j"],
                    )
                )
            except AnalysisError as exc:
                raise SchemaError(f"row {row_no}", str(exc)) from None
        return records
    finally:
        if owned:
            f.close()


def dump_records(records: Iterable[MeasurementRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORDS_HEADER)
    for r in records:
        w.writerow([r.kernel_name, r.config_label, r.precision.value, repr(r.W), repr(r.Q), repr(r.t), repr(r.E)])
    return buf.getvalue()


def write_records(records: Iterable[MeasurementRecord], path: Union[str, os.PathLike]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(dump_records(records))


def coefficients_to_json(c: EnergyCoefficients) -> dict:
    return {"eps_flop_j_per_flop": c.eps_flop, "eps_mem_j_per_byte": c.eps_mem, "e0_j": c.e0, "residual_rms_j": c.residual_rms}
