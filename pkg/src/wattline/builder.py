"""Build roofline models from benchmark records and place kernels on them."""

from __future__ import annotations

import logging
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .errors import ArityError, ComparisonError, ModelError, PlacementError
from .model import (
    DEFAULT_RIDGE_TOL,
    Boundedness,
    Ceiling,
    Kind,
    MeasurementRecord,
    Precision,
    RooflineModel,
    classify,
    derive_metrics,
    gap_to_roofline,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlatformSpec:
    name: str
    p_peak: float
    notes: str = ""

    def __post_init__(self):
        if not self.p_peak > 0:
            raise ModelError(f"platform {self.name!r}: p_peak must be positive, got {self.p_peak!r}")


# Peak power limits as reported by nvidia-smi -q and RAPL for the reference machines.
CORE_I7_6800K = PlatformSpec("Intel Core i7 6800K", 140.0, "6 cores, 3.4 GHz, gcc")
GTX_970 = PlatformSpec("NVIDIA GeForce GTX 970", 222.0, "1664 CUDA cores, 1.5 GHz, nvcc")


@dataclass(frozen=True)
class CeilingRecordGroup:
    config_label: str
    kind: Kind
    precision: Precision
    records: tuple[MeasurementRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        object.__setattr__(self, "precision", Precision.parse(self.precision))
        object.__setattr__(self, "records", tuple(self.records))
        if not self.records:
            raise ModelError(f"group {self.config_label!r} has no records")
        for r in self.records:
            if r.config_label != self.config_label:
                raise ModelError(f"group {self.config_label!r} contains a record labelled {r.config_label!r}")


def group_records(records: Iterable[MeasurementRecord], kind: Kind | str, precision: Precision | str) -> list[CeilingRecordGroup]:
    """Group records of one precision by config label, in first-seen order."""
    kind = Kind.parse(kind)
    precision = Precision.parse(precision)
    groups: dict[str, list[MeasurementRecord]] = {}
    for r in records:
        if r.precision is precision:
            groups.setdefault(r.config_label, []).append(r)
    return [CeilingRecordGroup(label, kind, precision, tuple(rs)) for label, rs in groups.items()]


def _rate(record: MeasurementRecord, kind: Kind) -> float:
    m = derive_metrics(record)
    return m.pi if kind is Kind.COMPUTE else m.bw


def build_model(
    platform: PlatformSpec,
    groups: Sequence[CeilingRecordGroup],
    rate_statistic: str = "median",
) -> RooflineModel:
    """One ceiling per group at the median (or max) per-record rate."""
    if not groups:
        raise ModelError("no record groups to build a model from")
    if rate_statistic not in ("median", "max"):
        raise ModelError(f"rate statistic must be 'median' or 'max', got {rate_statistic!r}")
    kinds = {g.kind for g in groups}
    precisions = {g.precision for g in groups}
    if len(kinds) > 1 or len(precisions) > 1:
        raise ModelError(
            "groups mix kinds/precisions: "
            + ", ".join(f"{g.config_label}={g.kind.value}/{g.precision.value}" for g in groups)
        )
    kind, precision = kinds.pop(), precisions.pop()
    stat = statistics.median if rate_statistic == "median" else max

    ceilings = []
    by_rate: dict[float, str] = {}
    for g in groups:
        rates = [_rate(r, kind) for r in g.records]
        if any(rate <= 0 for rate in rates):
            unit = "W" if kind is Kind.COMPUTE else "Q"
            raise ModelError(f"group {g.config_label!r} has a record with {unit}=0; cannot derive a {kind.value} rate")
        rate = float(stat(rates))
        if rate in by_rate:
            raise ModelError(f"configs {by_rate[rate]!r} and {g.config_label!r} produce the same rate {rate!r}")
        by_rate[rate] = g.config_label
        ceilings.append(Ceiling(g.config_label, kind, rate, precision))
    return RooflineModel(platform.name, platform.p_peak, kind, precision, tuple(ceilings))


@dataclass(frozen=True)
class KernelPlacement:
    kernel_name: str
    config_label: str
    precision: Precision
    power: float
    compute_point: Optional[tuple[float, float]] = None
    memory_point: Optional[tuple[float, float]] = None
    classification: Optional[Boundedness] = None
    gap: Optional[float] = None
    memory_classification: Optional[Boundedness] = None
    memory_gap: Optional[float] = None
    inconsistent: bool = False
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def to_json(self) -> dict:
        return {
            "kernel": self.kernel_name,
            "config": self.config_label,
            "precision": self.precision.value,
            "power_w": self.power,
            "e_w_j_per_flop": self.compute_point[0] if self.compute_point else None,
            "e_q_j_per_byte": self.memory_point[0] if self.memory_point else None,
            "classification": self.classification.value if self.classification else None,
            "gap": self.gap,
            "memory_classification": self.memory_classification.value if self.memory_classification else None,
            "memory_gap": self.memory_gap,
            "inconsistent": self.inconsistent,
            "warnings": list(self.warnings),
        }


def _check_precision(model: RooflineModel, record: MeasurementRecord) -> None:
    if record.precision is not model.precision and Precision.NA not in (record.precision, model.precision):
        raise PlacementError(
            f"{record.kernel_name}/{record.config_label} is {record.precision.value} "
            f"but the {model.kind.value} model is {model.precision.value}"
        )


def place_kernels(
    compute_model: Optional[RooflineModel],
    memory_model: Optional[RooflineModel],
    records: Iterable[MeasurementRecord],
    tol: float = DEFAULT_RIDGE_TOL,
    ceiling_name: Optional[str] = None,
) -> list[KernelPlacement]:
    """Map each record to its (energy per unit, power) points and classify it.

    Classification is against ``ceiling_name`` (default: each model's top
    ceiling). When both points exist the compute model decides the primary
    ``classification``; the memory model's verdict goes to
    ``memory_classification``.
    """
    if compute_model is None and memory_model is None:
        raise PlacementError("need at least one model to place kernels on")
    if compute_model is not None and compute_model.kind is not Kind.COMPUTE:
        raise PlacementError("compute_model is not a compute model")
    if memory_model is not None and memory_model.kind is not Kind.MEMORY:
        raise PlacementError("memory_model is not a memory model")

    placements = []
    for rec in records:
        m = derive_metrics(rec)
        if m.e_w is None and m.e_q is None:
            raise PlacementError(f"{rec.kernel_name}: zero energy, nothing to place")
        compute_point = (m.e_w, m.P) if m.e_w is not None else None
        memory_point = (m.e_q, m.P) if m.e_q is not None else None
        notes: list[str] = []
        cls = gap = mcls = mgap = None
        inconsistent = False

        if compute_point and compute_model is not None:
            _check_precision(compute_model, rec)
            cls = classify(compute_model, ceiling_name, m.e_w, tol)
            gap = gap_to_roofline(compute_model, ceiling_name, compute_point)
            if m.P > compute_model.p_peak * (1 + tol):
                inconsistent = True
        if memory_point and memory_model is not None:
            _check_precision(memory_model, rec)
            mcls = classify(memory_model, ceiling_name, m.e_q, tol)
            mgap = gap_to_roofline(memory_model, ceiling_name, memory_point)
            if m.P > memory_model.p_peak * (1 + tol):
                inconsistent = True
        if cls is None and mcls is not None:
            cls, gap = mcls, mgap
        if cls is None:
            notes.append("no model matches this record's points; placed without classification")
        if inconsistent:
            notes.append(f"measured power {m.P:.4g} W exceeds the model's peak power")
        for note in notes:
            logger.warning("%s/%s: %s", rec.kernel_name, rec.config_label, note)

        placements.append(
            KernelPlacement(
                kernel_name=rec.kernel_name,
                config_label=rec.config_label,
                precision=rec.precision,
                power=m.P,
                compute_point=compute_point,
                memory_point=memory_point,
                classification=cls,
                gap=gap,
                memory_classification=mcls,
                memory_gap=mgap,
                inconsistent=inconsistent,
                warnings=tuple(notes),
            )
        )
    return placements


@dataclass(frozen=True)
class ConfigDelta:
    kernel_name: str
    before: str
    after: str
    delta_power_w: float
    ee_ratio: float
    gap_ratio_change: Optional[float]
    crossed_ridge: bool

    def to_json(self) -> dict:
        return {
            "kernel": self.kernel_name,
            "before": self.before,
            "after": self.after,
            "delta_power_w": self.delta_power_w,
            "ee_ratio": self.ee_ratio,
            "gap_ratio_change": self.gap_ratio_change,
            "crossed_ridge": self.crossed_ridge,
        }


def compare_configs(before: KernelPlacement, after: KernelPlacement) -> ConfigDelta:
    """Effect of switching a kernel from one configuration to another.

    ``ee_ratio`` > 1 means the new configuration needs less energy per unit
    of work. ``gap_ratio_change`` is the difference of the gaps (after minus
    before).
    """
    if before.kernel_name != after.kernel_name:
        raise ComparisonError(f"cannot compare {before.kernel_name!r} with {after.kernel_name!r}")
    if before.precision is not after.precision:
        raise ComparisonError(f"{before.kernel_name}: precisions differ ({before.precision.value} vs {after.precision.value})")
    if before.compute_point and after.compute_point:
        ee_ratio = before.compute_point[0] / after.compute_point[0]
    elif before.memory_point and after.memory_point:
        ee_ratio = before.memory_point[0] / after.memory_point[0]
    else:
        raise ComparisonError(f"{before.kernel_name}: placements have no common point kind")
    gap_change = after.gap - before.gap if before.gap is not None and after.gap is not None else None
    return ConfigDelta(
        kernel_name=before.kernel_name,
        before=before.config_label,
        after=after.config_label,
        delta_power_w=after.power - before.power,
        ee_ratio=ee_ratio,
        gap_ratio_change=gap_change,
        crossed_ridge=before.classification != after.classification,
    )


@dataclass(frozen=True)
class StabilityEntry:
    kernel_name: str
    config_label: str
    precision: Precision
    e_w_by_size: tuple[tuple[str, float], ...]
    min_e_w: float
    max_e_w: float
    spread: float

    def to_json(self) -> dict:
        return {
            "kernel": self.kernel_name,
            "config": self.config_label,
            "precision": self.precision.value,
            "e_w_by_size": dict(self.e_w_by_size),
            "min_e_w": self.min_e_w,
            "max_e_w": self.max_e_w,
            "spread": self.spread,
        }


def stability_report(groups_by_size: Mapping[str, Iterable[MeasurementRecord]]) -> list[StabilityEntry]:
    """Spread of energy per FLOP across data-set sizes, per kernel/config/precision.

    Spread is ``(max - min) / min``. Several records for one size are
    reduced to their median first.
    """
    table: dict[tuple[str, str, Precision], dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for size, records in groups_by_size.items():
        for r in records:
            e_w = derive_metrics(r).e_w
            if e_w is None:
                continue
            table[(r.kernel_name, r.config_label, r.precision)][size].append(e_w)

    entries = []
    for (kernel, config, precision), per_size in table.items():
        if len(per_size) < 2:
            raise ArityError(f"{kernel}/{config}: need records for at least 2 sizes, got {len(per_size)}")
        values = tuple((size, statistics.median(v)) for size, v in per_size.items())
        lo = min(v for _, v in values)
        hi = max(v for _, v in values)
        entries.append(StabilityEntry(kernel, config, precision, values, lo, hi, (hi - lo) / lo))
    if not entries:
        raise ArityError("no records with W > 0 to compare")
    return entries
