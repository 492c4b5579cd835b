"""Value types and closed-form math for the power / energy-efficiency roofline.

The x-axis of the model is energy per unit of work (J/FLOP for compute
models, J/byte for memory models) and the y-axis is power. A ceiling with
rate ``r`` is the line ``P = e * r``; the platform's power roof clips it at
``p_peak``. Everything here is SI internally.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import nnls

from .errors import ArityError, CeilingLookupError, DomainError, FitError, ModelError

logger = logging.getLogger(__name__)

GIGA = 1e9
DEFAULT_RIDGE_TOL = 0.01


class Precision(str, Enum):
    SINGLE = "single"
    DOUBLE = "double"
    NA = "n/a"

    @classmethod
    def parse(cls, value: str | "Precision") -> "Precision":
        if isinstance(value, Precision):
            return value
        key = value.strip().lower()
        aliases = {"sp": "single", "fp32": "single", "dp": "double", "fp64": "double", "na": "n/a", "": "n/a"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise DomainError(f"unknown precision {value!r}") from None


class Kind(str, Enum):
    COMPUTE = "compute"
    MEMORY = "memory"

    @classmethod
    def parse(cls, value: str | "Kind") -> "Kind":
        if isinstance(value, Kind):
            return value
        try:
            return cls(value.strip().lower())
        except ValueError:
            raise DomainError(f"unknown model kind {value!r}") from None


class Boundedness(str, Enum):
    COMPUTE_BOUND = "compute_bound"
    POWER_BOUND = "power_bound"
    ON_RIDGE = "on_ridge"


@dataclass(frozen=True)
class MeasurementRecord:
    """One kernel run: work ``W`` (FLOP), traffic ``Q`` (bytes), time ``t`` (s), energy ``E`` (J)."""

    kernel_name: str
    W: float
    Q: float
    t: float
    E: float
    config_label: str = ""
    precision: Precision = Precision.NA

    def __post_init__(self):
        object.__setattr__(self, "precision", Precision.parse(self.precision))
        for name in ("W", "Q", "t", "E"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{self.kernel_name}: {name} must be finite, got {value!r}")
        if self.t <= 0:
            raise DomainError(f"{self.kernel_name}: duration must be positive, got {self.t!r}")
        if self.E < 0 or self.W < 0 or self.Q < 0:
            raise DomainError(f"{self.kernel_name}: W, Q and E must be non-negative")
        if self.W == 0 and self.Q == 0:
            raise DomainError(f"{self.kernel_name}: at least one of W, Q must be positive")


@dataclass(frozen=True)
class DerivedMetrics:
    """Ratios derived from a record. Fields that would divide by zero are ``None``."""

    P: float
    pi: float
    bw: float
    e_w: Optional[float] = None
    e_q: Optional[float] = None
    ee_comp: Optional[float] = None
    ee_mem: Optional[float] = None


def derive_metrics(rec: MeasurementRecord) -> DerivedMetrics:
    e_w = ee_comp = e_q = ee_mem = None
    if rec.W > 0 and rec.E > 0:
        e_w = rec.E / rec.W
        ee_comp = rec.W / rec.E
    if rec.Q > 0 and rec.E > 0:
        e_q = rec.E / rec.Q
        ee_mem = rec.Q / rec.E
    return DerivedMetrics(
        P=rec.E / rec.t,
        pi=rec.W / rec.t,
        bw=rec.Q / rec.t,
        e_w=e_w,
        e_q=e_q,
        ee_comp=ee_comp,
        ee_mem=ee_mem,
    )


@dataclass(frozen=True)
class Ceiling:
    name: str
    kind: Kind
    rate: float
    precision: Precision = Precision.NA

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        object.__setattr__(self, "precision", Precision.parse(self.precision))
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ModelError(f"ceiling {self.name!r}: rate must be positive and finite, got {self.rate!r}")


@dataclass(frozen=True)
class RooflineModel:
    """A power roof plus sloped ceilings, kept sorted by descending rate."""

    platform: str
    p_peak: float
    kind: Kind
    precision: Precision
    ceilings: tuple[Ceiling, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        object.__setattr__(self, "precision", Precision.parse(self.precision))
        if not (self.p_peak > 0 and math.isfinite(self.p_peak)):
            raise ModelError(f"p_peak must be positive and finite, got {self.p_peak!r}")
        if not self.ceilings:
            raise ModelError("a model needs at least one ceiling")
        names = set()
        for c in self.ceilings:
            if c.kind is not self.kind or c.precision is not self.precision:
                raise ModelError(
                    f"ceiling {c.name!r} is {c.kind.value}/{c.precision.value}, "
                    f"model is {self.kind.value}/{self.precision.value}"
                )
            if c.name in names:
                raise ModelError(f"duplicate ceiling name {c.name!r}")
            names.add(c.name)
        ordered = tuple(sorted(self.ceilings, key=lambda c: -c.rate))
        for a, b in zip(ordered, ordered[1:]):
            if a.rate == b.rate:
                raise ModelError(f"ceilings {a.name!r} and {b.name!r} have the same rate {a.rate!r}")
        object.__setattr__(self, "ceilings", ordered)

    @property
    def top(self) -> Ceiling:
        return self.ceilings[0]

    def ceiling(self, name: Optional[str] = None) -> Ceiling:
        if name is None:
            return self.top
        for c in self.ceilings:
            if c.name == name:
                return c
        raise CeilingLookupError(f"no ceiling named {name!r} in model for {self.platform!r}")

    def ridges(self) -> list[float]:
        return [ridge_point(self.p_peak, c.rate) for c in self.ceilings]


def ridge_point(p_peak: float, rate: float) -> float:
    """Energy per unit at which a ceiling of ``rate`` meets the power roof."""
    if not (p_peak > 0 and rate > 0):
        raise DomainError(f"ridge point needs positive p_peak and rate, got {p_peak!r}, {rate!r}")
    return p_peak / rate


def attainable_power(model: RooflineModel, ceiling_name: Optional[str], e_per_unit: float) -> float:
    ceiling = model.ceiling(ceiling_name)
    if not e_per_unit > 0:
        raise DomainError(f"energy per unit must be positive, got {e_per_unit!r}")
    return min(e_per_unit * ceiling.rate, model.p_peak)


def classify(
    model: RooflineModel,
    ceiling_name: Optional[str],
    e_per_unit: float,
    tol: float = DEFAULT_RIDGE_TOL,
) -> Boundedness:
    ceiling = model.ceiling(ceiling_name)
    if not e_per_unit > 0:
        raise DomainError(f"energy per unit must be positive, got {e_per_unit!r}")
    if tol < 0:
        raise DomainError(f"tolerance must be non-negative, got {tol!r}")
    ridge = ridge_point(model.p_peak, ceiling.rate)
    if e_per_unit < ridge * (1 - tol):
        return Boundedness.COMPUTE_BOUND
    if e_per_unit > ridge * (1 + tol):
        return Boundedness.POWER_BOUND
    return Boundedness.ON_RIDGE


def gap_to_roofline(model: RooflineModel, ceiling_name: Optional[str], point: tuple[float, float]) -> float:
    """Measured power over attainable power at the point's energy per unit."""
    e_per_unit, power = point
    if not power > 0:
        raise DomainError(f"point power must be positive, got {power!r}")
    return power / attainable_power(model, ceiling_name, e_per_unit)


@dataclass(frozen=True)
class EnergyCoefficients:
    eps_flop: float
    eps_mem: float
    e0: float
    residual_rms: float = 0.0

    def __post_init__(self):
        if self.eps_flop < 0 or self.eps_mem < 0 or self.e0 < 0:
            raise DomainError("energy coefficients must be non-negative")


def predict_energy(coeffs: EnergyCoefficients, W: float, Q: float) -> float:
    if W < 0 or Q < 0:
        raise DomainError("W and Q must be non-negative")
    return W * coeffs.eps_flop + Q * coeffs.eps_mem + coeffs.e0


_COLUMN_NAMES = ("W", "Q", "constant")


def _collinear_columns(a: np.ndarray, names: Sequence[str]) -> list[str]:
    # the right singular vector of the smallest singular value spans the dependency
    _, _, vt = np.linalg.svd(a, full_matrices=True)
    v = np.abs(vt[-1])
    return [n for n, weight in zip(names, v) if weight > 1e-6 * v.max()]


def fit_energy_coefficients(
    records: Iterable[MeasurementRecord],
    include_constant: bool = True,
    rcond: float = 1e-10,
) -> EnergyCoefficients:
    """Least-squares fit of ``E ~ W*eps_flop + Q*eps_mem (+ e0)``.

    All-zero regressors are dropped (their coefficient is reported as 0).
    If unconstrained least squares produces a materially negative
    coefficient, the fit is redone as non-negative least squares and a
    ``RuntimeWarning`` is emitted.
    """
    records = list(records)
    needed = 3 if include_constant else 2
    if len(records) < needed:
        raise ArityError(f"need at least {needed} records to fit, got {len(records)}")

    W = np.array([r.W for r in records], dtype=float)
    Q = np.array([r.Q for r in records], dtype=float)
    E = np.array([r.E for r in records], dtype=float)
    columns = [W, Q] + ([np.ones_like(E)] if include_constant else [])
    active = [i for i, col in enumerate(columns) if np.any(col != 0)]

    a = np.column_stack([columns[i] for i in active])
    scale = np.linalg.norm(a, axis=0)
    a_scaled = a / scale
    names = [_COLUMN_NAMES[i] for i in active]

    s = np.linalg.svd(a_scaled, compute_uv=False)
    if len(s) < len(active) or s[-1] <= rcond * s[0]:
        raise FitError(f"design matrix is rank deficient; collinear columns: {', '.join(_collinear_columns(a_scaled, names))}")

    x, *_ = np.linalg.lstsq(a_scaled, E, rcond=None)
    # roundoff-level negatives are zeroed silently; anything larger means the data disagree with physics
    floor = 1e-9 * max(np.linalg.norm(E), np.finfo(float).tiny)
    if np.any(x < -floor):
        bad = [n for n, v in zip(names, x) if v < -floor]
        warnings.warn(
            f"least squares gave negative energy coefficient(s) for {', '.join(bad)}; "
            "refitting with non-negativity constraints",
            RuntimeWarning,
            stacklevel=2,
        )
        x, _ = nnls(a_scaled, E)
    x = np.clip(x, 0.0, None)

    coef = np.zeros(3)
    coef[active] = x / scale
    residual = E - a_scaled @ x
    rms = float(np.sqrt(np.mean(residual**2)))
    logger.debug("fit %d records: coef=%s rms=%.3g", len(records), coef, rms)
    return EnergyCoefficients(eps_flop=float(coef[0]), eps_mem=float(coef[1]), e0=float(coef[2]), residual_rms=rms)
