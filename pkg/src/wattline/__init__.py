"""Power sampling, energy integration and power/energy-efficiency roofline models."""

__version__ = "0.1.0"

from .builder import (
    CORE_I7_6800K,
    GTX_970,
    CeilingRecordGroup,
    ConfigDelta,
    KernelPlacement,
    PlatformSpec,
    StabilityEntry,
    build_model,
    compare_configs,
    group_records,
    place_kernels,
    stability_report,
)
from .energy import (
    ParsedLog,
    RegionReport,
    integrate_region,
    parse_log,
    region_report,
    region_reports,
    to_measurement_record,
)
from .model import (
    Boundedness,
    Ceiling,
    DerivedMetrics,
    EnergyCoefficients,
    Kind,
    MeasurementRecord,
    Precision,
    RooflineModel,
    attainable_power,
    classify,
    derive_metrics,
    fit_energy_coefficients,
    gap_to_roofline,
    predict_energy,
    ridge_point,
)
from .sampler import LogSummary, MonotonicClock, PowerSample, Sampler, SamplerConfig, VirtualClock, init
from .sources import parse_source_spec
