"""Wrap a command, sample CPU/GPU energy and usage at fixed intervals, and
analyse repeated runs."""

from ._version import __version__
from .analysis import (
    AggregateCurve,
    ComparisonReport,
    PowerSeries,
    aggregate,
    compare,
    emit_plot,
    power_series,
    randomized_schedule,
)
from .probes import detect_probes, simulated_probe
from .runner import RunOutcome, RunSpec, execute
from .sampler import SamplerConfig, run_session
from .simulate import simulate_trace
from .trace import RunSummary, Sample, Trace, read_csv, summarize, write_csv

__all__ = [
    "AggregateCurve", "ComparisonReport", "PowerSeries", "RunOutcome", "RunSpec", "RunSummary",
    "Sample", "SamplerConfig", "Trace", "__version__", "aggregate", "compare", "detect_probes",
    "emit_plot", "execute", "power_series", "randomized_schedule", "read_csv", "run_session",
    "simulate_trace", "simulated_probe", "summarize", "write_csv",
]
