"""Hardware probes: uniform access to energy, power and usage metrics."""

from .base import Probe
from .detect import (
    DetectionResult,
    HostEnvironment,
    ProbeWarning,
    detect_probes,
    host_cpu_vendor,
    host_platform,
    session_schema,
)
from .metrics import (
    CounterFormat,
    CpuVendor,
    Domain,
    Kind,
    MetricDescriptor,
    Platform,
    ProbeCapabilities,
    ProbeError,
    ProbeReadError,
    ProbeUnavailable,
    RawCounterReading,
    Unit,
    counter_delta_joules,
    counter_delta_units,
)
from .simulated import (
    Constant,
    Playback,
    PowerProfile,
    ProfileError,
    SimulatedProbe,
    Sinusoid,
    Step,
    parse_profile,
)


def read_counter(probe: Probe, metric: MetricDescriptor) -> RawCounterReading:
    return probe.read_counter(metric)


def read_power_watts(probe: Probe, metric: MetricDescriptor) -> float:
    return probe.read_power_watts(metric)


def simulated_probe(profile: PowerProfile | str, unit_joules: float = 1e-6, width_bits: int = 32,
                    **kwargs) -> SimulatedProbe:
    return SimulatedProbe(profile, unit_joules=unit_joules, width_bits=width_bits, **kwargs)


__all__ = [
    "Constant", "CounterFormat", "CpuVendor", "DetectionResult", "Domain", "HostEnvironment",
    "Kind", "MetricDescriptor", "Platform", "Playback", "PowerProfile", "Probe",
    "ProbeCapabilities", "ProbeError", "ProbeReadError", "ProbeUnavailable", "ProbeWarning",
    "ProfileError", "RawCounterReading", "SimulatedProbe", "Sinusoid", "Step", "Unit",
    "counter_delta_joules", "counter_delta_units", "detect_probes", "host_cpu_vendor",
    "host_platform", "parse_profile", "read_counter", "read_power_watts", "session_schema",
    "simulated_probe",
]
