"""Which properties each (OS, hardware vendor) combination can report.

The CPU table is keyed by (platform, cpu vendor); the GPU table by
(platform, gpu vendor). A detected capability set must never exceed the
row for its host.
"""

from __future__ import annotations

from .metrics import CpuVendor, Domain, Kind, MetricDescriptor, Platform, ProbeCapabilities

CPU_USAGE = "cpu_usage"
PACKAGE_POWER = "package_power"
SYSTEM_POWER = "system_power"
CORE_FREQUENCY = "core_frequency"
CORE_POWER = "core_power"
MEMORY_USAGE = "memory_usage"

GPU_USAGE = "gpu_usage"
GPU_FREQUENCY = "gpu_frequency"
GPU_POWER = "gpu_power"

_COMMON = frozenset({CPU_USAGE, PACKAGE_POWER, CORE_FREQUENCY, MEMORY_USAGE})

CPU_SUPPORT: dict[tuple[Platform, CpuVendor], frozenset[str]] = {
    (Platform.WINDOWS, CpuVendor.INTEL): _COMMON,
    (Platform.WINDOWS, CpuVendor.AMD): _COMMON,
    (Platform.WINDOWS, CpuVendor.OTHER): _COMMON,
    (Platform.LINUX, CpuVendor.INTEL): _COMMON,
    (Platform.LINUX, CpuVendor.AMD): _COMMON | {CORE_POWER},
    (Platform.LINUX, CpuVendor.OTHER): _COMMON,
    (Platform.MACOS, CpuVendor.INTEL): frozenset(
        {CPU_USAGE, PACKAGE_POWER, SYSTEM_POWER, MEMORY_USAGE}
    ),
    (Platform.MACOS, CpuVendor.APPLE_ARM): frozenset({CPU_USAGE, SYSTEM_POWER, MEMORY_USAGE}),
}

# Windows and Linux GPUs are read through NVML; on macOS the SMC reports GPU power only.
GPU_SUPPORT: dict[tuple[Platform, str], frozenset[str]] = {
    (Platform.WINDOWS, "nvidia"): frozenset({GPU_USAGE, GPU_FREQUENCY, GPU_POWER}),
    (Platform.LINUX, "nvidia"): frozenset({GPU_USAGE, GPU_FREQUENCY, GPU_POWER}),
    (Platform.MACOS, "amd"): frozenset({GPU_POWER}),
    (Platform.MACOS, "intel"): frozenset({GPU_POWER}),
    (Platform.MACOS, "apple"): frozenset({GPU_POWER}),
}


def property_of(metric: MetricDescriptor) -> str | None:
    """Map a metric to the table row it belongs to (None if unlisted)."""
    energy = metric.kind in (Kind.CUMULATIVE_ENERGY, Kind.INSTANTANEOUS_POWER)
    if metric.domain is Domain.PACKAGE:
        return PACKAGE_POWER if energy else None
    if metric.domain is Domain.SYSTEM:
        return SYSTEM_POWER if energy else None
    if metric.domain is Domain.MEMORY:
        return MEMORY_USAGE
    if metric.domain is Domain.CORE:
        if energy:
            return CORE_POWER
        return CORE_FREQUENCY if "FREQUENCY" in metric.name else CPU_USAGE
    if metric.domain is Domain.GPU:
        if energy:
            return GPU_POWER
        return GPU_FREQUENCY if "FREQUENCY" in metric.name else GPU_USAGE
    return None


def allowed(metric: MetricDescriptor, platform: Platform, cpu_vendor: CpuVendor, gpu_vendor: str | None = None) -> bool:
    prop = property_of(metric)
    if prop is None:
        return False
    if metric.domain is Domain.GPU:
        return prop in GPU_SUPPORT.get((platform, gpu_vendor or ""), frozenset())
    return prop in CPU_SUPPORT.get((platform, cpu_vendor), frozenset())


def violations(caps: ProbeCapabilities, gpu_vendor_of: dict[str, str] | None = None) -> list[str]:
    """Names of metrics in ``caps`` that the support tables do not allow.

    Capabilities without a platform (the simulated backend) never violate.
    """
    if caps.platform is None:
        return []
    gpu_vendor_of = gpu_vendor_of or {}
    bad = []
    for metric in caps.metrics:
        vendor = gpu_vendor_of.get(metric.name)
        if vendor is None and len(caps.gpu_vendors) == 1:
            vendor = next(iter(caps.gpu_vendors))
        if not allowed(metric, caps.platform, caps.cpu_vendor, vendor):
            bad.append(metric.name)
    return bad
