"""Backend discovery and session schema ordering."""

from __future__ import annotations

import logging
import platform as _platform
import subprocess
import sys
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field
from pathlib import Path

from .base import Probe
from .metrics import (
    CpuVendor,
    Domain,
    Kind,
    MetricDescriptor,
    Platform,
    ProbeCapabilities,
    ProbeError,
)
from .msr import MsrAccess, MsrProbe, WindowsMsrAccess
from .nvml import NvmlLibrary, NvmlProbe
from .powercap import PowercapProbe
from .smc import SmcConnection, SmcProbe
from .support import allowed
from .system import SystemProbe

log = logging.getLogger(__name__)


def host_platform() -> Platform:
    if sys.platform.startswith("linux"):
        return Platform.LINUX
    if sys.platform == "darwin":
        return Platform.MACOS
    if sys.platform == "win32":
        return Platform.WINDOWS
    raise ProbeError(f"unsupported platform {sys.platform}")


def host_cpu_vendor(platform: Platform | None = None) -> CpuVendor:
    platform = platform or host_platform()
    text = ""
    if platform is Platform.LINUX:
        try:
            text = Path("/proc/cpuinfo").read_text()
        except OSError:
            pass
    elif platform is Platform.MACOS:
        if _platform.machine() == "arm64":
            return CpuVendor.APPLE_ARM
        try:
            text = subprocess.run(["sysctl", "-n", "machdep.cpu.vendor"], capture_output=True,
                                  text=True, timeout=5).stdout
        except (OSError, subprocess.SubprocessError):
            pass
    else:
        text = _platform.processor()
    if "GenuineIntel" in text or "Intel" in text:
        return CpuVendor.INTEL
    if "AuthenticAMD" in text or "AMD" in text:
        return CpuVendor.AMD
    return CpuVendor.OTHER


@dataclass
class HostEnvironment:
    """Where to look for each backend. Defaults describe the running host;
    tests point the paths at fake trees and inject fake libraries."""

    platform: Platform = field(default_factory=host_platform)
    cpu_vendor: CpuVendor | None = None
    cpu_count: int | None = None
    msr_root: str = "/dev/cpu"
    powercap_root: str = "/sys/class/powercap"
    cpu_sysfs_root: str = "/sys/devices/system/cpu"
    smc_connection: Callable[[], SmcConnection] | None = None
    nvml_library: Callable[[], NvmlLibrary] | None = None

    def __post_init__(self) -> None:
        if self.cpu_vendor is None:
            self.cpu_vendor = host_cpu_vendor(self.platform)


@dataclass(frozen=True)
class ProbeWarning:
    backend: str
    reason: str

    def __str__(self) -> str:
        return f"{self.backend}: {self.reason}"


@dataclass
class DetectionResult:
    probes: list[tuple[Probe, ProbeCapabilities]]
    warnings: list[ProbeWarning]

    def __iter__(self) -> Iterator[tuple[Probe, ProbeCapabilities]]:
        return iter(self.probes)

    def __len__(self) -> int:
        return len(self.probes)

    def capabilities(self) -> list[ProbeCapabilities]:
        return [caps for _, caps in self.probes]

    def metrics(self) -> list[MetricDescriptor]:
        return session_schema(self.capabilities())

    def close(self) -> None:
        for probe, _ in self.probes:
            probe.close()


def _rank(metric: MetricDescriptor) -> int:
    energy = metric.kind is not Kind.GAUGE
    if energy and metric.domain is Domain.PACKAGE:
        return 0
    if energy and metric.domain is Domain.CORE:
        return 1
    if energy and metric.domain is Domain.SYSTEM:
        return 2
    if energy and metric.domain is Domain.GPU:
        return 3
    return 4


def session_schema(capabilities: list[ProbeCapabilities]) -> list[MetricDescriptor]:
    """All metrics ordered package, per-core, system, GPU, then gauges."""
    metrics = [m for caps in capabilities for m in caps.metrics]
    return sorted(metrics, key=_rank)


class _Restricted(Probe):
    """Wraps a probe, exposing only the metrics the support table allows."""

    def __init__(self, inner: Probe, caps: ProbeCapabilities) -> None:
        self.inner = inner
        self.name = inner.name
        self._caps = caps

    def capabilities(self) -> ProbeCapabilities:
        return self._caps

    def start(self) -> None:
        self.inner.start()

    def close(self) -> None:
        self.inner.close()

    def read(self, metric: MetricDescriptor) -> float:
        return self.inner.read(metric)

    def read_counter(self, metric):
        return self.inner.read_counter(metric)

    def read_power_watts(self, metric):
        return self.inner.read_power_watts(metric)

    def read_gauge(self, metric):
        return self.inner.read_gauge(metric)

    def poll(self, metrics):
        return self.inner.poll(metrics)


def _conform(probe: Probe, host: HostEnvironment) -> tuple[Probe, ProbeCapabilities] | None:
    caps = probe.capabilities()
    gpu_vendor = next(iter(caps.gpu_vendors), None)
    keep = tuple(m for m in caps.metrics if allowed(m, host.platform, host.cpu_vendor, gpu_vendor))
    dropped = [m.name for m in caps.metrics if m not in keep]
    if dropped:
        log.debug("%s: dropping metrics outside the support table: %s", probe.name, dropped)
    if not keep:
        return None
    if len(keep) == len(caps.metrics):
        return probe, caps
    restricted = ProbeCapabilities(keep, caps.platform, caps.cpu_vendor, caps.gpu_vendors)
    return _Restricted(probe, restricted), restricted


def detect_probes(host: HostEnvironment | None = None) -> DetectionResult:
    """Initialize every backend that works on this host.

    Never raises for a missing or inaccessible backend: the failure is
    recorded as a :class:`ProbeWarning` and discovery continues. CPU usage
    and memory gauges are always present.
    """
    host = host or HostEnvironment()
    found: list[tuple[Probe, ProbeCapabilities]] = []
    warnings: list[ProbeWarning] = []

    def attempt(backend: str, factory: Callable[[], Probe]) -> bool:
        try:
            probe = factory()
        except (ProbeError, OSError, ValueError) as exc:
            warnings.append(ProbeWarning(backend, str(exc)))
            return False
        conformed = _conform(probe, host)
        if conformed is None:
            probe.close()
            warnings.append(ProbeWarning(backend, "no metrics supported on this platform"))
            return False
        found.append(conformed)
        return True

    p, vendor = host.platform, host.cpu_vendor
    if p is Platform.LINUX:
        if not attempt("msr", lambda: MsrProbe(vendor, MsrAccess(host.msr_root), p, host.cpu_sysfs_root)):
            attempt("powercap", lambda: PowercapProbe(host.powercap_root, vendor))
    elif p is Platform.WINDOWS:
        attempt("msr", lambda: MsrProbe(vendor, WindowsMsrAccess(), p))
    elif p is Platform.MACOS:
        attempt("smc", lambda: SmcProbe(vendor, host.smc_connection() if host.smc_connection else None))

    if p is not Platform.MACOS:
        attempt("nvml", lambda: NvmlProbe(p, vendor, host.nvml_library() if host.nvml_library else None))

    attempt("system", lambda: SystemProbe(p, vendor, host.cpu_count, host.cpu_sysfs_root))
    for w in warnings:
        log.info("probe backend unavailable: %s", w)
    return DetectionResult(found, warnings)
