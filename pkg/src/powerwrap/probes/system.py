"""OS-level gauges: per-core usage and frequency, memory usage."""

from __future__ import annotations

import os
from pathlib import Path

import psutil

from .base import Probe
from .metrics import (
    CpuVendor,
    Domain,
    Kind,
    MetricDescriptor,
    Platform,
    ProbeCapabilities,
    ProbeReadError,
    Unit,
)


def _usage(i: int) -> MetricDescriptor:
    return MetricDescriptor(f"CPU_USAGE_{i}", Unit.PERCENT, Kind.GAUGE, Domain.CORE, index=i)


def _frequency(i: int) -> MetricDescriptor:
    return MetricDescriptor(f"CPU_FREQUENCY_{i}", Unit.MEGAHERTZ, Kind.GAUGE, Domain.CORE, index=i)


USED_MEMORY = MetricDescriptor("USED_MEMORY", Unit.BYTES, Kind.GAUGE, Domain.MEMORY)
TOTAL_MEMORY = MetricDescriptor("TOTAL_MEMORY", Unit.BYTES, Kind.GAUGE, Domain.MEMORY)


class SystemProbe(Probe):
    """CPU usage per logical core, core frequency and memory via psutil.

    On Linux, frequency comes from ``cpufreq/scaling_cur_freq`` when the
    sysfs files exist and from psutil otherwise. macOS exposes no per-core
    frequency, so none is reported there.
    """

    name = "system"

    def __init__(
        self,
        platform: Platform,
        cpu_vendor: CpuVendor,
        cpu_count: int | None = None,
        cpufreq_root: str | os.PathLike = "/sys/devices/system/cpu",
    ) -> None:
        self.platform = platform
        self.cpu_vendor = cpu_vendor
        self.cpu_count = cpu_count or psutil.cpu_count(logical=True) or 1
        self._freq_files: list[Path] | None = None
        self._freq_from_psutil = False
        if platform is not Platform.MACOS:
            root = Path(cpufreq_root)
            files = [root / f"cpu{i}" / "cpufreq" / "scaling_cur_freq" for i in range(self.cpu_count)]
            if all(f.exists() for f in files):
                self._freq_files = files
            else:
                try:
                    self._freq_from_psutil = bool(psutil.cpu_freq(percpu=True))
                except (OSError, NotImplementedError, AttributeError):
                    self._freq_from_psutil = False
        metrics = [_usage(i) for i in range(self.cpu_count)]
        if self._freq_files is not None or self._freq_from_psutil:
            metrics += [_frequency(i) for i in range(self.cpu_count)]
        metrics += [USED_MEMORY, TOTAL_MEMORY]
        self._metrics = tuple(metrics)

    def capabilities(self) -> ProbeCapabilities:
        return ProbeCapabilities(self._metrics, self.platform, self.cpu_vendor)

    def start(self) -> None:
        # psutil reports usage since the previous call; prime the baseline.
        psutil.cpu_percent(percpu=True)

    def _frequencies(self) -> list[float]:
        if self._freq_files is not None:
            return [int(f.read_text()) / 1000.0 for f in self._freq_files]
        freqs = psutil.cpu_freq(percpu=True)
        if len(freqs) == 1:
            # Windows reports a single package-wide value.
            return [freqs[0].current] * self.cpu_count
        return [f.current for f in freqs]

    def poll(self, metrics: list[MetricDescriptor]) -> dict[str, float | None]:
        wanted = {m.name for m in metrics}
        values: dict[str, float | None] = dict.fromkeys(wanted)
        if any(n.startswith("CPU_USAGE_") for n in wanted):
            try:
                for i, pct in enumerate(psutil.cpu_percent(percpu=True)):
                    values[f"CPU_USAGE_{i}"] = float(pct)
            except OSError:
                pass
        if any(n.startswith("CPU_FREQUENCY_") for n in wanted):
            try:
                for i, mhz in enumerate(self._frequencies()):
                    values[f"CPU_FREQUENCY_{i}"] = float(mhz)
            except (OSError, ValueError):
                pass
        if wanted & {"USED_MEMORY", "TOTAL_MEMORY"}:
            vm = psutil.virtual_memory()
            values["USED_MEMORY"] = float(vm.total - vm.available)
            values["TOTAL_MEMORY"] = float(vm.total)
        return {name: values.get(name) for name in (m.name for m in metrics)}

    def read_gauge(self, metric: MetricDescriptor) -> float:
        value = self.poll([metric])[metric.name]
        if value is None:
            raise ProbeReadError(f"{metric.name} unavailable")
        return value
