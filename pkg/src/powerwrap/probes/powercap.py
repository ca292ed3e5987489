"""Linux powercap sysfs backend (``/sys/class/powercap/intel-rapl:*``).

Counters are microjoules and wrap at ``max_energy_range_uj``. Only
package domains are exposed; ``core`` (PP0), ``uncore``, ``dram`` and
``psys`` have no matching column in the support table.
"""

from __future__ import annotations

import logging
import os
import time
from pathlib import Path

from .base import Probe
from .metrics import (
    CounterFormat,
    CpuVendor,
    Domain,
    Kind,
    MetricDescriptor,
    Platform,
    ProbeCapabilities,
    ProbeReadError,
    ProbeUnavailable,
    RawCounterReading,
    Unit,
)

log = logging.getLogger(__name__)

MICROJOULE = 1e-6
POWERCAP_WIDTH = 64


class PowercapProbe(Probe):
    name = "powercap"

    def __init__(self, root: str | os.PathLike = "/sys/class/powercap",
                 cpu_vendor: CpuVendor = CpuVendor.OTHER) -> None:
        self.root = Path(root)
        self.cpu_vendor = cpu_vendor
        if not self.root.is_dir():
            raise ProbeUnavailable(f"{self.root} does not exist")
        zones = []
        for zone in sorted(self.root.glob("*-rapl:*")):
            # top-level zones only, e.g. intel-rapl:0 but not intel-rapl:0:0
            if zone.name.count(":") != 1:
                continue
            try:
                domain_name = (zone / "name").read_text().strip()
            except OSError:
                continue
            if not domain_name.startswith("package"):
                log.debug("powercap: skipping domain %s (%s)", zone.name, domain_name)
                continue
            zones.append((zone, domain_name))
        if not zones:
            raise ProbeUnavailable(f"no package domains under {self.root}")

        self._files: dict[str, Path] = {}
        metrics = []
        for zone, domain_name in zones:
            energy = zone / "energy_uj"
            try:
                int(energy.read_text())
                max_range = int((zone / "max_energy_range_uj").read_text())
            except PermissionError as exc:
                raise ProbeUnavailable(f"{energy}: permission denied") from exc
            except (OSError, ValueError) as exc:
                raise ProbeUnavailable(f"{energy}: {exc}") from exc
            index = int(domain_name.rpartition("-")[2]) if "-" in domain_name else 0
            name = "PACKAGE_ENERGY" if len(zones) == 1 else f"PACKAGE{index}_ENERGY"
            fmt = CounterFormat(MICROJOULE, POWERCAP_WIDTH, max_raw=max_range)
            metrics.append(
                MetricDescriptor(name, Unit.JOULES, Kind.CUMULATIVE_ENERGY, Domain.PACKAGE,
                                 index=index if len(zones) > 1 else None, counter=fmt)
            )
            self._files[name] = energy
        self._metrics = tuple(metrics)

    def capabilities(self) -> ProbeCapabilities:
        return ProbeCapabilities(self._metrics, Platform.LINUX, self.cpu_vendor)

    def read_counter(self, metric: MetricDescriptor) -> RawCounterReading:
        try:
            raw = int(self._files[metric.name].read_text())
        except (OSError, ValueError) as exc:
            raise ProbeReadError(f"{metric.name}: {exc}") from exc
        return metric.counter.reading(raw, time.monotonic_ns())
