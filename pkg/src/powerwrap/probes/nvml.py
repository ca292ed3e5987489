"""Nvidia GPU power, utilization and clock through NVML (ctypes binding)."""

from __future__ import annotations

import ctypes
import ctypes.util
import sys
from typing import Protocol

from .base import Probe
from .metrics import (
    CpuVendor,
    Domain,
    Kind,
    MetricDescriptor,
    Platform,
    ProbeCapabilities,
    ProbeReadError,
    ProbeUnavailable,
    Unit,
)

NVML_CLOCK_GRAPHICS = 0


class _Utilization(ctypes.Structure):
    _fields_ = [("gpu", ctypes.c_uint), ("memory", ctypes.c_uint)]


class NvmlLibrary(Protocol):
    def device_count(self) -> int: ...

    def power_watts(self, index: int) -> float: ...

    def utilization_percent(self, index: int) -> float: ...

    def graphics_clock_mhz(self, index: int) -> float: ...

    def shutdown(self) -> None: ...


class CtypesNvml:
    """Minimal dynamic binding to ``libnvidia-ml`` / ``nvml.dll``."""

    def __init__(self, path: str | None = None) -> None:
        candidates = [path] if path else (
            ["nvml.dll"] if sys.platform == "win32"
            else ["libnvidia-ml.so.1", ctypes.util.find_library("nvidia-ml")]
        )
        lib = None
        for candidate in filter(None, candidates):
            try:
                lib = ctypes.CDLL(candidate)
                break
            except OSError:
                continue
        if lib is None:
            raise ProbeUnavailable("NVML library not found")
        self._lib = lib
        self._check(lib.nvmlInit_v2(), "nvmlInit")
        self._handles: dict[int, ctypes.c_void_p] = {}

    @staticmethod
    def _check(rc: int, what: str) -> None:
        if rc != 0:
            raise ProbeReadError(f"{what} failed with NVML error {rc}")

    def _handle(self, index: int) -> ctypes.c_void_p:
        handle = self._handles.get(index)
        if handle is None:
            handle = ctypes.c_void_p()
            self._check(self._lib.nvmlDeviceGetHandleByIndex_v2(index, ctypes.byref(handle)),
                        "nvmlDeviceGetHandleByIndex")
            self._handles[index] = handle
        return handle

    def device_count(self) -> int:
        count = ctypes.c_uint()
        self._check(self._lib.nvmlDeviceGetCount_v2(ctypes.byref(count)), "nvmlDeviceGetCount")
        return count.value

    def power_watts(self, index: int) -> float:
        milliwatts = ctypes.c_uint()
        self._check(self._lib.nvmlDeviceGetPowerUsage(self._handle(index), ctypes.byref(milliwatts)),
                    "nvmlDeviceGetPowerUsage")
        return milliwatts.value / 1000.0

    def utilization_percent(self, index: int) -> float:
        util = _Utilization()
        self._check(self._lib.nvmlDeviceGetUtilizationRates(self._handle(index), ctypes.byref(util)),
                    "nvmlDeviceGetUtilizationRates")
        return float(util.gpu)

    def graphics_clock_mhz(self, index: int) -> float:
        mhz = ctypes.c_uint()
        self._check(self._lib.nvmlDeviceGetClockInfo(self._handle(index), NVML_CLOCK_GRAPHICS,
                                                     ctypes.byref(mhz)), "nvmlDeviceGetClockInfo")
        return float(mhz.value)

    def shutdown(self) -> None:
        self._lib.nvmlShutdown()


class NvmlProbe(Probe):
    """One ``GPU<i>_POWER`` / ``GPU<i>_USAGE`` / ``GPU<i>_FREQUENCY`` set per device."""

    name = "nvml"

    def __init__(self, platform: Platform, cpu_vendor: CpuVendor,
                 library: NvmlLibrary | None = None) -> None:
        if platform is Platform.MACOS:
            raise ProbeUnavailable("NVML is not supported on macOS")
        self.platform = platform
        self.cpu_vendor = cpu_vendor
        self.lib = library if library is not None else CtypesNvml()
        try:
            count = self.lib.device_count()
        except ProbeReadError as exc:
            raise ProbeUnavailable(str(exc)) from exc
        if count == 0:
            raise ProbeUnavailable("no Nvidia GPUs")
        power, gauges = [], []
        for i in range(count):
            power.append(MetricDescriptor(f"GPU{i}_POWER", Unit.WATTS, Kind.INSTANTANEOUS_POWER,
                                          Domain.GPU, index=i))
            gauges.append(MetricDescriptor(f"GPU{i}_USAGE", Unit.PERCENT, Kind.GAUGE, Domain.GPU, index=i))
            gauges.append(MetricDescriptor(f"GPU{i}_FREQUENCY", Unit.MEGAHERTZ, Kind.GAUGE,
                                           Domain.GPU, index=i))
        self._metrics = tuple(power + gauges)

    def capabilities(self) -> ProbeCapabilities:
        return ProbeCapabilities(self._metrics, self.platform, self.cpu_vendor, frozenset({"nvidia"}))

    def read_power_watts(self, metric: MetricDescriptor) -> float:
        return self.lib.power_watts(metric.index)

    def read_gauge(self, metric: MetricDescriptor) -> float:
        if metric.name.endswith("_USAGE"):
            return self.lib.utilization_percent(metric.index)
        return self.lib.graphics_clock_mhz(metric.index)

    def close(self) -> None:
        self.lib.shutdown()
