"""RAPL energy counters read straight from model-specific registers.

On Linux the registers are exposed per logical CPU as ``/dev/cpu/N/msr``
(``modprobe msr``, root or CAP_SYS_RAWIO). Windows needs a signed kernel
driver; only its access interface is defined here.
"""

from __future__ import annotations

import logging
import os
import struct
import sys
import time
from dataclasses import dataclass
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

ENERGY_STATUS_WIDTH = 32


@dataclass(frozen=True)
class RaplRegisters:
    power_unit: int
    package_energy: int
    core_energy: int | None  # per-core counter, AMD only


# Register addresses from the Intel SDM vol. 4 and AMD PPR (family 17h+).
VENDOR_REGISTERS: dict[CpuVendor, RaplRegisters] = {
    CpuVendor.INTEL: RaplRegisters(power_unit=0x606, package_energy=0x611, core_energy=None),
    CpuVendor.AMD: RaplRegisters(
        power_unit=0xC0010299, package_energy=0xC001029B, core_energy=0xC001029A
    ),
}

# Energy-status-unit field of the power-unit register: bits 12:8.
ESU_SHIFT = 8
ESU_MASK = 0x1F


def energy_unit_joules(power_unit_register: int) -> float:
    """Joules per counter increment: ``2 ** -ESU``."""
    esu = (power_unit_register >> ESU_SHIFT) & ESU_MASK
    return 2.0**-esu


def energy_status_raw(register: int) -> int:
    return register & ((1 << ENERGY_STATUS_WIDTH) - 1)


class MsrAccess:
    """Reads 64-bit registers from the Linux msr device files."""

    def __init__(self, root: str | os.PathLike = "/dev/cpu") -> None:
        self.root = Path(root)
        self._fds: dict[int, int] = {}

    def cpus(self) -> list[int]:
        try:
            entries = [p.name for p in self.root.iterdir() if (p / "msr").exists()]
        except OSError as exc:
            raise ProbeUnavailable(f"cannot list {self.root}: {exc}") from exc
        return sorted(int(name) for name in entries if name.isdigit())

    def _fd(self, cpu: int) -> int:
        fd = self._fds.get(cpu)
        if fd is None:
            path = self.root / str(cpu) / "msr"
            try:
                fd = os.open(path, os.O_RDONLY)
            except OSError as exc:
                raise ProbeUnavailable(f"cannot open {path}: {exc}") from exc
            self._fds[cpu] = fd
        return fd

    def read(self, cpu: int, address: int) -> int:
        try:
            data = os.pread(self._fd(cpu), 8, address)
        except OSError as exc:
            raise ProbeReadError(f"msr 0x{address:x} on cpu {cpu}: {exc}") from exc
        if len(data) != 8:
            raise ProbeReadError(f"short read of msr 0x{address:x} on cpu {cpu}")
        return struct.unpack("<Q", data)[0]

    def close(self) -> None:
        for fd in self._fds.values():
            os.close(fd)
        self._fds.clear()


class WindowsMsrAccess:
    """Interface stub for a Windows MSR kernel driver.

    A driver is expected to expose a device (``\\\\.\\<device>``) accepting
    an IOCTL whose input is ``struct {uint32 cpu; uint32 msr;}`` and whose
    output is the little-endian 64-bit register value. No such driver ships
    with this package; construction fails unless one is installed.
    """

    def __init__(self, device: str = r"\\.\WinRing0_1_2_0", ioctl: int = 0x9C402084) -> None:
        if sys.platform != "win32":
            raise ProbeUnavailable("Windows MSR driver is only available on Windows")
        import ctypes
        from ctypes import wintypes

        self._ctypes = ctypes
        self._kernel32 = ctypes.WinDLL("kernel32", use_last_error=True)
        self._kernel32.CreateFileW.restype = wintypes.HANDLE
        handle = self._kernel32.CreateFileW(device, 0xC0000000, 0, None, 3, 0, None)
        if handle in (None, wintypes.HANDLE(-1).value):
            raise ProbeUnavailable(f"MSR driver {device} not accessible")
        self._handle = handle
        self._ioctl = ioctl

    def cpus(self) -> list[int]:
        return list(range(os.cpu_count() or 1))

    def read(self, cpu: int, address: int) -> int:
        ctypes = self._ctypes
        inbuf = struct.pack("<II", cpu, address)
        out = ctypes.create_string_buffer(8)
        returned = ctypes.c_ulong(0)
        ok = self._kernel32.DeviceIoControl(
            self._handle, self._ioctl, inbuf, len(inbuf), out, 8, ctypes.byref(returned), None
        )
        if not ok or returned.value != 8:
            raise ProbeReadError(f"DeviceIoControl failed for msr 0x{address:x}")
        return struct.unpack("<Q", out.raw)[0]

    def close(self) -> None:
        self._kernel32.CloseHandle(self._handle)


def package_of_cpu(cpu: int, sysfs_root: str | os.PathLike = "/sys/devices/system/cpu") -> int:
    path = Path(sysfs_root) / f"cpu{cpu}" / "topology" / "physical_package_id"
    try:
        return int(path.read_text().strip())
    except (OSError, ValueError):
        return 0


class MsrProbe(Probe):
    """Package (and, on AMD, per-core) energy from RAPL registers."""

    name = "msr"

    def __init__(
        self,
        vendor: CpuVendor,
        access: MsrAccess | WindowsMsrAccess,
        platform: Platform = Platform.LINUX,
        sysfs_root: str | os.PathLike = "/sys/devices/system/cpu",
        per_core: bool = True,
    ) -> None:
        if vendor not in VENDOR_REGISTERS:
            raise ProbeUnavailable(f"no RAPL registers known for {vendor.value} CPUs")
        self.vendor = vendor
        self.platform = platform
        self.registers = VENDOR_REGISTERS[vendor]
        self.access = access
        cpus = access.cpus()
        if not cpus:
            raise ProbeUnavailable("no msr devices found")
        try:
            unit_register = access.read(cpus[0], self.registers.power_unit)
        except ProbeReadError as exc:
            raise ProbeUnavailable(str(exc)) from exc
        self.format = CounterFormat(energy_unit_joules(unit_register), ENERGY_STATUS_WIDTH)

        packages: dict[int, int] = {}
        for cpu in cpus:
            packages.setdefault(package_of_cpu(cpu, sysfs_root), cpu)
        self._cpu_for: dict[str, int] = {}
        metrics: list[MetricDescriptor] = []
        for pkg in sorted(packages):
            name = "PACKAGE_ENERGY" if len(packages) == 1 else f"PACKAGE{pkg}_ENERGY"
            metrics.append(
                MetricDescriptor(name, Unit.JOULES, Kind.CUMULATIVE_ENERGY, Domain.PACKAGE,
                                 index=pkg if len(packages) > 1 else None, counter=self.format)
            )
            self._cpu_for[name] = packages[pkg]
        if per_core and self.registers.core_energy is not None:
            for i, cpu in enumerate(cpus):
                name = f"CORE{i}_ENERGY"
                metrics.append(
                    MetricDescriptor(name, Unit.JOULES, Kind.CUMULATIVE_ENERGY, Domain.CORE,
                                     index=i, counter=self.format)
                )
                self._cpu_for[name] = cpu
        self._metrics = tuple(metrics)
        # Fail at detection time rather than on every tick.
        for metric in self._metrics:
            try:
                self.read_counter(metric)
            except ProbeReadError as exc:
                raise ProbeUnavailable(str(exc)) from exc

    def capabilities(self) -> ProbeCapabilities:
        return ProbeCapabilities(self._metrics, self.platform, self.vendor)

    def read_counter(self, metric: MetricDescriptor) -> RawCounterReading:
        cpu = self._cpu_for[metric.name]
        address = (
            self.registers.core_energy if metric.domain is Domain.CORE else self.registers.package_energy
        )
        value = self.access.read(cpu, address)
        return self.format.reading(energy_status_raw(value), time.monotonic_ns())

    def close(self) -> None:
        self.access.close()
