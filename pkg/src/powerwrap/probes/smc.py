"""Apple System Management Controller backend (macOS).

SMC keys differ between models, so the key set is data: ``SMC_KEYS``
maps CPU vendor to the keys probed at start-up, and a JSON file named by
``POWERWRAP_SMC_KEYS`` replaces it, e.g.::

    {"apple_arm": [["SYSTEM_POWER", "PSTR", "system"], ["GPU0_POWER", "PG0R", "gpu"]]}

Keys that fail to read at start-up are dropped silently.
"""

from __future__ import annotations

import ctypes
import ctypes.util
import json
import logging
import os
import struct
import sys
from dataclasses import dataclass
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

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SmcKey:
    metric: str
    key: str
    domain: Domain


SMC_KEYS: dict[CpuVendor, tuple[SmcKey, ...]] = {
    CpuVendor.INTEL: (
        SmcKey("PACKAGE_POWER", "PCPC", Domain.PACKAGE),
        SmcKey("SYSTEM_POWER", "PSTR", Domain.SYSTEM),
        SmcKey("GPU0_POWER", "PCPG", Domain.GPU),
    ),
    CpuVendor.APPLE_ARM: (
        SmcKey("SYSTEM_POWER", "PSTR", Domain.SYSTEM),
        SmcKey("GPU0_POWER", "PG0R", Domain.GPU),
    ),
}


def load_key_table(path: str | os.PathLike) -> dict[CpuVendor, tuple[SmcKey, ...]]:
    with open(path) as fh:
        raw = json.load(fh)
    return {
        CpuVendor(vendor): tuple(SmcKey(m, k, Domain(d)) for m, k, d in entries)
        for vendor, entries in raw.items()
    }


def decode_value(data_type: str, data: bytes) -> float:
    """Decode an SMC payload of the given four-character type."""
    if data_type == "flt ":
        return struct.unpack("<f", data[:4])[0]
    if data_type == "sp78":
        return struct.unpack(">h", data[:2])[0] / 256.0
    if data_type == "fpe2":
        return struct.unpack(">H", data[:2])[0] / 4.0
    if data_type == "ui8 ":
        return float(data[0])
    if data_type == "ui16":
        return float(struct.unpack(">H", data[:2])[0])
    if data_type == "ui32":
        return float(struct.unpack(">I", data[:4])[0])
    raise ProbeReadError(f"unsupported SMC data type {data_type!r}")


def fourcc(code: str) -> int:
    if len(code) != 4:
        raise ValueError(f"SMC key {code!r} must be four characters")
    return struct.unpack(">I", code.encode("ascii"))[0]


def fourcc_str(value: int) -> str:
    return struct.pack(">I", value).decode("ascii", errors="replace")


class SmcConnection(Protocol):
    def read_key(self, key: str) -> float: ...

    def close(self) -> None: ...


class _Vers(ctypes.Structure):
    _fields_ = [("major", ctypes.c_char), ("minor", ctypes.c_char), ("build", ctypes.c_char),
                ("reserved", ctypes.c_char), ("release", ctypes.c_uint16)]


class _PLimit(ctypes.Structure):
    _fields_ = [("version", ctypes.c_uint16), ("length", ctypes.c_uint16),
                ("cpu", ctypes.c_uint32), ("gpu", ctypes.c_uint32), ("mem", ctypes.c_uint32)]


class _KeyInfo(ctypes.Structure):
    _fields_ = [("data_size", ctypes.c_uint32), ("data_type", ctypes.c_uint32),
                ("data_attributes", ctypes.c_uint8)]


class SmcKeyData(ctypes.Structure):
    """Mirror of the kernel's ``SMCKeyData_t`` (80 bytes)."""

    _fields_ = [
        ("key", ctypes.c_uint32),
        ("vers", _Vers),
        ("p_limit", _PLimit),
        ("key_info", _KeyInfo),
        ("result", ctypes.c_uint8),
        ("status", ctypes.c_uint8),
        ("data8", ctypes.c_uint8),
        ("data32", ctypes.c_uint32),
        ("bytes", ctypes.c_uint8 * 32),
    ]


KERNEL_INDEX_SMC = 2
SMC_CMD_READ_BYTES = 5
SMC_CMD_READ_KEYINFO = 9


class IOKitSmcConnection:
    """Talks to the ``AppleSMC`` IOService through IOKit via ctypes."""

    def __init__(self) -> None:
        if sys.platform != "darwin":
            raise ProbeUnavailable("SMC is only available on macOS")
        iokit_path = ctypes.util.find_library("IOKit")
        libc_path = ctypes.util.find_library("c")
        if not iokit_path or not libc_path:
            raise ProbeUnavailable("IOKit framework not found")
        self._iokit = iokit = ctypes.cdll.LoadLibrary(iokit_path)
        libc = ctypes.cdll.LoadLibrary(libc_path)
        iokit.IOServiceMatching.restype = ctypes.c_void_p
        iokit.IOServiceMatching.argtypes = [ctypes.c_char_p]
        iokit.IOServiceGetMatchingService.restype = ctypes.c_uint32
        iokit.IOServiceGetMatchingService.argtypes = [ctypes.c_uint32, ctypes.c_void_p]
        iokit.IOServiceOpen.argtypes = [ctypes.c_uint32, ctypes.c_uint32, ctypes.c_uint32,
                                        ctypes.POINTER(ctypes.c_uint32)]
        iokit.IOConnectCallStructMethod.argtypes = [
            ctypes.c_uint32, ctypes.c_uint32, ctypes.c_void_p, ctypes.c_size_t,
            ctypes.c_void_p, ctypes.POINTER(ctypes.c_size_t),
        ]
        service = iokit.IOServiceGetMatchingService(0, iokit.IOServiceMatching(b"AppleSMC"))
        if not service:
            raise ProbeUnavailable("AppleSMC service not found")
        task = ctypes.c_uint32.in_dll(libc, "mach_task_self_").value
        conn = ctypes.c_uint32(0)
        if iokit.IOServiceOpen(service, task, 0, ctypes.byref(conn)) != 0:
            raise ProbeUnavailable("IOServiceOpen(AppleSMC) failed")
        iokit.IOObjectRelease(service)
        self._conn = conn.value
        self._info: dict[str, _KeyInfo] = {}

    def _call(self, request: SmcKeyData) -> SmcKeyData:
        out = SmcKeyData()
        size = ctypes.c_size_t(ctypes.sizeof(out))
        rc = self._iokit.IOConnectCallStructMethod(
            self._conn, KERNEL_INDEX_SMC, ctypes.byref(request), ctypes.sizeof(request),
            ctypes.byref(out), ctypes.byref(size),
        )
        if rc != 0 or out.result != 0:
            raise ProbeReadError(f"SMC call failed for {fourcc_str(request.key)} (rc={rc})")
        return out

    def read_key(self, key: str) -> float:
        info = self._info.get(key)
        if info is None:
            request = SmcKeyData(key=fourcc(key), data8=SMC_CMD_READ_KEYINFO)
            info = self._call(request).key_info
            self._info[key] = info
        request = SmcKeyData(key=fourcc(key), data8=SMC_CMD_READ_BYTES)
        request.key_info.data_size = info.data_size
        out = self._call(request)
        return decode_value(fourcc_str(info.data_type), bytes(out.bytes)[: info.data_size])

    def close(self) -> None:
        self._iokit.IOServiceClose(self._conn)


class SmcProbe(Probe):
    """System, package and GPU power (watts) from SMC keys."""

    name = "smc"

    def __init__(
        self,
        cpu_vendor: CpuVendor,
        connection: SmcConnection | None = None,
        keys: dict[CpuVendor, tuple[SmcKey, ...]] | None = None,
    ) -> None:
        if keys is None:
            override = os.environ.get("POWERWRAP_SMC_KEYS")
            keys = load_key_table(override) if override else SMC_KEYS
        if cpu_vendor not in keys:
            raise ProbeUnavailable(f"no SMC key table for {cpu_vendor.value}")
        self.cpu_vendor = cpu_vendor
        self.connection = connection if connection is not None else IOKitSmcConnection()
        self._keys: dict[str, str] = {}
        metrics = []
        for entry in keys[cpu_vendor]:
            try:
                self.connection.read_key(entry.key)
            except ProbeReadError as exc:
                log.debug("smc: key %s unavailable: %s", entry.key, exc)
                continue
            index = 0 if entry.domain is Domain.GPU else None
            metrics.append(MetricDescriptor(entry.metric, Unit.WATTS, Kind.INSTANTANEOUS_POWER,
                                            entry.domain, index=index))
            self._keys[entry.metric] = entry.key
        if not metrics:
            raise ProbeUnavailable("no readable SMC power keys")
        self._metrics = tuple(metrics)

    def capabilities(self) -> ProbeCapabilities:
        gpu = {"apple" if self.cpu_vendor is CpuVendor.APPLE_ARM else "intel"}
        has_gpu = any(m.domain is Domain.GPU for m in self._metrics)
        return ProbeCapabilities(self._metrics, Platform.MACOS, self.cpu_vendor,
                                 frozenset(gpu) if has_gpu else frozenset())

    def read_power_watts(self, metric: MetricDescriptor) -> float:
        watts = self.connection.read_key(self._keys[metric.name])
        if not watts >= 0 or watts == float("inf"):
            raise ProbeReadError(f"{metric.name}: implausible reading {watts!r}")
        return float(watts)

    def close(self) -> None:
        self.connection.close()
