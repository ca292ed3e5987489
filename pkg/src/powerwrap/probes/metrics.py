"""Metric identities, raw counter readings and wrap-safe energy deltas."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass


class Unit(str, enum.Enum):
    JOULES = "joules"
    WATTS = "watts"
    MEGAHERTZ = "megahertz"
    PERCENT = "percent"
    BYTES = "bytes"
    CELSIUS = "celsius"


class Kind(str, enum.Enum):
    CUMULATIVE_ENERGY = "cumulative_energy"
    INSTANTANEOUS_POWER = "instantaneous_power"
    GAUGE = "gauge"


class Domain(str, enum.Enum):
    PACKAGE = "package"
    CORE = "core"
    SYSTEM = "system"
    GPU = "gpu"
    MEMORY = "memory"


class Platform(str, enum.Enum):
    LINUX = "linux"
    WINDOWS = "windows"
    MACOS = "macos"


class CpuVendor(str, enum.Enum):
    INTEL = "intel"
    AMD = "amd"
    APPLE_ARM = "apple_arm"
    OTHER = "other"


_NAME_RE = re.compile(r"[A-Z0-9_]+")


class ProbeError(Exception):
    """Base class for probe failures."""


class ProbeUnavailable(ProbeError):
    """A backend cannot be initialized on this host."""


class ProbeReadError(ProbeError):
    """A single read failed (revoked privilege, unplugged device, ...)."""


@dataclass(frozen=True)
class CounterFormat:
    """Decoding parameters of a wrapping hardware energy counter.

    ``max_raw`` is set for counters that wrap below ``2**width_bits``
    (powercap advertises it in ``max_energy_range_uj``).
    """

    unit_joules: float
    width_bits: int
    max_raw: int | None = None

    def __post_init__(self) -> None:
        if not self.unit_joules > 0:
            raise ValueError("unit_joules must be positive")
        if self.width_bits < 1:
            raise ValueError("width_bits must be >= 1")
        if self.max_raw is not None and not 0 < self.max_raw < 2**self.width_bits:
            raise ValueError("max_raw must lie in (0, 2**width_bits)")

    @property
    def modulus(self) -> int:
        if self.max_raw is not None:
            return self.max_raw + 1
        return 2**self.width_bits

    def reading(self, raw: int, timestamp: int) -> RawCounterReading:
        return RawCounterReading(raw, self.width_bits, self.unit_joules, timestamp, self.max_raw)

    def encode(self, joules: float, timestamp: int = 0) -> RawCounterReading:
        """Recover the raw reading from its decoded joule value."""
        return self.reading(round(joules / self.unit_joules) % self.modulus, timestamp)


@dataclass(frozen=True)
class MetricDescriptor:
    name: str
    unit: Unit
    kind: Kind
    domain: Domain
    index: int | None = None
    counter: CounterFormat | None = None

    def __post_init__(self) -> None:
        if not _NAME_RE.fullmatch(self.name):
            raise ValueError(f"metric name {self.name!r} must match [A-Z0-9_]+")
        if self.kind is Kind.CUMULATIVE_ENERGY and self.unit is not Unit.JOULES:
            raise ValueError(f"{self.name}: cumulative energy must be in joules")
        if self.kind is Kind.INSTANTANEOUS_POWER and self.unit is not Unit.WATTS:
            raise ValueError(f"{self.name}: instantaneous power must be in watts")
        if self.counter is not None and self.kind is not Kind.CUMULATIVE_ENERGY:
            raise ValueError(f"{self.name}: only cumulative metrics carry a counter format")
        if self.domain in (Domain.CORE, Domain.GPU) and self.index is None:
            raise ValueError(f"{self.name}: {self.domain.value} metrics need an index")

    @property
    def column(self) -> str:
        """CSV header for this metric, e.g. ``PACKAGE_ENERGY (J)``."""
        if self.kind is Kind.CUMULATIVE_ENERGY:
            return f"{self.name} (J)"
        if self.kind is Kind.INSTANTANEOUS_POWER:
            return f"{self.name} (W)"
        return self.name


@dataclass(frozen=True)
class ProbeCapabilities:
    metrics: tuple[MetricDescriptor, ...]
    platform: Platform | None
    cpu_vendor: CpuVendor
    gpu_vendors: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        names = [m.name for m in self.metrics]
        if len(set(names)) != len(names):
            raise ValueError("duplicate metric names in capabilities")

    def names(self) -> list[str]:
        return [m.name for m in self.metrics]


@dataclass(frozen=True)
class RawCounterReading:
    raw: int
    width_bits: int
    unit_joules: float
    timestamp: int
    max_raw: int | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.raw < 2**self.width_bits:
            raise ValueError(f"raw value {self.raw} does not fit in {self.width_bits} bits")
        if self.max_raw is not None and self.raw > self.max_raw:
            raise ValueError(f"raw value {self.raw} exceeds max_raw {self.max_raw}")
        if not self.unit_joules > 0:
            raise ValueError("unit_joules must be positive")

    @property
    def modulus(self) -> int:
        return self.max_raw + 1 if self.max_raw is not None else 2**self.width_bits

    @property
    def joules(self) -> float:
        return self.raw * self.unit_joules


def counter_delta_units(prev: RawCounterReading, next: RawCounterReading) -> int:
    """Counter increments between two readings, assuming at most one wrap."""
    if (prev.width_bits, prev.unit_joules, prev.max_raw) != (
        next.width_bits,
        next.unit_joules,
        next.max_raw,
    ):
        raise ValueError("counter readings use different decoding parameters")
    if next.timestamp < prev.timestamp:
        raise ValueError("readings are out of order")
    return (next.raw - prev.raw) % prev.modulus


def counter_delta_joules(prev: RawCounterReading, next: RawCounterReading) -> float:
    """Energy consumed between two readings of the same counter.

    Correct across exactly one wraparound; never negative.
    """
    return counter_delta_units(prev, next) * prev.unit_joules
