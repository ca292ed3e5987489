"""Deterministic stand-in for privileged energy hardware.

A power profile ``P(t)`` drives two mutually consistent channels: an
instantaneous power reading and a wrapping cumulative counter encoding
``E(t) = integral of P from 0 to t``.

Profile descriptors (also accepted by ``--probe simulated:<descriptor>``)::

    constant:<watts>
    step:<t_switch_s>,<watts_before>,<watts_after>
    sinusoid:<base_w>,<amplitude_w>,<period_s>
    trace:<path to csv of time_s,watts>
"""

from __future__ import annotations

import csv
import math
import time
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .base import Probe
from .metrics import (
    CounterFormat,
    CpuVendor,
    Domain,
    Kind,
    MetricDescriptor,
    ProbeCapabilities,
    RawCounterReading,
    Unit,
)


class ProfileError(ValueError):
    """Malformed power-profile descriptor."""


class PowerProfile:
    def power(self, t: float) -> float:
        raise NotImplementedError

    def energy(self, t: float) -> float:
        """Joules consumed over ``[0, t]``."""
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(PowerProfile):
    watts: float

    def power(self, t: float) -> float:
        return self.watts

    def energy(self, t: float) -> float:
        return self.watts * max(t, 0.0)


@dataclass(frozen=True)
class Step(PowerProfile):
    t_switch: float
    before: float
    after: float

    def power(self, t: float) -> float:
        return self.before if t < self.t_switch else self.after

    def energy(self, t: float) -> float:
        t = max(t, 0.0)
        return self.before * min(t, self.t_switch) + self.after * max(t - self.t_switch, 0.0)


@dataclass(frozen=True)
class Sinusoid(PowerProfile):
    """``base + amplitude * sin(2 pi t / period)``; amplitude must not exceed base."""

    base: float
    amplitude: float
    period: float

    def power(self, t: float) -> float:
        return self.base + self.amplitude * math.sin(2 * math.pi * t / self.period)

    def energy(self, t: float) -> float:
        t = max(t, 0.0)
        w = 2 * math.pi / self.period
        return self.base * t + self.amplitude * (1.0 - math.cos(w * t)) / w


@dataclass(frozen=True, eq=False)
class Playback(PowerProfile):
    """Piecewise-linear replay of recorded ``(time_s, watts)`` points.

    Power is held at the first/last value outside the recorded span.
    """

    times: np.ndarray
    watts: np.ndarray

    def __post_init__(self) -> None:
        if len(self.times) < 1 or len(self.times) != len(self.watts):
            raise ProfileError("playback needs matching, non-empty time and power columns")
        if np.any(np.diff(self.times) <= 0):
            raise ProfileError("playback times must be strictly increasing")
        if np.any(self.watts < 0) or not np.all(np.isfinite(self.watts)):
            raise ProfileError("playback power must be finite and non-negative")
        segments = np.diff(self.times) * (self.watts[1:] + self.watts[:-1]) / 2
        object.__setattr__(self, "_prefix", np.concatenate(([0.0], np.cumsum(segments))))

    @classmethod
    def from_csv(cls, path: str | Path) -> Playback:
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except (ValueError, IndexError):
                    if rows:
                        raise ProfileError(f"{path}: bad row {row!r}") from None
                    # header line
        if not rows:
            raise ProfileError(f"{path}: no samples")
        arr = np.asarray(rows, dtype=float)
        return cls(arr[:, 0], arr[:, 1])

    def power(self, t: float) -> float:
        return float(np.interp(t, self.times, self.watts))

    def _from_first(self, t: float) -> float:
        """Signed integral of power from ``times[0]`` to ``t``."""
        times, watts = self.times, self.watts
        if t <= times[0]:
            return -float(watts[0]) * (times[0] - t)
        if t >= times[-1]:
            return float(self._prefix[-1] + watts[-1] * (t - times[-1]))
        k = int(np.searchsorted(times, t, side="right")) - 1
        return float(self._prefix[k] + (t - times[k]) * (watts[k] + self.power(t)) / 2)

    def energy(self, t: float) -> float:
        return self._from_first(max(t, 0.0)) - self._from_first(0.0)


def parse_profile(descriptor: str) -> PowerProfile:
    kind, _, args = descriptor.partition(":")
    kind = kind.strip().lower()
    if kind == "trace":
        if not args:
            raise ProfileError("trace profile needs a file path")
        try:
            return Playback.from_csv(args)
        except OSError as exc:
            raise ProfileError(f"cannot read {args}: {exc}") from exc
    try:
        values = [float(v) for v in args.split(",")] if args else []
    except ValueError:
        raise ProfileError(f"non-numeric parameters in {descriptor!r}") from None
    expected = {"constant": 1, "step": 3, "sinusoid": 3}
    if kind not in expected:
        raise ProfileError(f"unknown profile {kind!r} (constant, step, sinusoid, trace)")
    if len(values) != expected[kind]:
        raise ProfileError(f"{kind} profile takes {expected[kind]} parameter(s), got {len(values)}")
    if any(not math.isfinite(v) for v in values):
        raise ProfileError("profile parameters must be finite")
    if kind == "constant":
        if values[0] < 0:
            raise ProfileError("power must be non-negative")
        return Constant(values[0])
    if kind == "step":
        if values[1] < 0 or values[2] < 0:
            raise ProfileError("power must be non-negative")
        return Step(*values)
    base, amplitude, period = values
    if period <= 0:
        raise ProfileError("sinusoid period must be positive")
    if abs(amplitude) > base:
        raise ProfileError("sinusoid would go negative: |amplitude| > base")
    return Sinusoid(base, amplitude, period)


ENERGY = "PACKAGE_ENERGY"
POWER = "PACKAGE_POWER"


class SimulatedProbe(Probe):
    """Probe driven by a :class:`PowerProfile` instead of hardware.

    ``clock`` returns monotonic nanoseconds; profile time ``t = 0`` is the
    moment :meth:`start` is called (construction time until then).
    ``noise_w`` adds zero-mean Gaussian noise to the power channel only.
    """

    name = "simulated"

    def __init__(
        self,
        profile: PowerProfile | str,
        unit_joules: float = 1e-6,
        width_bits: int = 32,
        clock: Callable[[], int] = time.monotonic_ns,
        noise_w: float = 0.0,
        seed: int | None = None,
        initial_raw: int = 0,
    ) -> None:
        self.profile = parse_profile(profile) if isinstance(profile, str) else profile
        self.format = CounterFormat(unit_joules, width_bits)
        if not 0 <= initial_raw < self.format.modulus:
            raise ValueError("initial_raw outside counter range")
        self.clock = clock
        self.noise_w = noise_w
        self._rng = np.random.default_rng(seed)
        self.initial_raw = initial_raw
        self._t0 = clock()
        self._metrics = (
            MetricDescriptor(ENERGY, Unit.JOULES, Kind.CUMULATIVE_ENERGY, Domain.PACKAGE,
                             counter=self.format),
            MetricDescriptor(POWER, Unit.WATTS, Kind.INSTANTANEOUS_POWER, Domain.PACKAGE),
        )

    def capabilities(self) -> ProbeCapabilities:
        return ProbeCapabilities(self._metrics, None, CpuVendor.OTHER)

    def start(self) -> None:
        self._t0 = self.clock()

    def elapsed(self, now_ns: int) -> float:
        return (now_ns - self._t0) / 1e9

    def read_counter(self, metric: MetricDescriptor) -> RawCounterReading:
        now = self.clock()
        units = math.floor(self.profile.energy(self.elapsed(now)) / self.format.unit_joules)
        return self.format.reading((self.initial_raw + units) % self.format.modulus, now)

    def read_power_watts(self, metric: MetricDescriptor) -> float:
        watts = self.profile.power(self.elapsed(self.clock()))
        if self.noise_w:
            watts += self._rng.normal(0.0, self.noise_w)
        return max(watts, 0.0)
