"""Fixed-interval sampling loop.

Tick ``k`` targets ``start + k * interval`` (deadline scheduling), so a
slow read delays one sample without shifting the ones after it. Missed
deadlines are skipped, not back-filled. When the stop signal fires a
final sample is taken at that moment so the last partial interval of
energy is kept.
"""

from __future__ import annotations

import logging
import threading
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

from .probes.base import Probe
from .probes.metrics import MetricDescriptor
from .trace import Sample, Trace, TraceMeta

log = logging.getLogger(__name__)

NS_PER_MS = 1_000_000


@dataclass
class SamplerConfig:
    interval_ms: int = 100
    metrics: list[MetricDescriptor] = field(default_factory=list)
    final_sample: bool = True

    def __post_init__(self) -> None:
        if int(self.interval_ms) != self.interval_ms or self.interval_ms < 1:
            raise ValueError("interval must be a positive whole number of milliseconds")
        self.interval_ms = int(self.interval_ms)
        names = [m.name for m in self.metrics]
        if len(set(names)) != len(names):
            raise ValueError("duplicate metric names in sampler schema")


class SystemClock:
    """Real time: monotonic nanoseconds, epoch milliseconds, waits on the stop event."""

    def now_ns(self) -> int:
        return time.monotonic_ns()

    def epoch_ms(self) -> int:
        return time.time_ns() // NS_PER_MS

    def wait(self, stop: threading.Event, timeout_s: float) -> bool:
        return stop.wait(timeout_s)


class VirtualClock:
    """Simulated time for deterministic sessions.

    Waiting advances the clock instantly. Once ``stop_after_s`` of virtual
    time has passed the stop event is set, exactly at that instant.
    ``read_cost_ns`` is added on every :meth:`now_ns` call to mimic the
    time reads take.
    """

    def __init__(self, stop_after_s: float | None = None, epoch_ms: int = 1_700_000_000_000,
                 read_cost_ns: int = 0) -> None:
        self._now = 0
        self._epoch_ms = epoch_ms
        self.read_cost_ns = read_cost_ns
        self.stop_at = None if stop_after_s is None else round(stop_after_s * 1e9)

    def now_ns(self) -> int:
        self._now += self.read_cost_ns
        return self._now

    __call__ = now_ns

    def epoch_ms(self) -> int:
        return self._epoch_ms + self._now // NS_PER_MS

    def advance(self, ns: int) -> None:
        self._now += ns

    def wait(self, stop: threading.Event, timeout_s: float) -> bool:
        if stop.is_set():
            return True
        target = self._now + max(0, round(timeout_s * 1e9))
        if self.stop_at is not None and target >= self.stop_at:
            self._now = max(self._now, self.stop_at)
            stop.set()
            return True
        self._now = target
        return False


def _owner(probes: Sequence[Probe], metrics: Sequence[MetricDescriptor]) -> list[tuple[Probe, list[MetricDescriptor]]]:
    """Group the schema by the probe that provides each metric."""
    plan: list[tuple[Probe, list[MetricDescriptor]]] = []
    for metric in metrics:
        for probe in probes:
            if metric in probe.metrics:
                for p, ms in plan:
                    if p is probe:
                        ms.append(metric)
                        break
                else:
                    plan.append((probe, [metric]))
                break
        else:
            raise ValueError(f"no probe provides metric {metric.name}")
    return plan


def run_session(
    config: SamplerConfig,
    probes: Sequence[Probe],
    stop: threading.Event,
    sink: Callable[[Sample], None] | None = None,
    clock: SystemClock | VirtualClock | None = None,
    meta: TraceMeta | None = None,
) -> Trace:
    """Sample every metric of ``config`` until ``stop`` is set.

    The first sample is taken immediately (t = 0). Every sample is passed
    to ``sink`` as soon as it is taken, in order. Failed reads become
    absent cells; nothing here raises once sampling has started.
    """
    clock = clock or SystemClock()
    plan = _owner(probes, config.metrics)
    schema = [m.name for m in config.metrics]
    interval_ns = config.interval_ms * NS_PER_MS
    warned: set[str] = set()
    rows: list[Sample] = []

    for probe, _ in plan:
        probe.start()
    t0 = clock.now_ns()
    epoch0 = clock.epoch_ms()
    last_ns = t0

    def take(now: int) -> None:
        nonlocal last_ns
        values: dict[str, float | None] = {}
        for probe, metrics in plan:
            try:
                values.update(probe.poll(metrics))
            except Exception as exc:  # a broken backend must not end the session
                log.debug("%s: poll failed: %s", probe.name, exc)
                values.update(dict.fromkeys(m.name for m in metrics))
        for name in schema:
            if values.get(name) is None and name not in warned:
                warned.add(name)
                log.warning("read of %s failed; recording an empty cell", name)
        time_ms = epoch0 + round((now - t0) / NS_PER_MS)
        if rows and time_ms <= rows[-1].time_ms:
            time_ms = rows[-1].time_ms + 1
        sample = Sample(
            delta_ms=(now - last_ns) / NS_PER_MS if rows else 0.0,
            time_ms=time_ms,
            values={name: values.get(name) for name in schema},
        )
        last_ns = now
        rows.append(sample)
        if sink is not None:
            sink(sample)

    take(t0)
    k = 1
    while True:
        now = clock.now_ns()
        deadline = t0 + k * interval_ns
        if now >= deadline:
            k = (now - t0) // interval_ns + 1
            deadline = t0 + k * interval_ns
        if clock.wait(stop, (deadline - now) / 1e9):
            if config.final_sample:
                now = clock.now_ns()
                if now - last_ns >= NS_PER_MS:
                    take(now)
            break
        take(clock.now_ns())
        k += 1

    if meta is None:
        meta = TraceMeta(interval_ms=config.interval_ms)
    elif meta.interval_ms is None:
        meta.interval_ms = config.interval_ms
    return Trace(list(config.metrics), rows, meta)


__all__ = ["Sample", "SamplerConfig", "SystemClock", "VirtualClock", "run_session"]
