from __future__ import annotations

import logging

from .metrics import (
    Kind,
    MetricDescriptor,
    ProbeCapabilities,
    ProbeError,
    RawCounterReading,
)

log = logging.getLogger(__name__)


class Probe:
    """A source of metric readings.

    Subclasses implement whichever of :meth:`read_counter`,
    :meth:`read_power_watts` and :meth:`read_gauge` their metrics need.
    A probe is polled by a single sampling loop; reads need not be
    thread-safe.
    """

    name = "probe"

    def capabilities(self) -> ProbeCapabilities:
        raise NotImplementedError

    @property
    def metrics(self) -> tuple[MetricDescriptor, ...]:
        return self.capabilities().metrics

    def start(self) -> None:
        """Called once by the sampler right before the first sample."""

    def close(self) -> None:
        pass

    def read_counter(self, metric: MetricDescriptor) -> RawCounterReading:
        raise NotImplementedError(f"{self.name} has no counter {metric.name}")

    def read_power_watts(self, metric: MetricDescriptor) -> float:
        raise NotImplementedError(f"{self.name} has no power metric {metric.name}")

    def read_gauge(self, metric: MetricDescriptor) -> float:
        raise NotImplementedError(f"{self.name} has no gauge {metric.name}")

    def read(self, metric: MetricDescriptor) -> float:
        """Current value of ``metric`` in its declared unit.

        Cumulative counters are decoded to joules; wraparound is left to
        whoever differences the values.
        """
        if metric.kind is Kind.CUMULATIVE_ENERGY:
            return self.read_counter(metric).joules
        if metric.kind is Kind.INSTANTANEOUS_POWER:
            return self.read_power_watts(metric)
        return self.read_gauge(metric)

    def poll(self, metrics: list[MetricDescriptor]) -> dict[str, float | None]:
        values: dict[str, float | None] = {}
        for metric in metrics:
            try:
                values[metric.name] = self.read(metric)
            except (ProbeError, OSError) as exc:
                log.debug("%s: read of %s failed: %s", self.name, metric.name, exc)
                values[metric.name] = None
        return values
