"""CSV trace files and per-run energy summaries.

File layout::

    # meta: {"platform": "linux", "interval_ms": 100, ...}
    # metric: {"name": "PACKAGE_ENERGY", "unit": "joules", ...}
    Delta,Time,PACKAGE_ENERGY (J),CPU_USAGE_0
    0.0,1700000000000,12.25,3.0
    100.21,1700000000100,13.5,7.5

``Delta`` is milliseconds since the previous row, ``Time`` Unix epoch
milliseconds. Empty cells are failed reads. Comment lines are optional;
without them column kinds are inferred from the ``(J)``/``(W)`` suffix.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from ._version import __version__
from .probes.metrics import (
    CounterFormat,
    Domain,
    Kind,
    MetricDescriptor,
    Unit,
    counter_delta_units,
)

log = logging.getLogger(__name__)

DELTA = "Delta"
TIME = "Time"


class TraceFormatError(ValueError):
    """Malformed trace file; the message names the offending line."""


class NoEnergyColumn(ValueError):
    """The trace has no energy- or power-capable column (usage only)."""


@dataclass
class TraceMeta:
    platform: str | None = None
    cpu_vendor: str | None = None
    interval_ms: int | None = None
    argv: list[str] = field(default_factory=list)
    tool_version: str = __version__


@dataclass
class Sample:
    """One row: ``delta_ms`` since the previous sample (0 for the first),
    epoch ``time_ms`` and one value per schema metric (None = failed read)."""

    delta_ms: float
    time_ms: int
    values: dict[str, float | None]


@dataclass
class Trace:
    metrics: list[MetricDescriptor]
    rows: list[Sample] = field(default_factory=list)
    meta: TraceMeta = field(default_factory=TraceMeta)

    @property
    def schema(self) -> list[str]:
        return [DELTA, TIME] + [m.column for m in self.metrics]

    def metric(self, name: str) -> MetricDescriptor:
        for m in self.metrics:
            if m.name == name or m.column == name:
                return m
        raise KeyError(name)

    def column(self, name: str) -> np.ndarray:
        """Values of one metric as floats, NaN where the read failed."""
        key = self.metric(name).name
        return np.array([np.nan if r.values.get(key) is None else r.values[key] for r in self.rows])

    def times_ms(self) -> np.ndarray:
        return np.array([r.time_ms for r in self.rows], dtype=np.int64)

    def elapsed_s(self) -> np.ndarray:
        """Seconds since the first row, accumulated from the Delta column."""
        deltas = np.array([r.delta_ms for r in self.rows], dtype=float)
        deltas[0] = 0.0
        return np.cumsum(deltas) / 1000.0

    def validate(self) -> None:
        if not self.rows:
            raise ValueError("trace has no rows")
        names = {m.name for m in self.metrics}
        if len(names) != len(self.metrics):
            raise ValueError("duplicate metric names")
        prev = None
        for i, row in enumerate(self.rows):
            if set(row.values) - names:
                raise ValueError(f"row {i} has values outside the schema")
            if prev is not None and row.time_ms <= prev:
                raise ValueError(f"row {i}: Time must be strictly increasing")
            prev = row.time_ms


# -- serialization -----------------------------------------------------------


def _metric_to_json(m: MetricDescriptor) -> str:
    d = {"name": m.name, "unit": m.unit.value, "kind": m.kind.value, "domain": m.domain.value,
         "index": m.index, "counter": asdict(m.counter) if m.counter else None}
    return json.dumps(d, separators=(",", ":"))


def _metric_from_json(text: str) -> MetricDescriptor:
    d = json.loads(text)
    counter = CounterFormat(**d["counter"]) if d.get("counter") else None
    return MetricDescriptor(d["name"], Unit(d["unit"]), Kind(d["kind"]), Domain(d["domain"]),
                            d.get("index"), counter)


def _format_value(v: float | None) -> str:
    if v is None:
        return ""
    return repr(float(v))


class TraceWriter:
    """Streams a trace to a text file, flushing after every row so that
    an interrupted run still leaves a readable prefix."""

    def __init__(self, stream: IO[str], metrics: Sequence[MetricDescriptor],
                 meta: TraceMeta | None = None, metadata: bool = True) -> None:
        self.stream = stream
        self.metrics = list(metrics)
        self._writer = csv.writer(stream, lineterminator="\n")
        if metadata:
            meta = meta or TraceMeta()
            stream.write(f"# meta: {json.dumps(asdict(meta), separators=(',', ':'))}\n")
            for m in self.metrics:
                stream.write(f"# metric: {_metric_to_json(m)}\n")
        self._writer.writerow([DELTA, TIME] + [m.column for m in self.metrics])
        stream.flush()

    def write(self, sample: Sample) -> None:
        self._writer.writerow(
            [repr(float(sample.delta_ms)), str(int(sample.time_ms))]
            + [_format_value(sample.values.get(m.name)) for m in self.metrics]
        )
        self.stream.flush()

    __call__ = write


def open_trace_file(path: str | os.PathLike) -> IO[str]:
    return open(path, "w", encoding="utf-8", newline="")


def write_csv(trace: Trace, path: str | os.PathLike | IO[str], metadata: bool = True) -> None:
    """Write a whole trace. ``metadata=False`` omits the ``#`` lines (plain CSV)."""
    if hasattr(path, "write"):
        writer = TraceWriter(path, trace.metrics, trace.meta, metadata)
        for row in trace.rows:
            writer.write(row)
        return
    with open_trace_file(path) as fh:
        write_csv(trace, fh, metadata)


def dumps(trace: Trace, metadata: bool = True) -> str:
    buf = io.StringIO()
    write_csv(trace, buf, metadata)
    return buf.getvalue()


_UNIT_HINTS = (("FREQUENCY", Unit.MEGAHERTZ), ("MEMORY", Unit.BYTES), ("TEMP", Unit.CELSIUS))


def _infer_metric(column: str) -> MetricDescriptor:
    """Descriptor for a header cell of a file written without metadata."""
    name, kind, unit = column, Kind.GAUGE, Unit.PERCENT
    if column.endswith(" (J)"):
        name, kind, unit = column[:-4], Kind.CUMULATIVE_ENERGY, Unit.JOULES
    elif column.endswith(" (W)"):
        name, kind, unit = column[:-4], Kind.INSTANTANEOUS_POWER, Unit.WATTS
    else:
        for hint, hinted in _UNIT_HINTS:
            if hint in name:
                unit = hinted
    digits = "".join(ch for ch in name if ch.isdigit())
    index = int(digits) if digits else None
    if name.startswith("PACKAGE"):
        domain = Domain.PACKAGE
    elif name.startswith("GPU"):
        domain, index = Domain.GPU, index or 0
    elif name.startswith("SYSTEM"):
        domain = Domain.SYSTEM
    elif "MEMORY" in name:
        domain, index = Domain.MEMORY, None
    elif name.startswith(("CORE", "CPU")):
        domain, index = Domain.CORE, index or 0
    else:
        domain = Domain.SYSTEM
    return MetricDescriptor(name, unit, kind, domain, index)


def _parse_cell(text: str, lineno: int, column: str) -> float | None:
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        raise TraceFormatError(f"line {lineno}: column {column!r}: not a number: {text!r}") from None


def parse(lines: Iterable[str], source: str = "<trace>") -> Trace:
    meta = TraceMeta()
    declared: list[MetricDescriptor] = []
    metrics: list[MetricDescriptor] | None = None
    rows: list[Sample] = []
    header: list[str] = []
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if metrics is None:
            if line.startswith("#"):
                body = line[1:].strip()
                try:
                    if body.startswith("meta:"):
                        meta = TraceMeta(**json.loads(body[5:]))
                    elif body.startswith("metric:"):
                        declared.append(_metric_from_json(body[7:]))
                except (ValueError, TypeError, KeyError) as exc:
                    raise TraceFormatError(f"{source}: line {lineno}: bad metadata: {exc}") from None
                continue
            if not line.strip():
                continue
            header = next(csv.reader([line]))
            if header[:2] != [DELTA, TIME]:
                raise TraceFormatError(f"{source}: line {lineno}: header must start with Delta,Time")
            by_column = {m.column: m for m in declared}
            metrics = [by_column.get(col) or _infer_metric(col) for col in header[2:]]
            continue
        if not line.strip():
            continue
        cells = next(csv.reader([line]))
        if len(cells) != len(header):
            raise TraceFormatError(
                f"{source}: line {lineno}: expected {len(header)} fields, found {len(cells)}"
            )
        try:
            delta = float(cells[0])
            time_ms = int(cells[1])
        except ValueError:
            raise TraceFormatError(f"{source}: line {lineno}: bad Delta/Time cell") from None
        values = {m.name: _parse_cell(c, lineno, m.column) for m, c in zip(metrics, cells[2:])}
        if rows and time_ms <= rows[-1].time_ms:
            raise TraceFormatError(f"{source}: line {lineno}: Time is not strictly increasing")
        rows.append(Sample(delta, time_ms, values))
    if metrics is None:
        raise TraceFormatError(f"{source}: no header line")
    if not rows:
        raise TraceFormatError(f"{source}: no samples after the header")
    return Trace(metrics, rows, meta)


def read_csv(path: str | os.PathLike) -> Trace:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse(fh, source=str(path))


def loads(text: str) -> Trace:
    return parse(io.StringIO(text))


# -- summaries ---------------------------------------------------------------


@dataclass(frozen=True)
class RunSummary:
    duration_s: float
    total_energy_j: float
    avg_power_w: float
    sample_count: int
    energy_source: str

    def describe(self) -> str:
        return (
            f"Energy consumption in joules: {self.total_energy_j:.4f} "
            f"for {self.duration_s:.3f} sec of execution "
            f"(average power {self.avg_power_w:.4f} W, {self.sample_count} samples, "
            f"source {self.energy_source})."
        )


def energy_sources(trace: Trace) -> list[MetricDescriptor]:
    """Columns a summary integrates: package energy, else system power, else GPU power."""
    package = [m for m in trace.metrics
               if m.kind is Kind.CUMULATIVE_ENERGY and m.domain is Domain.PACKAGE]
    if package:
        return package
    system = [m for m in trace.metrics
              if m.kind is Kind.INSTANTANEOUS_POWER and m.domain is Domain.SYSTEM]
    if system:
        return system
    gpu = [m for m in trace.metrics if m.kind is not Kind.GAUGE and m.domain is Domain.GPU]
    if gpu:
        return gpu
    raise NoEnergyColumn("trace has usage columns only; no energy or power metric to summarize")


def counter_increments(trace: Trace, metric: MetricDescriptor) -> tuple[list[tuple[int, int, float]], float]:
    """Energy between consecutive present cells of a cumulative column.

    Returns ``(increments, scale)`` where each increment is
    ``(row_before, row_after, amount)`` and ``amount * scale`` is joules.
    With a known counter format amounts are integer counter units
    (wrap-safe); otherwise they are plain joule differences.
    """
    values = [r.values.get(metric.name) for r in trace.rows]
    present = [i for i, v in enumerate(values) if v is not None]
    fmt = metric.counter
    out: list[tuple[int, int, float]] = []
    for i, j in zip(present, present[1:]):
        if fmt is not None:
            prev, nxt = fmt.encode(values[i], i), fmt.encode(values[j], j)
            out.append((i, j, counter_delta_units(prev, nxt)))
        else:
            diff = values[j] - values[i]
            if diff < 0:
                log.warning("%s: counter went backwards between rows %d and %d; interval dropped",
                            metric.name, i, j)
                continue
            out.append((i, j, diff))
    return out, (fmt.unit_joules if fmt is not None else 1.0)


def metric_energy_joules(trace: Trace, metric: MetricDescriptor) -> float:
    """Joules recorded by one energy or power column over the whole trace."""
    if metric.kind is Kind.CUMULATIVE_ENERGY:
        increments, scale = counter_increments(trace, metric)
        return sum(amount for _, _, amount in increments) * scale
    if metric.kind is Kind.INSTANTANEOUS_POWER:
        watts = trace.column(metric.name)
        t = trace.elapsed_s()
        ok = ~np.isnan(watts)
        if ok.sum() < 2:
            return 0.0
        return float(np.trapezoid(watts[ok], t[ok]))
    raise ValueError(f"{metric.name} is a gauge, not an energy source")


def summarize(trace: Trace, source: str | Sequence[str] | None = None) -> RunSummary:
    """Total energy, duration and average power of one run.

    ``source`` overrides the automatic column choice (a metric name or a
    list of names whose energies are added).
    """
    if len(trace.rows) < 2:
        raise ValueError("a summary needs at least two samples")
    if source is None:
        metrics = energy_sources(trace)
    else:
        names = [source] if isinstance(source, str) else list(source)
        metrics = [trace.metric(n) for n in names]
    total = math.fsum(metric_energy_joules(trace, m) for m in metrics)
    duration = (trace.rows[-1].time_ms - trace.rows[0].time_ms) / 1000.0
    return RunSummary(
        duration_s=duration,
        total_energy_j=total,
        avg_power_w=total / duration,
        sample_count=len(trace.rows),
        energy_source="+".join(m.name for m in metrics),
    )


__all__ = [
    "DELTA", "NoEnergyColumn", "RunSummary", "Sample", "TIME", "Trace", "TraceFormatError",
    "TraceMeta", "TraceWriter", "counter_increments", "dumps", "energy_sources", "loads",
    "metric_energy_joules", "open_trace_file", "parse", "read_csv", "summarize", "write_csv",
]
