"""Multi-run evaluation: power curves, mean/IQR aggregation, workload vs idle.

Runs are aligned by sample index, not wall time, and truncated to the
shortest run. Quartiles use linear interpolation between order
statistics (``numpy.percentile(..., method="linear")``, the same
convention as Excel's PERCENTILE.INC and R's type 7), so they can be
reproduced with any standard tool.
"""

from __future__ import annotations

import csv
import logging
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .probes.metrics import Kind
from .trace import Trace, counter_increments, energy_sources, read_csv

log = logging.getLogger(__name__)


@dataclass
class PowerSeries:
    run_id: str
    watts: np.ndarray
    interval_ms: int

    def __post_init__(self) -> None:
        self.watts = np.asarray(self.watts, dtype=float)
        if not np.all(np.isfinite(self.watts)) or np.any(self.watts < 0):
            raise ValueError(f"{self.run_id}: power values must be finite and non-negative")

    def __len__(self) -> int:
        return len(self.watts)


@dataclass
class AggregateCurve:
    mean: np.ndarray
    q1: np.ndarray
    q3: np.ndarray
    n_runs: int
    interval_ms: int

    @property
    def length(self) -> int:
        return len(self.mean)

    def energy_joules(self) -> float:
        """Energy under the mean curve."""
        return float(np.sum(self.mean)) * self.interval_ms / 1000.0


def _interval_ms(trace: Trace) -> int:
    if trace.meta.interval_ms:
        return int(trace.meta.interval_ms)
    times = trace.times_ms()
    if len(times) < 2:
        raise ValueError("cannot infer the sampling interval from a single row")
    return int(round(float(np.median(np.diff(times)))))


def _row_durations_s(trace: Trace) -> np.ndarray:
    """Seconds covered by each row's preceding interval (index 0 unused)."""
    delta = np.array([r.delta_ms for r in trace.rows], dtype=float)
    times = trace.times_ms().astype(float)
    fallback = np.concatenate(([0.0], np.diff(times)))
    return np.where(delta > 0, delta, fallback) / 1000.0


def _fill_gaps(values: np.ndarray) -> np.ndarray:
    ok = np.isfinite(values)
    if ok.all():
        return values
    if not ok.any():
        raise ValueError("no usable power values")
    idx = np.arange(len(values))
    return np.interp(idx, idx[ok], values[ok])


def _cumulative_watts(trace: Trace, name: str) -> np.ndarray:
    metric = trace.metric(name)
    increments, scale = counter_increments(trace, metric)
    durations = _row_durations_s(trace)
    watts = np.full(len(trace.rows) - 1, np.nan)
    for i, j, amount in increments:
        # spread the energy of a gap evenly over its duration
        span = durations[i + 1 : j + 1]
        watts[i:j] = amount * scale / span.sum()
    return watts


def power_series(trace: Trace, run_id: str = "", source: str | Sequence[str] | None = None) -> PowerSeries:
    """Power in watts per sample index.

    Cumulative energy columns are differenced (wrap-safe), so the series
    has one entry per interval: ``len(rows) - 1``, the leading sample is
    dropped. Power columns are copied as they are. Several sources (e.g.
    multi-socket packages) are added together. Failed reads are bridged by
    interpolation.
    """
    if source is None:
        metrics = energy_sources(trace)
    else:
        metrics = [trace.metric(n) for n in ([source] if isinstance(source, str) else source)]
    kinds = {m.kind for m in metrics}
    if len(kinds) != 1:
        raise ValueError("cannot mix cumulative and power sources in one series")
    if Kind.CUMULATIVE_ENERGY in kinds:
        if len(trace.rows) < 2:
            raise ValueError("differencing needs at least two rows")
        parts = [_cumulative_watts(trace, m.name) for m in metrics]
    elif Kind.INSTANTANEOUS_POWER in kinds:
        parts = [trace.column(m.name) for m in metrics]
    else:
        raise ValueError("gauges cannot be turned into power")
    watts = _fill_gaps(np.sum(parts, axis=0))
    return PowerSeries(run_id, watts, _interval_ms(trace))


def aggregate(runs: Sequence[PowerSeries]) -> AggregateCurve:
    """Per-index mean and quartiles over runs truncated to the common length."""
    if len(runs) < 2:
        raise ValueError("aggregation needs at least two runs")
    intervals = {r.interval_ms for r in runs}
    if len(intervals) != 1:
        raise ValueError(f"runs use different sampling intervals: {sorted(intervals)}")
    length = min(len(r) for r in runs)
    if length == 0:
        raise ValueError("a run has no samples")
    stack = np.vstack([r.watts[:length] for r in runs])
    q1, q3 = np.percentile(stack, [25, 75], axis=0, method="linear")
    return AggregateCurve(stack.mean(axis=0), q1, q3, len(runs), intervals.pop())


@dataclass
class ComparisonReport:
    difference_w: np.ndarray
    energy_difference_j: float
    workload_energy_j: float
    idle_energy_j: float
    workload_peak_w: float
    workload_peak_index: int
    idle_peak_w: float
    idle_peak_index: int
    interval_ms: int

    def format(self, workload_label: str = "workload", idle_label: str = "idle") -> str:
        width = max(len(workload_label), len(idle_label))
        lines = [
            f"interval: {self.interval_ms} ms, compared samples: {len(self.difference_w)}",
            f"{workload_label:<{width}}  mean energy {self.workload_energy_j:10.4f} J  "
            f"peak {self.workload_peak_w:8.3f} W at index {self.workload_peak_index}",
            f"{idle_label:<{width}}  mean energy {self.idle_energy_j:10.4f} J  "
            f"peak {self.idle_peak_w:8.3f} W at index {self.idle_peak_index}",
            f"energy difference ({workload_label} - {idle_label}): {self.energy_difference_j:.4f} J",
        ]
        return "\n".join(lines) + "\n"


def compare(workload: AggregateCurve, idle: AggregateCurve) -> ComparisonReport:
    if workload.interval_ms != idle.interval_ms:
        raise ValueError("curves use different sampling intervals")
    n = min(workload.length, idle.length)
    w, i = workload.mean[:n], idle.mean[:n]
    dt = workload.interval_ms / 1000.0
    w_energy = float(np.sum(w)) * dt
    i_energy = float(np.sum(i)) * dt
    return ComparisonReport(
        difference_w=w - i,
        energy_difference_j=float(np.sum(w - i)) * dt,
        workload_energy_j=w_energy,
        idle_energy_j=i_energy,
        workload_peak_w=float(w.max()),
        workload_peak_index=int(w.argmax()),
        idle_peak_w=float(i.max()),
        idle_peak_index=int(i.argmax()),
        interval_ms=workload.interval_ms,
    )


@dataclass(frozen=True)
class PlannedRun:
    order: int
    condition: str
    repetition: int


def randomized_schedule(conditions: Sequence[str], repetitions: int, seed: int | None = None) -> list[PlannedRun]:
    """Every condition ``repetitions`` times, in a seeded uniform shuffle.

    ``repetition`` numbers each condition's runs 0, 1, ... in plan order.
    """
    if not conditions:
        raise ValueError("at least one condition is required")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    pool = [c for c in conditions for _ in range(repetitions)]
    order = np.random.default_rng(seed).permutation(len(pool))
    seen: dict[str, int] = {}
    plan = []
    for position, k in enumerate(order):
        cond = pool[k]
        plan.append(PlannedRun(position, cond, seen.get(cond, 0)))
        seen[cond] = seen.get(cond, 0) + 1
    return plan


# -- plotting ------------------------------------------------------------------

PLOT_DATA_HEADER = ["label", "index", "mean", "q1", "q3"]


def plot_data_path(image_path: str | Path) -> Path:
    return Path(image_path).with_suffix(".csv")


def write_plot_data(curves: Mapping[str, AggregateCurve], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PLOT_DATA_HEADER)
        for label, curve in curves.items():
            for k in range(curve.length):
                writer.writerow([label, k, repr(float(curve.mean[k])), repr(float(curve.q1[k])),
                                 repr(float(curve.q3[k]))])


def read_plot_data(path: str | Path) -> dict[str, dict[str, np.ndarray]]:
    """Inverse of the data file written next to a plot: label -> mean/q1/q3 arrays."""
    cols: dict[str, dict[str, list[float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader) != PLOT_DATA_HEADER:
            raise ValueError(f"{path}: not a plot data file")
        for label, _, mean, q1, q3 in reader:
            entry = cols.setdefault(label, {"mean": [], "q1": [], "q3": []})
            entry["mean"].append(float(mean))
            entry["q1"].append(float(q1))
            entry["q3"].append(float(q3))
    return {label: {k: np.array(v) for k, v in d.items()} for label, d in cols.items()}


def emit_plot(curves: Mapping[str, AggregateCurve], path: str | Path, title: str | None = None) -> tuple[Path, Path]:
    """Mean line plus shaded IQR band per curve, over sample index.

    ``path`` picks the image format from its suffix (``.svg`` or ``.pdf``
    for vector output). The exact plotted numbers go to a sibling ``.csv``.
    """
    if not curves:
        raise ValueError("nothing to plot")
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib import pyplot as plt

    path = Path(path)
    data_path = plot_data_path(path)
    if data_path == path:
        raise ValueError("image path must not end in .csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, curve in curves.items():
        x = np.arange(curve.length)
        (line,) = ax.plot(x, curve.mean, label=label, linewidth=1.5)
        ax.fill_between(x, curve.q1, curve.q3, alpha=0.3, linewidth=0, color=line.get_color())
    ax.set_xlabel(f"sample index ({next(iter(curves.values())).interval_ms} ms)")
    ax.set_ylabel("power (W)")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    write_plot_data(curves, data_path)
    return path, data_path


# -- directory-of-runs layout ----------------------------------------------------


def _natural_key(path: Path) -> list:
    return [int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", path.stem)]


def load_runs(root: str | Path) -> dict[str, list[tuple[str, Trace]]]:
    """Read ``<root>/<condition>/<run>.csv`` into condition -> [(run id, trace)]."""
    root = Path(root)
    runs: dict[str, list[tuple[str, Trace]]] = {}
    for cond_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        files = sorted(cond_dir.glob("*.csv"), key=_natural_key)
        if files:
            runs[cond_dir.name] = [(f.stem, read_csv(f)) for f in files]
    if not runs:
        raise ValueError(f"no <condition>/<run>.csv files under {root}")
    return runs


@dataclass
class AnalysisResult:
    curves: dict[str, AggregateCurve]
    comparisons: dict[str, ComparisonReport]
    image_path: Path
    data_path: Path
    report_path: Path


def analyze_directory(root: str | Path, out_dir: str | Path, baseline: str | None = "idle",
                      source: str | None = None, image_format: str = "svg") -> AnalysisResult:
    runs = load_runs(root)
    curves = {
        cond: aggregate([power_series(t, run_id, source) for run_id, t in traces])
        for cond, traces in runs.items()
    }
    if baseline is not None and baseline not in curves:
        log.warning("baseline condition %r not found; skipping comparisons", baseline)
        baseline = None
    comparisons = {
        cond: compare(curve, curves[baseline])
        for cond, curve in curves.items() if baseline is not None and cond != baseline
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    image, data = emit_plot(curves, out / f"power.{image_format}")
    report = out / "comparison.txt"
    with open(report, "w", encoding="utf-8") as fh:
        for cond, curve in curves.items():
            fh.write(f"{cond}: {curve.n_runs} runs, {curve.length} samples, "
                     f"mean energy {curve.energy_joules():.4f} J\n")
        for cond, rep in comparisons.items():
            fh.write("\n" + rep.format(cond, baseline))
    return AnalysisResult(curves, comparisons, image, data, report)


__all__ = [
    "AggregateCurve", "AnalysisResult", "ComparisonReport", "PlannedRun", "PowerSeries",
    "aggregate", "analyze_directory", "compare", "emit_plot", "load_runs", "plot_data_path",
    "power_series", "randomized_schedule", "read_plot_data", "write_plot_data",
]
