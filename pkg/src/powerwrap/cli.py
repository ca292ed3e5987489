"""Command-line front end.

``powerwrap [OPTIONS] -- COMMAND`` measures a command (the ``measure``
subcommand is implied); ``analyze``, ``schedule`` and ``probes`` expose
the evaluation tooling.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import threading
from dataclasses import dataclass, field

from ._version import __version__
from .analysis import analyze_directory, randomized_schedule
from .probes import (
    HostEnvironment,
    ProfileError,
    SimulatedProbe,
    detect_probes,
    host_cpu_vendor,
    host_platform,
    session_schema,
)
from .probes.metrics import ProbeError
from .probes.system import SystemProbe
from .runner import RunSpec, Status, execute
from .sampler import SamplerConfig, run_session
from .trace import NoEnergyColumn, TraceMeta, TraceWriter, open_trace_file, summarize

log = logging.getLogger("powerwrap")

EXIT_USAGE = 64
EXIT_SPAWN_ERROR = 65
EXIT_TIMED_OUT = 66
EXIT_INTERNAL = 70

PROBE_ENV = "POWERWRAP_PROBE"
LOG_ENV = "POWERWRAP_LOG"
SUBCOMMANDS = ("measure", "analyze", "schedule", "probes")

EXIT_CODES_HELP = f"""\
exit status:
  N    the command's own exit status when it finishes by itself
       (128+S when it was killed by signal S)
  {EXIT_USAGE}   usage error
  {EXIT_SPAWN_ERROR}   the command could not be started
  {EXIT_TIMED_OUT}   the command was stopped after --max-execution seconds
  {EXIT_INTERNAL}   internal failure

environment:
  {PROBE_ENV}   default for --probe (e.g. simulated:constant:10)
  {LOG_ENV}     log level on stderr (DEBUG, INFO, WARNING; default WARNING)
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


@dataclass
class CliConfig:
    interval_ms: int = 100
    max_execution_s: int = 0
    output_path: str | None = None
    command_output_path: str | None = None
    summary: bool = False
    probe_selection: str = "auto"
    argv: list[str] = field(default_factory=list)


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def measure_parser(prog: str = "powerwrap") -> argparse.ArgumentParser:
    p = _Parser(
        prog=prog,
        usage=f"{prog} [OPTIONS] -- COMMAND [ARGS...]",
        description="Run COMMAND and sample energy, power and usage metrics while it runs.",
        epilog=EXIT_CODES_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("-i", "--interval", type=_positive_int, default=100, metavar="INTERVAL",
                   help="Duration of the interval between two measurements in milliseconds [default: 100]")
    p.add_argument("-m", "--max-execution", type=_non_negative_int, default=0, metavar="MAX_EXECUTION",
                   help="The maximum duration of the command execution in seconds, 0 for no limit [default: 0]")
    p.add_argument("-o", "--output", metavar="OUTPUT",
                   help="CSV file for the measurements, '-' for stdout "
                        "[default: energy.csv on a terminal, stdout when piped]")
    p.add_argument("--command-output", metavar="FILE",
                   help="Write the command's stdout and stderr to FILE instead of passing them through")
    p.add_argument("--summary", action="store_true",
                   help="Display a summary of the energy consumption during the execution of the command")
    p.add_argument("--probe", metavar="SPEC", default=None,
                   help=f"'auto' or 'simulated:<profile>' [default: ${PROBE_ENV} or auto]")
    p.add_argument("-V", "--version", action="version", version=f"%(prog)s {__version__}")
    return p


def parse_args(argv: list[str]) -> CliConfig:
    """Parse the measure command line (without the optional ``measure`` word)."""
    if "--" in argv:
        cut = argv.index("--")
        options, command = argv[:cut], argv[cut + 1:]
    else:
        options, command = argv, []
    ns = measure_parser().parse_args(options)
    if not command:
        raise UsageError("powerwrap: error: a command is required after '--'\n"
                         + measure_parser().format_usage())
    probe = ns.probe or os.environ.get(PROBE_ENV) or "auto"
    if probe != "auto" and not probe.startswith("simulated:"):
        raise UsageError(f"powerwrap: error: unknown probe selection {probe!r}")
    return CliConfig(
        interval_ms=ns.interval,
        max_execution_s=ns.max_execution,
        output_path=ns.output,
        command_output_path=ns.command_output,
        summary=ns.summary,
        probe_selection=probe,
        argv=command,
    )


def _select_probes(config: CliConfig):
    if config.probe_selection == "auto":
        detection = detect_probes()
        for w in detection.warnings:
            print(f"warning: probe {w}", file=sys.stderr)
        return [p for p, _ in detection], detection.capabilities()
    profile = config.probe_selection.split(":", 1)[1]
    sim = SimulatedProbe(profile)
    probes = [sim]
    try:
        probes.append(SystemProbe(host_platform(), host_cpu_vendor()))
    except ProbeError:
        pass
    return probes, [p.capabilities() for p in probes]


def main_measure(config: CliConfig) -> int:
    try:
        probes, capabilities = _select_probes(config)
    except ProfileError as exc:
        print(f"powerwrap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    metrics = session_schema(capabilities)

    to_stdout = config.output_path == "-" or (config.output_path is None and not sys.stdout.isatty())
    stream = sys.stdout if to_stdout else open_trace_file(config.output_path or "energy.csv")
    platform = host_platform()
    meta = TraceMeta(
        platform="simulated" if config.probe_selection != "auto" else platform.value,
        cpu_vendor=host_cpu_vendor(platform).value,
        interval_ms=config.interval_ms,
        argv=list(config.argv),
    )
    stop = threading.Event()
    result: dict = {}
    try:
        writer = TraceWriter(stream, metrics, meta)

        def sample() -> None:
            try:
                result["trace"] = run_session(SamplerConfig(config.interval_ms, metrics), probes,
                                              stop, sink=writer.write, meta=meta)
            except Exception as exc:  # reported after the command finishes
                result["error"] = exc
                stop.set()

        sampler = threading.Thread(target=sample, name="sampler", daemon=True)
        sampler.start()
        spec = RunSpec(list(config.argv), config.max_execution_s, config.command_output_path,
                       stdout_to_stderr=to_stdout and not config.command_output_path)
        outcome = execute(spec, stop)
        sampler.join()
    finally:
        for probe in probes:
            probe.close()
        if stream is not sys.stdout:
            stream.close()

    if "error" in result:
        print(f"powerwrap: sampling failed: {result['error']}", file=sys.stderr)
        return EXIT_INTERNAL
    if outcome.status is Status.SPAWN_ERROR:
        print(f"powerwrap: cannot run command: {outcome.error}", file=sys.stderr)
        return EXIT_SPAWN_ERROR
    trace = result["trace"]
    if config.summary:
        try:
            print(summarize(trace).describe(), file=sys.stderr)
        except NoEnergyColumn:
            duration = (trace.rows[-1].time_ms - trace.rows[0].time_ms) / 1000.0
            print(f"No energy or power metric available on this host; usage-only trace "
                  f"({len(trace.rows)} samples over {duration:.3f} s).", file=sys.stderr)
        except ValueError as exc:
            print(f"No summary: {exc}", file=sys.stderr)
    if outcome.status is Status.TIMED_OUT:
        return EXIT_TIMED_OUT
    code = outcome.exit_code
    return 128 - code if code < 0 else code


def _analyze(argv: list[str]) -> int:
    p = _Parser(prog="powerwrap analyze",
                description="Aggregate repeated runs stored as RUNS_DIR/<condition>/<run>.csv.")
    p.add_argument("runs_dir")
    p.add_argument("-o", "--output-dir", default="analysis", help="[default: analysis]")
    p.add_argument("--baseline", default="idle",
                   help="condition every other condition is compared to [default: idle]")
    p.add_argument("--source", default=None, help="metric to analyse [default: automatic]")
    p.add_argument("--format", default="svg", choices=["svg", "pdf", "png"], help="[default: svg]")
    ns = p.parse_args(argv)
    result = analyze_directory(ns.runs_dir, ns.output_dir, ns.baseline, ns.source, ns.format)
    sys.stdout.write(result.report_path.read_text())
    print(f"plot: {result.image_path}\ndata: {result.data_path}")
    return 0


def _schedule(argv: list[str]) -> int:
    p = _Parser(prog="powerwrap schedule",
                description="Print a randomized run order: each condition REPETITIONS times.")
    p.add_argument("conditions", nargs="+")
    p.add_argument("-n", "--repetitions", type=_positive_int, default=20, help="[default: 20]")
    p.add_argument("--seed", type=int, default=None, help="[default: random]")
    ns = p.parse_args(argv)
    print("order,condition,run")
    for run in randomized_schedule(ns.conditions, ns.repetitions, ns.seed):
        print(f"{run.order},{run.condition},{run.repetition}")
    return 0


def _probes(argv: list[str]) -> int:
    _Parser(prog="powerwrap probes", description="List the metrics available on this host.").parse_args(argv)
    detection = detect_probes(HostEnvironment())
    for probe, caps in detection:
        for m in caps.metrics:
            print(f"{probe.name:10} {m.column:24} {m.kind.value:20} {m.unit.value}")
    for w in detection.warnings:
        print(f"unavailable: {w}")
    detection.close()
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if argv and argv[0] in SUBCOMMANDS:
            cmd, rest = argv[0], argv[1:]
            if cmd == "analyze":
                return _analyze(rest)
            if cmd == "schedule":
                return _schedule(rest)
            if cmd == "probes":
                return _probes(rest)
            argv = rest
        return main_measure(parse_args(argv))
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return exc.code if isinstance(exc.code, int) else 0
    except (OSError, ValueError) as exc:
        print(f"powerwrap: error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


