"""Run the measured command: spawn, time-limit, capture output, reap."""

from __future__ import annotations

import enum
import logging
import os
import signal
import sys
import subprocess
import threading
import time
from dataclasses import dataclass

import psutil

log = logging.getLogger(__name__)

KILL_GRACE_S = 2.0
_POSIX = os.name == "posix"


@dataclass
class RunSpec:
    argv: list[str]
    max_execution_s: int = 0
    command_output_path: str | None = None
    stdout_to_stderr: bool = False

    def __post_init__(self) -> None:
        if not self.argv or not self.argv[0]:
            raise ValueError("a command is required")
        if self.max_execution_s < 0:
            raise ValueError("max_execution_s must be >= 0 (0 = unlimited)")


class Status(str, enum.Enum):
    EXITED = "exit_code"
    TIMED_OUT = "timed_out"
    SPAWN_ERROR = "spawn_error"


@dataclass
class RunOutcome:
    status: Status
    exit_code: int | None = None
    error: str | None = None
    wall_s: float = 0.0
    pid: int | None = None


def _group_members(pgid: int) -> list[psutil.Process]:
    members = []
    for proc in psutil.process_iter(["status"]):
        try:
            if os.getpgid(proc.pid) == pgid and proc.info["status"] != psutil.STATUS_ZOMBIE:
                members.append(proc)
        except (ProcessLookupError, PermissionError, psutil.Error):
            continue
    return members


def _signal_group(pgid: int, sig: int) -> None:
    try:
        os.killpg(pgid, sig)
    except (ProcessLookupError, PermissionError):
        pass


def _terminate_group(pgid: int, grace_s: float = KILL_GRACE_S) -> None:
    """SIGTERM the process group, SIGKILL whatever survives the grace period."""
    if not _group_members(pgid):
        return
    _signal_group(pgid, signal.SIGTERM)
    deadline = time.monotonic() + grace_s
    while time.monotonic() < deadline:
        if not _group_members(pgid):
            return
        time.sleep(0.05)
    _signal_group(pgid, signal.SIGKILL)


def _terminate_tree(proc: subprocess.Popen, grace_s: float = KILL_GRACE_S) -> None:
    """Windows: terminate the child and all its descendants."""
    try:
        parent = psutil.Process(proc.pid)
        family = parent.children(recursive=True) + [parent]
    except psutil.Error:
        return
    for p in family:
        try:
            p.terminate()
        except psutil.Error:
            pass
    _, alive = psutil.wait_procs(family, timeout=grace_s)
    for p in alive:
        try:
            p.kill()
        except psutil.Error:
            pass


def execute(spec: RunSpec, stop: threading.Event | None = None) -> RunOutcome:
    """Run ``spec.argv`` to completion or until the time limit.

    The child inherits environment and working directory and runs in its
    own process group, which is torn down entirely on timeout and after a
    natural exit (no stray descendants feed load into the next run).
    stdout and stderr are interleaved into ``command_output_path`` when
    given, otherwise they pass through (stdout onto our stderr when
    ``stdout_to_stderr``, used while the trace streams to stdout). ``stop`` is set once the child has
    been reaped, whatever the outcome.
    """
    out = None
    started = time.monotonic()
    try:
        if spec.command_output_path:
            out = open(spec.command_output_path, "wb")
        kwargs: dict = {}
        if _POSIX:
            kwargs["start_new_session"] = True
        else:
            kwargs["creationflags"] = subprocess.CREATE_NEW_PROCESS_GROUP
        if out is not None:
            kwargs.update(stdout=out, stderr=subprocess.STDOUT)
        elif spec.stdout_to_stderr:
            try:
                kwargs["stdout"] = sys.stderr.fileno()
            except (AttributeError, OSError, ValueError):
                kwargs["stdout"] = 2
        try:
            proc = subprocess.Popen(spec.argv, **kwargs)
        except OSError as exc:
            return RunOutcome(Status.SPAWN_ERROR, error=f"{spec.argv[0]}: {exc.strerror or exc}")

        timeout = spec.max_execution_s or None
        pgid = proc.pid if _POSIX else None
        try:
            code = proc.wait(timeout=timeout)
            status = Status.EXITED
        except subprocess.TimeoutExpired:
            log.info("command exceeded %d s; terminating", spec.max_execution_s)
            if _POSIX:
                _terminate_group(pgid)
            else:
                _terminate_tree(proc)
            proc.wait()
            code, status = None, Status.TIMED_OUT
        except BaseException:
            # Ctrl-C or similar: never leave the child behind.
            if _POSIX:
                _terminate_group(pgid)
            else:
                _terminate_tree(proc)
            proc.wait()
            raise
        if status is Status.EXITED and _POSIX:
            _terminate_group(pgid)
        return RunOutcome(status, exit_code=code, wall_s=time.monotonic() - started, pid=proc.pid)
    finally:
        if out is not None:
            out.close()
        if stop is not None:
            stop.set()


__all__ = ["KILL_GRACE_S", "RunOutcome", "RunSpec", "Status", "execute"]
