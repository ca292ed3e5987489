from __future__ import annotations

import os
import random

import pytest


def ring_counter_advance(start: int, steps: int, modulus: int) -> int:
    """Brute-force oracle: tick a ring counter one increment at a time."""
    x = start
    for _ in range(steps):
        x += 1
        if x == modulus:
            x = 0
    return x


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20231018)


def under_ci_load() -> bool:
    return bool(os.environ.get("POWERWRAP_CI_LOAD"))


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one pass/fail line for an acceptance criterion, then assert it."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
