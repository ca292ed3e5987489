"""Whole measurement sessions on the simulated probe, in virtual time."""

from __future__ import annotations

import threading

from .probes.simulated import PowerProfile, SimulatedProbe
from .sampler import SamplerConfig, VirtualClock, run_session
from .trace import Trace, TraceMeta


def simulate_trace(
    profile: PowerProfile | str,
    duration_s: float,
    interval_ms: int = 100,
    noise_w: float = 0.0,
    seed: int | None = None,
    unit_joules: float = 1e-6,
    width_bits: int = 32,
    initial_raw: int = 0,
    final_sample: bool = True,
    read_cost_ns: int = 0,
) -> Trace:
    """Sample a simulated probe for ``duration_s`` of virtual time.

    Runs instantly and deterministically; the sampler code path is the
    same one used for real measurements.
    """
    clock = VirtualClock(stop_after_s=duration_s, read_cost_ns=read_cost_ns)
    probe = SimulatedProbe(profile, unit_joules=unit_joules, width_bits=width_bits, clock=clock,
                           noise_w=noise_w, seed=seed, initial_raw=initial_raw)
    config = SamplerConfig(interval_ms, list(probe.metrics), final_sample=final_sample)
    meta = TraceMeta(platform="simulated", interval_ms=interval_ms)
    return run_session(config, [probe], threading.Event(), clock=clock, meta=meta)
