"""
Workload vs idle, twenty runs each
==================================

Desk-scale version of the usual evaluation: a randomized run order,
noisy simulated runs, mean and interquartile curves, and a comparison
against the idle baseline. Output lands in ./replication/.
"""

from pathlib import Path

import numpy as np

from powerwrap.analysis import analyze_directory, randomized_schedule
from powerwrap.probes.simulated import Playback, parse_profile
from powerwrap.simulate import simulate_trace
from powerwrap.trace import write_csv

out = Path("replication")
plan = randomized_schedule(["browser", "idle"], 20, seed=2024)
print([p.condition for p in plan[:8]], "...")

# the browser condition idles at 2 W with an 8 W burst between 3 s and 4 s
profiles = {
    "browser": Playback(np.array([0, 3 - 1e-9, 3, 4 - 1e-9, 4]), np.array([2, 2, 10, 10, 2.0])),
    "idle": parse_profile("constant:2"),
}
for run in plan:
    path = out / "runs" / run.condition / f"run_{run.repetition}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    trace = simulate_trace(profiles[run.condition], 10.0, noise_w=0.5, seed=run.order)
    write_csv(trace, path)

result = analyze_directory(out / "runs", out / "analysis", source="PACKAGE_POWER")
print(result.comparisons["browser"].format("browser", "idle"))
print("plot:", result.image_path)
