"""
A simulated measurement session
===============================

Runs the sampler against a synthetic power profile in virtual time,
writes the CSV trace and summarizes it two ways.
"""

import io

import numpy as np

from powerwrap.simulate import simulate_trace
from powerwrap.trace import loads, summarize, write_csv

trace = simulate_trace("sinusoid:20,5,2", duration_s=4.0, interval_ms=100)
print(len(trace.rows), "samples")

buf = io.StringIO()
write_csv(trace, buf)
print("\n".join(buf.getvalue().splitlines()[-3:]))

# reading it back gives the same trace
assert loads(buf.getvalue()) == trace

# the counter column and the power column should tell the same story
print(summarize(trace, source="PACKAGE_ENERGY").describe())
print(summarize(trace, source="PACKAGE_POWER").describe())

watts = trace.column("PACKAGE_POWER")
print("min/max power:", np.min(watts), np.max(watts))
