"""
Energy counters and wraparound
==============================

Hardware energy counters are narrow unsigned registers that roll over.
This walks through decoding a raw register and taking safe deltas.
"""

from powerwrap.probes.metrics import RawCounterReading, counter_delta_joules
from powerwrap.probes.msr import energy_unit_joules

# The power-unit register stores the energy unit exponent in bits 12:8.
# A value of 16 there means one count is 2**-16 J.
unit_reg = 16 << 8
unit = energy_unit_joules(unit_reg)
print("joules per count:", unit)

# Two reads straddling the 32-bit rollover
before = RawCounterReading(0xFFFFFFF0, 32, unit, timestamp=0)
after = RawCounterReading(0x10, 32, unit, timestamp=100_000_000)
print("counts elapsed:", (after.raw - before.raw) % before.modulus)
print("energy over the interval (J):", counter_delta_joules(before, after))

# A simulated probe behaves like the real thing, including the rollover
from powerwrap.probes import simulated_probe

probe = simulated_probe("constant:10", unit_joules=1e-6, width_bits=32)
probe.start()
m = probe.metrics[0]
print(m.name, probe.read_counter(m))
