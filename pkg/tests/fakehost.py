"""Fake device trees for probe tests."""

from __future__ import annotations

import struct
from pathlib import Path

from powerwrap.probes.msr import VENDOR_REGISTERS


def write_msr(root: Path, cpu: int, address: int, value: int) -> None:
    path = root / str(cpu) / "msr"
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "r+b" if path.exists() else "w+b"
    with open(path, mode) as fh:
        fh.seek(address)
        fh.write(struct.pack("<Q", value))


def make_msr_tree(root: Path, vendor, cpus: int = 2, esu: int = 16, package_raw: int = 1000,
                  core_raw: int = 10) -> Path:
    regs = VENDOR_REGISTERS[vendor]
    for cpu in range(cpus):
        write_msr(root, cpu, regs.power_unit, (10 << 16) | (esu << 8) | 3)
        write_msr(root, cpu, regs.package_energy, package_raw)
        if regs.core_energy is not None:
            write_msr(root, cpu, regs.core_energy, core_raw + cpu)
    return root


def make_cpu_sysfs(root: Path, cpus: int = 2, khz: int = 3_600_000) -> Path:
    for cpu in range(cpus):
        d = root / f"cpu{cpu}"
        (d / "cpufreq").mkdir(parents=True, exist_ok=True)
        (d / "cpufreq" / "scaling_cur_freq").write_text(f"{khz}\n")
        (d / "topology").mkdir(exist_ok=True)
        (d / "topology" / "physical_package_id").write_text("0\n")
    return root


def make_powercap(root: Path, packages=(("intel-rapl:0", "package-0", 123456789, 262143328850),),
                  extra=True) -> Path:
    for zone, name, energy, max_range in packages:
        d = root / zone
        d.mkdir(parents=True, exist_ok=True)
        (d / "name").write_text(name + "\n")
        (d / "energy_uj").write_text(f"{energy}\n")
        (d / "max_energy_range_uj").write_text(f"{max_range}\n")
        if extra:
            sub = root / f"{zone}:0"
            sub.mkdir(exist_ok=True)
            (sub / "name").write_text("core\n")
            (sub / "energy_uj").write_text("5\n")
            (sub / "max_energy_range_uj").write_text(f"{max_range}\n")
    dram = root / "intel-rapl:1"
    if extra:
        dram.mkdir(exist_ok=True)
        (dram / "name").write_text("psys\n")
        (dram / "energy_uj").write_text("7\n")
        (dram / "max_energy_range_uj").write_text("1000\n")
    return root


class FakeSmc:
    def __init__(self, values: dict[str, float]) -> None:
        self.values = dict(values)

    def read_key(self, key: str) -> float:
        from powerwrap.probes import ProbeReadError

        if key not in self.values:
            raise ProbeReadError(f"no key {key}")
        return self.values[key]

    def close(self) -> None:
        pass


class FakeNvml:
    def __init__(self, count: int = 1, watts: float = 55.5) -> None:
        self.count = count
        self.watts = watts

    def device_count(self) -> int:
        return self.count

    def power_watts(self, index: int) -> float:
        return self.watts + index

    def utilization_percent(self, index: int) -> float:
        return 40.0

    def graphics_clock_mhz(self, index: int) -> float:
        return 1800.0

    def shutdown(self) -> None:
        pass
