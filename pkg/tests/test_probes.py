from __future__ import annotations

import math
import struct

import pytest

from fakehost import FakeNvml, FakeSmc, make_cpu_sysfs, make_msr_tree, make_powercap, write_msr
from powerwrap.probes import (
    Constant,
    CpuVendor,
    Domain,
    HostEnvironment,
    Kind,
    Platform,
    ProbeUnavailable,
    detect_probes,
    read_counter,
    read_power_watts,
    simulated_probe,
)
from powerwrap.probes import support
from powerwrap.probes.msr import MsrAccess, MsrProbe, VENDOR_REGISTERS, energy_unit_joules
from powerwrap.probes.nvml import NvmlProbe
from powerwrap.probes.powercap import PowercapProbe
from powerwrap.probes.smc import SmcKeyData, SmcProbe, decode_value, fourcc, fourcc_str


class TestMsr:
    def test_energy_unit_from_esu_16(self):
        register = (10 << 16) | (16 << 8) | 3
        assert energy_unit_joules(register) == 2.0**-16
        assert energy_unit_joules(register) == pytest.approx(1.5259e-5, rel=1e-4)

    def test_esu_field_isolated(self):
        # other fields must not leak into the decode
        assert energy_unit_joules(0xFFFF_E0FF & ~(0x1F << 8) | (14 << 8)) == 2.0**-14

    def test_intel_package_only(self, tmp_path):
        root = make_msr_tree(tmp_path / "cpu", CpuVendor.INTEL, cpus=4)
        probe = MsrProbe(CpuVendor.INTEL, MsrAccess(root), sysfs_root=tmp_path / "none")
        assert probe.capabilities().names() == ["PACKAGE_ENERGY"]
        metric = probe.metrics[0]
        r = read_counter(probe, metric)
        assert (r.raw, r.width_bits, r.unit_joules) == (1000, 32, 2.0**-16)
        assert probe.read(metric) == 1000 * 2.0**-16

    def test_only_low_32_bits_are_energy(self, tmp_path):
        root = make_msr_tree(tmp_path / "cpu", CpuVendor.INTEL, cpus=1)
        write_msr(root, 0, VENDOR_REGISTERS[CpuVendor.INTEL].package_energy, (0xABCD << 32) | 77)
        probe = MsrProbe(CpuVendor.INTEL, MsrAccess(root), sysfs_root=tmp_path / "none")
        assert read_counter(probe, probe.metrics[0]).raw == 77

    def test_amd_per_core(self, tmp_path):
        root = make_msr_tree(tmp_path / "cpu", CpuVendor.AMD, cpus=3)
        probe = MsrProbe(CpuVendor.AMD, MsrAccess(root), sysfs_root=tmp_path / "none")
        assert probe.capabilities().names() == [
            "PACKAGE_ENERGY", "CORE0_ENERGY", "CORE1_ENERGY", "CORE2_ENERGY"]
        core2 = probe.metrics[3]
        assert core2.index == 2 and core2.domain is Domain.CORE
        assert read_counter(probe, core2).raw == 12

    def test_missing_devices(self, tmp_path):
        (tmp_path / "cpu").mkdir()
        with pytest.raises(ProbeUnavailable):
            MsrProbe(CpuVendor.INTEL, MsrAccess(tmp_path / "cpu"))

    def test_unknown_vendor(self, tmp_path):
        with pytest.raises(ProbeUnavailable):
            MsrProbe(CpuVendor.OTHER, MsrAccess(tmp_path))


class TestPowercap:
    def test_package_zone_with_max_range(self, tmp_path):
        probe = PowercapProbe(make_powercap(tmp_path / "pc"), CpuVendor.INTEL)
        assert probe.capabilities().names() == ["PACKAGE_ENERGY"]
        metric = probe.metrics[0]
        assert metric.counter.max_raw == 262143328850
        r = read_counter(probe, metric)
        assert r.raw == 123456789 and r.unit_joules == 1e-6

    def test_two_sockets(self, tmp_path):
        root = make_powercap(tmp_path / "pc", packages=(
            ("intel-rapl:0", "package-0", 1, 1000), ("intel-rapl:1", "package-1", 2, 1000)), extra=False)
        probe = PowercapProbe(root)
        assert probe.capabilities().names() == ["PACKAGE0_ENERGY", "PACKAGE1_ENERGY"]

    def test_absent_tree(self, tmp_path):
        with pytest.raises(ProbeUnavailable):
            PowercapProbe(tmp_path / "missing")


class TestSmc:
    def test_struct_layout_matches_kernel(self):
        import ctypes

        assert ctypes.sizeof(SmcKeyData) == 80
        assert SmcKeyData.bytes.offset == 48

    def test_fourcc_roundtrip(self):
        assert fourcc("PSTR") == 0x50535452
        assert fourcc_str(fourcc("flt ")) == "flt "

    @pytest.mark.parametrize(
        "dtype,payload,expected",
        [
            ("flt ", struct.pack("<f", 12.5), 12.5),
            ("sp78", bytes([0x28, 0x80]), 40.5),
            ("fpe2", bytes([0x00, 0x0A]), 2.5),
            ("ui8 ", bytes([7]), 7.0),
            ("ui16", bytes([0x01, 0x00]), 256.0),
            ("ui32", bytes([0, 0, 1, 0]), 256.0),
        ],
    )
    def test_decode(self, dtype, payload, expected):
        assert decode_value(dtype, payload) == expected

    def test_arm_reports_system_power(self):
        probe = SmcProbe(CpuVendor.APPLE_ARM, FakeSmc({"PSTR": 7.25}))
        caps = probe.capabilities()
        assert caps.names() == ["SYSTEM_POWER"]
        assert read_power_watts(probe, caps.metrics[0]) == 7.25

    def test_no_keys(self):
        with pytest.raises(ProbeUnavailable):
            SmcProbe(CpuVendor.APPLE_ARM, FakeSmc({}))


def test_nvml_metrics_per_device():
    probe = NvmlProbe(Platform.LINUX, CpuVendor.AMD, FakeNvml(count=2))
    names = probe.capabilities().names()
    assert names[:2] == ["GPU0_POWER", "GPU1_POWER"]
    assert "GPU1_FREQUENCY" in names and "GPU0_USAGE" in names
    assert probe.read(probe.metrics[1]) == 56.5


class TestSimulated:
    def test_constant_counter_advance(self):
        now = [0]
        probe = simulated_probe("constant:2", unit_joules=1e-6, width_bits=32, clock=lambda: now[0])
        energy = probe.metrics[0]
        before = read_counter(probe, energy)
        now[0] = 5 * 10**9
        after = read_counter(probe, energy)
        assert after.raw - before.raw == 10_000_000  # 10 J of microjoules

    def test_power_channel(self):
        now = [0]
        probe = simulated_probe(Constant(10.0), clock=lambda: now[0])
        assert read_power_watts(probe, probe.metrics[1]) == 10.0

    def test_sinusoid_at_quarter_period(self):
        now = [0]
        probe = simulated_probe(f"sinusoid:5,5,{2 * math.pi}", clock=lambda: now[0])
        now[0] = round(math.pi / 2 * 1e9)
        assert read_power_watts(probe, probe.metrics[1]) == pytest.approx(10.0, abs=1e-12)

    def test_counter_wraps(self):
        now = [0]
        probe = simulated_probe("constant:1", unit_joules=1.0, width_bits=8, clock=lambda: now[0],
                                initial_raw=250)
        now[0] = 10 * 10**9
        assert read_counter(probe, probe.metrics[0]).raw == (250 + 10) % 256

    def test_metrics_are_cumulative_and_power(self):
        probe = simulated_probe("constant:1")
        kinds = [m.kind for m in probe.metrics]
        assert kinds == [Kind.CUMULATIVE_ENERGY, Kind.INSTANTANEOUS_POWER]
        assert probe.capabilities().platform is None


class TestDetect:
    def test_linux_amd(self, tmp_path):
        host = HostEnvironment(
            platform=Platform.LINUX, cpu_vendor=CpuVendor.AMD, cpu_count=2,
            msr_root=str(make_msr_tree(tmp_path / "cpu", CpuVendor.AMD, cpus=2)),
            powercap_root=str(tmp_path / "nopowercap"),
            cpu_sysfs_root=str(make_cpu_sysfs(tmp_path / "sys", cpus=2)),
            nvml_library=lambda: (_ for _ in ()).throw(ProbeUnavailable("no NVML")),
        )
        result = detect_probes(host)
        names = [m.name for m in result.metrics()]
        assert names[:3] == ["PACKAGE_ENERGY", "CORE0_ENERGY", "CORE1_ENERGY"]
        assert {"CPU_FREQUENCY_0", "CPU_FREQUENCY_1", "CPU_USAGE_0", "USED_MEMORY"} <= set(names)
        assert not any(m.domain is Domain.SYSTEM for m in result.metrics())
        assert [w.backend for w in result.warnings] == ["nvml"]
        for caps in result.capabilities():
            assert support.violations(caps) == []

    def test_linux_intel_falls_back_to_powercap(self, tmp_path):
        host = HostEnvironment(
            platform=Platform.LINUX, cpu_vendor=CpuVendor.INTEL, cpu_count=1,
            msr_root=str(tmp_path / "nomsr"),
            powercap_root=str(make_powercap(tmp_path / "pc")),
            cpu_sysfs_root=str(make_cpu_sysfs(tmp_path / "sys", cpus=1)),
            nvml_library=lambda: FakeNvml(),
        )
        result = detect_probes(host)
        names = [m.name for m in result.metrics()]
        assert names[0] == "PACKAGE_ENERGY"
        assert "GPU0_POWER" in names and "GPU0_USAGE" in names
        assert [w.backend for w in result.warnings] == ["msr"]

    def test_macos_arm(self, tmp_path):
        host = HostEnvironment(platform=Platform.MACOS, cpu_vendor=CpuVendor.APPLE_ARM, cpu_count=2,
                               smc_connection=lambda: FakeSmc({"PSTR": 5.0, "PG0R": 1.0}))
        result = detect_probes(host)
        names = [m.name for m in result.metrics()]
        assert names[0] == "SYSTEM_POWER"
        assert "GPU0_POWER" in names and "USED_MEMORY" in names and "CPU_USAGE_1" in names
        assert not any("FREQUENCY" in n for n in names)
        assert not any(m.domain is Domain.PACKAGE for m in result.metrics())
        for caps in result.capabilities():
            assert support.violations(caps) == []

    def test_nothing_accessible_degrades_to_gauges(self, tmp_path):
        host = HostEnvironment(
            platform=Platform.LINUX, cpu_vendor=CpuVendor.INTEL, cpu_count=2,
            msr_root=str(tmp_path / "a"), powercap_root=str(tmp_path / "b"),
            cpu_sysfs_root=str(tmp_path / "c"),
            nvml_library=lambda: (_ for _ in ()).throw(ProbeUnavailable("no NVML")),
        )
        result = detect_probes(host)
        kinds = {m.kind for m in result.metrics()}
        assert kinds == {Kind.GAUGE}
        assert {"CPU_USAGE_0", "CPU_USAGE_1", "USED_MEMORY"} <= {m.name for m in result.metrics()}
        assert [w.backend for w in result.warnings] == ["msr", "powercap", "nvml"]

    def test_idempotent(self, tmp_path):
        host = HostEnvironment(platform=Platform.LINUX, cpu_vendor=CpuVendor.AMD, cpu_count=2,
                               msr_root=str(make_msr_tree(tmp_path / "cpu", CpuVendor.AMD)),
                               cpu_sysfs_root=str(make_cpu_sysfs(tmp_path / "sys")))
        assert detect_probes(host).capabilities() == detect_probes(host).capabilities()

    def test_support_table_filters_intel_core_energy(self):
        from powerwrap.probes.metrics import MetricDescriptor, Unit

        core = MetricDescriptor("CORE0_ENERGY", Unit.JOULES, Kind.CUMULATIVE_ENERGY, Domain.CORE, 0)
        assert support.allowed(core, Platform.LINUX, CpuVendor.AMD)
        assert not support.allowed(core, Platform.LINUX, CpuVendor.INTEL)
        assert not support.allowed(core, Platform.WINDOWS, CpuVendor.AMD)
