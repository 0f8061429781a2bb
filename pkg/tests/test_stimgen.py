import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icebench.benchdef import BenchmarkSpec, DeviceGeometry, validate_spec
from icebench.errors import StimulusError
from icebench.lfsr import LfsrConfig, generate_sequence
from icebench.netgen import DesignBundle, generate
from icebench.stimgen import (
    ScheduleRow,
    StimulusSchedule,
    StimulusTiming,
    build_schedule,
    constant_schedule,
    default_bit_select,
    gen_mcu_schedule,
    gen_sim_driver,
    gen_verilog_testbench,
    parse_mcu_schedule,
)

GEOM = DeviceGeometry("big", 40, 40, 8)
LFSR4 = LfsrConfig(4, {4, 3}, 1)
DEFAULT = StimulusTiming(interval=100, trigger_lead=100, steps=15)


def lut_bundle(inputs=4, cells=4):
    pins = tuple(str(p) for p in range(inputs))
    return generate(validate_spec(BenchmarkSpec("dut", "lut_grid", GEOM, cells, pins)))


def ring_bundle():
    return generate(validate_spec(BenchmarkSpec("osc", "ring_oscillator", GEOM, 8, ("e",), ("o",))))


STEP = re.compile(r"#\(T0 \+ ([0-9.e+-]+)\) (\{[^}]*\}|\w+) = (\d+)'h([0-9A-F]+);")


def read_tb_rows(text):
    """Independent reading of the stimulus lines back out of a testbench."""
    return [(float(ns) / 1000, int(value, 16), int(width))
            for ns, _, width, value in STEP.findall(text)]


def test_full_period_schedule():
    sched = build_schedule(LFSR4, DEFAULT, 4, [4, 3, 2, 1])
    assert len(sched.rows) == 15
    assert [r.vector for r in sched.rows] == generate_sequence(LFSR4, 15)
    assert [r.time_us for r in sched.rows] == [100 + 100 * k for k in range(15)]


def test_single_bit_schedule_follows_lsb():
    sched = build_schedule(LFSR4, DEFAULT, 1, [1])
    assert [r.vector for r in sched.rows] == [s & 1 for s in generate_sequence(LFSR4, 15)]
    # an m-sequence bit is high in 2^(n-1) = 8 of its 15 positions
    assert sum(r.vector for r in sched.rows) == 8


def test_single_step_schedule():
    sched = build_schedule(LFSR4, StimulusTiming(100, 250, 1), 4)
    assert sched.rows == (ScheduleRow(250, 1, 1),)


def test_bit_select_errors():
    with pytest.raises(StimulusError):
        build_schedule(LFSR4, DEFAULT, 2, [5, 1])
    with pytest.raises(StimulusError):
        build_schedule(LFSR4, DEFAULT, 2, [1])
    with pytest.raises(StimulusError):
        default_bit_select(4, 5)


def test_default_bit_select_maps_msb_first():
    assert default_bit_select(4, 4) == [4, 3, 2, 1]
    assert default_bit_select(4, 1) == [4]


def test_timing_invariants():
    with pytest.raises(StimulusError):
        StimulusTiming(0, 0, 1)
    with pytest.raises(StimulusError):
        StimulusTiming(1, 0, 0)
    with pytest.raises(StimulusError):
        StimulusTiming(1, -1, 1)


def test_schedule_invariants():
    with pytest.raises(StimulusError):
        StimulusSchedule((ScheduleRow(1, 0), ScheduleRow(1, 1)), 1)
    with pytest.raises(StimulusError):
        StimulusSchedule((ScheduleRow(1, 4),), 2)


# testbench -----------------------------------------------------------------

def test_lut_testbench_applies_schedule():
    sched = build_schedule(LFSR4, DEFAULT, 4)
    tb = gen_verilog_testbench(lut_bundle(), sched, "trace.vcd")
    rows = read_tb_rows(tb)
    assert [(r.time_us, r.vector, 4) for r in sched.rows] == rows
    assert "dut dut (.in0(in0), .in1(in1), .in2(in2), .in3(in3));" in tb
    assert '$dumpfile("trace.vcd");' in tb
    assert "$dumpvars(0, dut_tb);" in tb
    assert "`ifdef VCDFILE" in tb
    assert "#(T0) trigger = 1'b1;" in tb
    # finish one interval after the last vector
    assert "initial #(T0 + 1600000) $finish;" in tb


def test_ring_testbench_asserts_enable():
    timing = StimulusTiming(interval=50, trigger_lead=10, steps=1)
    tb = gen_verilog_testbench(ring_bundle(), constant_schedule(timing), "osc.vcd")
    assert read_tb_rows(tb) == [(10.0, 1, 1)]
    assert "#(T0 + 10000) ena = 1'h1;" in tb
    assert "wire osc_out0;" in tb
    assert "initial #(T0 + 60000) $finish;" in tb


def test_testbench_width_mismatch():
    with pytest.raises(StimulusError, match="inputs"):
        gen_verilog_testbench(lut_bundle(), build_schedule(LFSR4, DEFAULT, 1), "x.vcd")


def test_testbench_zero_input_dut():
    bundle = DesignBundle("", "", {"spec": {"name": "empty"}, "inputs": [], "outputs": []})
    with pytest.raises(StimulusError, match="no inputs"):
        gen_verilog_testbench(bundle, build_schedule(LFSR4, DEFAULT, 1), "x.vcd")


# MCU CSV -------------------------------------------------------------------

def test_mcu_csv_for_period_schedule():
    sched = build_schedule(LFSR4, DEFAULT, 4)
    lines = gen_mcu_schedule(sched).splitlines()
    assert lines[0] == "time_us,vector_hex"
    assert len(lines) == 16
    expected = [f"{100 + 100 * k},{s:X}" for k, s in enumerate(generate_sequence(LFSR4, 15))]
    assert lines[1:] == expected
    assert lines[1] == "100,1"


def test_mcu_csv_pads_wide_vectors():
    cfg = LfsrConfig.maximal(8)
    lines = gen_mcu_schedule(build_schedule(cfg, StimulusTiming(10, 0, 3), 8)).splitlines()
    assert lines[1] == "0,01"
    assert all(len(l.split(",")[1]) == 2 for l in lines[1:])


def test_mcu_csv_roundtrip():
    sched = build_schedule(LFSR4, DEFAULT, 4)
    back = parse_mcu_schedule(gen_mcu_schedule(sched), 4)
    assert [(r.time_us, r.vector) for r in back.rows] == [(r.time_us, r.vector) for r in sched.rows]
    assert back.interval == 100


def test_mcu_csv_parse_errors():
    with pytest.raises(StimulusError):
        parse_mcu_schedule("t,v\n1,2\n")
    with pytest.raises(StimulusError):
        parse_mcu_schedule("time_us,vector_hex\n")
    with pytest.raises(StimulusError):
        parse_mcu_schedule("time_us,vector_hex\n1,zz\n")


@settings(max_examples=80, deadline=None)
@given(order=st.integers(2, 10), lead=st.integers(0, 1000), interval=st.integers(1, 500),
       steps=st.integers(1, 60), data=st.data())
def test_testbench_csv_schedule_agree(order, lead, interval, steps, data):
    width = data.draw(st.integers(1, min(order, 4)))
    cfg = LfsrConfig.maximal(order, data.draw(st.integers(1, 2 ** order - 1)))
    sched = build_schedule(cfg, StimulusTiming(interval, lead, steps), width)
    times = [r.time_us for r in sched.rows]
    assert all(b - a == interval for a, b in zip(times, times[1:]))
    tb_rows = [(t, v) for t, v, _ in read_tb_rows(gen_verilog_testbench(lut_bundle(width), sched, "v.vcd"))]
    csv_rows = [(r.time_us, r.vector) for r in parse_mcu_schedule(gen_mcu_schedule(sched), width).rows]
    assert tb_rows == csv_rows == [(r.time_us, r.vector) for r in sched.rows]


def test_fractional_times_survive_roundtrip():
    sched = build_schedule(LFSR4, StimulusTiming(12.5, 0.25, 5), 4)
    tb = gen_verilog_testbench(lut_bundle(), sched, "v.vcd")
    assert [(t, v) for t, v, _ in read_tb_rows(tb)] == [(r.time_us, r.vector) for r in sched.rows]


def test_artifacts_are_deterministic():
    sched = build_schedule(LFSR4, DEFAULT, 4)
    b = lut_bundle()
    assert gen_verilog_testbench(b, sched, "a.vcd") == gen_verilog_testbench(b, sched, "a.vcd")
    assert gen_mcu_schedule(sched) == gen_mcu_schedule(build_schedule(LFSR4, DEFAULT, 4))
    assert gen_sim_driver(b) == gen_sim_driver(b)


# simulator driver ----------------------------------------------------------

def test_sim_driver_lp_mirrors_iverilog_invocation():
    script = gen_sim_driver(lut_bundle(), "lp", "/opt/yosys/ice40/cells_sim.v")
    lines = [l.strip().rstrip("\\").strip() for l in script.splitlines()]
    start = lines.index("iverilog")
    assert lines[start:start + 9] == [
        "iverilog",
        "-gspecify",
        "-D 'VCDFILE=\"dut.vcd\"'",
        "-D 'NO_ICE40_DEFAULT_ASSIGNMENTS=1'",
        "-D 'ICE40_LP=1'",
        "-o dut_sim",
        "/opt/yosys/ice40/cells_sim.v",
        "dut.v dut_tb.v",
        "vvp dut_sim",
    ]
    assert script.startswith("#!/bin/sh")


def test_sim_driver_variants():
    assert "-D 'ICE40_HX=1'" in gen_sim_driver(lut_bundle(), "hx")
    assert "-D 'ICE40_U=1'" in gen_sim_driver(lut_bundle(), "up")
    assert "$(yosys-config --datdir/ice40/cells_sim.v)" in gen_sim_driver(lut_bundle())
    with pytest.raises(StimulusError):
        gen_sim_driver(lut_bundle(), "xp")


def test_sim_driver_empty_cells_sim_path():
    with pytest.raises(StimulusError):
        gen_sim_driver(lut_bundle(), "lp", "")
