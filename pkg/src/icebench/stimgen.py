"""Stimulus artifacts: LFSR schedules, Verilog testbenches, MCU CSV and simulator scripts.

Schedule times are microseconds after the trigger rise. A vector packs the
DUT inputs with ``in0`` as the most significant bit, so with the default bit
selection (LFSR bits n..1 onto in0..in{n-1}) the vector equals the LFSR state.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from .errors import StimulusError
from .lfsr import LfsrConfig, bit, generate_sequence

PRE_TRIGGER_NS = 1000
SIM_VARIANTS = {"lp": "ICE40_LP", "hx": "ICE40_HX", "up": "ICE40_U"}
DEFAULT_CELLS_SIM = "$(yosys-config --datdir/ice40/cells_sim.v)"


@dataclass(frozen=True)
class StimulusTiming:
    interval: float = 100.0
    trigger_lead: float = 100.0
    steps: int = 15

    def __post_init__(self):
        if self.interval <= 0:
            raise StimulusError("interval must be > 0")
        if self.steps < 1:
            raise StimulusError("steps must be >= 1")
        if self.trigger_lead < 0:
            raise StimulusError("trigger_lead must be >= 0")


@dataclass(frozen=True)
class ScheduleRow:
    time_us: float
    vector: int
    state: int | None = None


@dataclass(frozen=True)
class StimulusSchedule:
    rows: tuple
    input_width: int
    interval_us: float | None = None

    def __post_init__(self):
        if self.input_width < 1:
            raise StimulusError("input_width must be >= 1")
        times = [r.time_us for r in self.rows]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise StimulusError("schedule times must be strictly increasing")
        for r in self.rows:
            if not 0 <= r.vector < (1 << self.input_width):
                raise StimulusError(f"vector {r.vector:#x} wider than {self.input_width} bits")

    def __len__(self):
        return len(self.rows)

    @property
    def interval(self) -> float:
        if self.interval_us is not None:
            return self.interval_us
        if len(self.rows) < 2:
            raise StimulusError("single-row schedule has no implied interval")
        return self.rows[1].time_us - self.rows[0].time_us


def default_bit_select(order: int, width: int) -> list:
    if not 1 <= width <= order:
        raise StimulusError(f"cannot select {width} bits from a {order}-bit LFSR")
    return list(range(order, order - width, -1))


def build_schedule(cfg: LfsrConfig, timing: StimulusTiming, width: int,
                   bit_select=None) -> StimulusSchedule:
    bit_select = list(bit_select) if bit_select is not None else default_bit_select(cfg.order, width)
    if len(bit_select) != width:
        raise StimulusError(f"bit_select has {len(bit_select)} entries, width is {width}")
    for b in bit_select:
        if not 1 <= b <= cfg.order:
            raise StimulusError(f"bit index {b} outside 1..{cfg.order}")
    rows = []
    for k, state in enumerate(generate_sequence(cfg, timing.steps)):
        vector = 0
        for b in bit_select:
            vector = (vector << 1) | bit(state, b)
        rows.append(ScheduleRow(timing.trigger_lead + k * timing.interval, vector, state))
    return StimulusSchedule(tuple(rows), width, timing.interval)


def constant_schedule(timing: StimulusTiming, width: int = 1, value: int = 1) -> StimulusSchedule:
    """Hold ``value`` for the whole run, e.g. the enable of a ring oscillator."""
    rows = tuple(ScheduleRow(timing.trigger_lead + k * timing.interval, value)
                 for k in range(timing.steps))
    return StimulusSchedule(rows, width, timing.interval)


def _fmt_num(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def _hex_digits(width: int) -> int:
    return max(1, (width + 3) // 4)


def gen_verilog_testbench(bundle, schedule: StimulusSchedule, vcd_path: str,
                          tb_name: str | None = None) -> str:
    inputs = list(bundle.manifest["inputs"])
    outputs = list(bundle.manifest["outputs"])
    if not inputs:
        raise StimulusError(f"{bundle.name} has no inputs to stimulate")
    if schedule.input_width != len(inputs):
        raise StimulusError(
            f"schedule is {schedule.input_width} bits wide, {bundle.name} has {len(inputs)} inputs")
    if not schedule.rows:
        raise StimulusError("empty schedule")
    tb = tb_name or f"{bundle.name}_tb"
    width = schedule.input_width
    digits = _hex_digits(width)
    bus = "{" + ", ".join(inputs) + "}" if width > 1 else inputs[0]
    end_ns = (schedule.rows[-1].time_us + schedule.interval) * 1000

    out = [
        "// Generated by icebench. Do not edit.",
        "`timescale 1ns/1ps",
        "",
        f"module {tb};",
        "",
        "reg trigger;",
    ]
    out += [f"reg {p};" for p in inputs]
    out += [f"wire {p};" for p in outputs]
    conns = ", ".join(f".{p}({p})" for p in inputs + outputs)
    out += [
        "",
        f"{bundle.name} dut ({conns});",
        "",
        "initial begin",
        "`ifdef VCDFILE",
        "    $dumpfile(`VCDFILE);",
        "`else",
        f'    $dumpfile("{vcd_path}");',
        "`endif",
        f"    $dumpvars(0, {tb});",
        "end",
        "",
        "// time 0 of the schedule is the trigger rise",
        f"localparam real T0 = {PRE_TRIGGER_NS};",
        "",
        "initial begin",
        "    trigger = 1'b0;",
        f"    {bus} = {width}'h{0:0{digits}X};",
        "    #(T0) trigger = 1'b1;",
        "end",
        "",
        "initial begin",
        "    fork",
    ]
    for row in schedule.rows:
        ns = _fmt_num(row.time_us * 1000)
        out.append(f"        #(T0 + {ns}) {bus} = {width}'h{row.vector:0{digits}X};")
    out += [
        "    join",
        "end",
        "",
        f"initial #(T0 + {_fmt_num(end_ns)}) $finish;",
        "",
        "endmodule",
        "",
    ]
    return "\n".join(out)


def gen_mcu_schedule(schedule: StimulusSchedule) -> str:
    digits = _hex_digits(schedule.input_width)
    lines = ["time_us,vector_hex"]
    lines += [f"{_fmt_num(r.time_us)},{r.vector:0{digits}X}" for r in schedule.rows]
    return "\n".join(lines) + "\n"


def parse_mcu_schedule(text: str, input_width: int | None = None) -> StimulusSchedule:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["time_us", "vector_hex"]:
        raise StimulusError("schedule CSV must start with 'time_us,vector_hex'")
    rows, digits = [], 0
    for lineno, rec in enumerate(reader, 2):
        if not rec:
            continue
        if len(rec) != 2:
            raise StimulusError(f"schedule line {lineno}: expected 2 fields")
        try:
            rows.append(ScheduleRow(float(rec[0]), int(rec[1], 16)))
        except ValueError:
            raise StimulusError(f"schedule line {lineno}: bad number") from None
        digits = max(digits, len(rec[1].strip()))
    if not rows:
        raise StimulusError("schedule CSV has no rows")
    width = input_width or 4 * digits
    interval = rows[1].time_us - rows[0].time_us if len(rows) > 1 else None
    return StimulusSchedule(tuple(rows), width, interval)


def gen_sim_driver(bundle, variant: str = "lp", cells_sim_path: str = DEFAULT_CELLS_SIM,
                   vcd_path: str | None = None) -> str:
    """Shell script compiling DUT + testbench with specify-block timing, then running it."""
    if variant not in SIM_VARIANTS:
        raise StimulusError(f"unknown iCE40 variant {variant!r} (choose {', '.join(SIM_VARIANTS)})")
    if not cells_sim_path:
        raise StimulusError("cells_sim_path must not be empty")
    name = bundle.name
    vcd = vcd_path or f"{name}.vcd"
    return "\n".join([
        "#!/bin/sh",
        "# Generated by icebench. Delay-annotated simulation of the iCE40 netlist.",
        "set -e",
        "iverilog \\",
        "\t-gspecify \\",
        f"\t-D 'VCDFILE=\"{vcd}\"' \\",
        "\t-D 'NO_ICE40_DEFAULT_ASSIGNMENTS=1' \\",
        f"\t-D '{SIM_VARIANTS[variant]}=1' \\",
        f"\t-o {name}_sim \\",
        f"\t{cells_sim_path} \\",
        f"\t{name}.v {name}_tb.v",
        f"vvp {name}_sim",
        "",
    ])
