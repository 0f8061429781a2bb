"""Verilog netlist generation from SB_LUT4 primitives.

Cells are instantiated directly as iCE40 ``SB_LUT4`` so synthesis cannot
re-map them, and every cell carries ``(* keep *)`` so outputless cells survive
optimization. Optional ``BEL`` attributes pin cells to logic-cell sites.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .benchdef import BelLocation, ValidatedSpec, expand_placements, serialize_benchdef
from .errors import NetlistError

LUT_CELL = "SB_LUT4"
CONST0 = "1'b0"
CONST1 = "1'b1"
CONSTANT_NETS = (CONST0, CONST1)


def _truth_table(func) -> int:
    init = 0
    for k in range(16):
        i0, i1, i2, i3 = (k >> 0) & 1, (k >> 1) & 1, (k >> 2) & 1, (k >> 3) & 1
        if func(i0, i1, i2, i3):
            init |= 1 << k
    return init


_FUNCTIONS = {
    "not_i0": lambda i0, i1, i2, i3: not i0,
    "buf_i0": lambda i0, i1, i2, i3: i0,
    "and2_i0_i1": lambda i0, i1, i2, i3: i0 and i1,
    "and3": lambda i0, i1, i2, i3: i0 and i1 and i2,
    "and4": lambda i0, i1, i2, i3: i0 and i1 and i2 and i3,
    "xor4": lambda i0, i1, i2, i3: i0 ^ i1 ^ i2 ^ i3,
    "constant0": lambda *_: False,
    "constant1": lambda *_: True,
}
LUT_FUNCTIONS = tuple(_FUNCTIONS)


def lut_init_for(function) -> int:
    """16-bit LUT_INIT for a named function or an explicit value.

    Bit k of the result is the output for the input code
    k = I3*8 + I2*4 + I1*2 + I0. Explicit values may be ints or strings
    like ``0x8000`` or ``16'h8000``.
    """
    if isinstance(function, int):
        value = function
    elif function in _FUNCTIONS:
        return _truth_table(_FUNCTIONS[function])
    else:
        text = str(function).strip().lower()
        try:
            if text.startswith("16'h"):
                value = int(text[4:], 16)
            elif text.startswith("16'b"):
                value = int(text[4:], 2)
            elif text.startswith("0x"):
                value = int(text, 16)
            else:
                raise ValueError
        except ValueError:
            raise NetlistError(f"unknown LUT function descriptor: {function!r}") from None
    if not 0 <= value <= 0xFFFF:
        raise NetlistError(f"LUT_INIT {value:#x} does not fit in 16 bits")
    return value


def format_bel_attribute(loc: BelLocation) -> str:
    return f'(* BEL="X{loc.x}/Y{loc.y}/lc{loc.lc}" *)'


@dataclass
class LutCell:
    instance_name: str
    init: int
    inputs: tuple  # nets on I0..I3
    output: str | None = None
    bel: BelLocation | None = None
    keep: bool = True

    def to_json(self):
        return {
            "name": self.instance_name,
            "init": f"16'h{self.init:04X}",
            "inputs": list(self.inputs),
            "output": self.output,
            "bel": None if self.bel is None else str(self.bel),
        }


@dataclass
class Design:
    name: str
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    cells: list = field(default_factory=list)
    assigns: dict = field(default_factory=dict)  # output port -> driving net


@dataclass
class DesignBundle:
    verilog: str
    pcf: str
    manifest: dict

    @property
    def name(self) -> str:
        return self.manifest["spec"]["name"]

    def manifest_json(self) -> str:
        return json.dumps(self.manifest, indent=2, sort_keys=False) + "\n"


def check_design(design: Design) -> None:
    names = set()
    driven = set(design.inputs) | set(CONSTANT_NETS)
    for cell in design.cells:
        if cell.instance_name in names:
            raise NetlistError(f"duplicate instance name: {cell.instance_name}")
        names.add(cell.instance_name)
        if not 0 <= cell.init <= 0xFFFF:
            raise NetlistError(f"{cell.instance_name}: LUT_INIT does not fit in 16 bits")
        if len(cell.inputs) != 4:
            raise NetlistError(f"{cell.instance_name}: LUT4 needs 4 input nets")
        if cell.output is not None:
            if cell.output in driven:
                raise NetlistError(f"net {cell.output} has multiple drivers")
            driven.add(cell.output)
    for cell in design.cells:
        for net in cell.inputs:
            if net not in driven:
                raise NetlistError(f"{cell.instance_name} reads undriven net {net}")
    for port, net in design.assigns.items():
        if port not in design.outputs:
            raise NetlistError(f"assign to unknown output port {port}")
        if net not in driven:
            raise NetlistError(f"output {port} reads undriven net {net}")


def render_verilog(design: Design) -> str:
    check_design(design)
    ports = [f"    input wire {p}" for p in design.inputs]
    ports += [f"    output wire {p}" for p in design.outputs]
    out = ["// Generated by icebench. Do not edit.", ""]
    if ports:
        out.append(f"module {design.name} (")
        out.append(",\n".join(ports))
        out.append(");")
    else:
        out.append(f"module {design.name} ();")

    wires = [c.output for c in design.cells if c.output is not None]
    if wires:
        out.append("")
        out.extend(f"wire {w};" for w in wires)
    for cell in design.cells:
        out.append("")
        if cell.keep:
            out.append("(* keep *)")
        if cell.bel is not None:
            out.append(format_bel_attribute(cell.bel))
        pins = [f".O({cell.output or ''})"]
        pins += [f".I{i}({net})" for i, net in enumerate(cell.inputs)]
        out.append(f"{LUT_CELL} #(.LUT_INIT(16'h{cell.init:04X})) {cell.instance_name} "
                   f"({', '.join(pins)});")
    if design.assigns:
        out.append("")
        out.extend(f"assign {port} = {net};" for port, net in design.assigns.items())
    out += ["", "endmodule", ""]
    return "\n".join(out)


def emit_pcf(io_map) -> str:
    """``set_io`` constraints; ``io_map`` is a port->pin mapping or list of pairs."""
    pairs = list(io_map.items()) if hasattr(io_map, "items") else list(io_map)
    pins = [pin for _, pin in pairs]
    seen = set()
    for pin in pins:
        if pin in seen:
            raise NetlistError(f"duplicate pin: {pin}")
        seen.add(pin)
    return "".join(f"set_io {port} {pin}\n" for port, pin in pairs)


def _placements(validated: ValidatedSpec, placements):
    if placements is None:
        if validated.spec.placement.mode == "unconstrained":
            return [None] * validated.total_cells
        placements = expand_placements(validated)
    placements = list(placements)
    if len(placements) != validated.total_cells:
        raise NetlistError(
            f"{len(placements)} placements given for {validated.total_cells} cells")
    return placements


def _io(design: Design, spec) -> dict:
    ports = design.inputs + design.outputs
    pins = list(spec.input_pins) + list(spec.output_pins)
    return {
        port: {"pin": pin, "direction": "input" if port in design.inputs else "output"}
        for port, pin in zip(ports, pins)
    }


def _bundle(design: Design, validated: ValidatedSpec, chains: list) -> DesignBundle:
    verilog = render_verilog(design)
    io = _io(design, validated.spec)
    pcf = emit_pcf([(port, entry["pin"]) for port, entry in io.items()])
    spec = validated.spec
    manifest = {
        "spec": {
            "name": spec.name,
            "kind": spec.kind,
            "device": spec.device.name,
            "cells": spec.cell_count,
            "chains": spec.chains,
            "lut_function": spec.resolved_lut_function if spec.kind == "lut_grid" else None,
            "placement": spec.placement.mode,
            "definition": serialize_benchdef(spec),
        },
        "cell_count": len(design.cells),
        "inputs": design.inputs,
        "outputs": design.outputs,
        "io": io,
        "cells": [c.to_json() for c in design.cells],
        "chains": chains,
    }
    return DesignBundle(verilog, pcf, manifest)


def gen_lut_grid(validated: ValidatedSpec, placements=None) -> DesignBundle:
    """Grid of LUTs whose inputs all hang off the same input ports.

    Unused LUT inputs are tied low. Cell outputs stay dangling unless an
    output pin is requested for them.
    """
    spec = validated.spec
    if spec.kind != "lut_grid":
        raise NetlistError(f"gen_lut_grid needs a lut_grid spec, got {spec.kind}")
    locs = _placements(validated, placements)
    init = lut_init_for(spec.resolved_lut_function)
    ports = [f"in{i}" for i in range(spec.input_arity)]
    inputs = tuple(ports + [CONST0] * (4 - len(ports)))
    design = Design(spec.name, inputs=ports,
                    outputs=[f"out{k}" for k in range(len(spec.output_pins))])
    for i, loc in enumerate(locs):
        name = f"lut_{i}"
        design.cells.append(LutCell(name, init, inputs, f"{name}_o", loc))
    for k, port in enumerate(design.outputs):
        design.assigns[port] = f"lut_{k}_o"
    return _bundle(design, validated, chains=[])


def gen_ring_oscillator(validated: ValidatedSpec, placements=None) -> DesignBundle:
    """``chains`` independent rings, each an enable AND followed by an odd inverter chain.

    The AND (I0 = ``ena``, I1 = ring feedback) gates the loop, so deasserting
    ``ena`` stops every ring.
    """
    spec = validated.spec
    if spec.kind != "ring_oscillator":
        raise NetlistError(f"gen_ring_oscillator needs a ring_oscillator spec, got {spec.kind}")
    inverters = validated.inverters_per_chain
    if inverters is None or inverters % 2 == 0:
        raise NetlistError("ring chains need an odd inverter count")
    locs = iter(_placements(validated, placements))
    and_init = lut_init_for("and2_i0_i1")
    not_init = lut_init_for("not_i0")
    design = Design(spec.name, inputs=["ena"],
                    outputs=[f"osc_out{k}" for k in range(len(spec.output_pins))])
    chains = []
    for k in range(spec.chains):
        last = f"chain{k}_n{inverters - 1}"
        gate = LutCell(f"chain{k}_and", and_init, ("ena", last, CONST0, CONST0),
                       f"chain{k}_en", next(locs))
        design.cells.append(gate)
        members = [gate.instance_name]
        prev = gate.output
        for j in range(inverters):
            inv = LutCell(f"chain{k}_inv{j}", not_init, (prev, CONST0, CONST0, CONST0),
                          f"chain{k}_n{j}", next(locs))
            design.cells.append(inv)
            members.append(inv.instance_name)
            prev = inv.output
        port = f"osc_out{k}" if k < len(design.outputs) else None
        if port:
            design.assigns[port] = last
        chains.append({
            "index": k,
            "enable_cell": gate.instance_name,
            "inverters": inverters,
            "stages": inverters + 1,
            "cells": members,
            "oscillation_node": last,
            "output_port": port,
            # f = 1 / (2 * stages * tau); this is the multiplier of 1/tau
            "frequency_per_inverse_tau": 1.0 / (2 * (inverters + 1)),
        })
    return _bundle(design, validated, chains)


def generate(validated: ValidatedSpec, placements=None) -> DesignBundle:
    if validated.kind == "lut_grid":
        return gen_lut_grid(validated, placements)
    return gen_ring_oscillator(validated, placements)
