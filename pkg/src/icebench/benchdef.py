"""Benchmark definition files, device geometry and cell placement.

A definition file is INI-like::

    [benchmark]
    name = lut1k
    kind = lut_grid
    device = ice40up5k
    cells = 1000

    [placement]
    mode = region_fill
    region = 1,1,5,25

    [pins]
    inputs = 4,2,47,45

Placement enumeration is deterministic: tiles row-major with x fastest and the
logic-cell index innermost (``column_sweep`` swaps x and y).
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterator, Mapping

from .errors import BenchdefError, PlacementError, SpecValidationError

KINDS = ("lut_grid", "ring_oscillator")
PLACEMENT_MODES = ("unconstrained", "fixed_list", "region_fill", "row_sweep", "column_sweep")

_SCHEMA = {
    "benchmark": {"name", "kind", "device", "cells", "chains", "lut_function"},
    "placement": {"mode", "region", "fixed"},
    "pins": {"inputs", "outputs"},
}
_REQUIRED = (("benchmark", "kind"), ("benchmark", "name"), ("benchmark", "device"),
             ("benchmark", "cells"), ("pins", "inputs"))

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_BEL = re.compile(r"^X(\d+)/Y(\d+)/lc(\d+)$")


@dataclass(frozen=True)
class DeviceGeometry:
    name: str
    grid_width: int
    grid_height: int
    cells_per_tile: int
    excluded_tiles: frozenset = frozenset()

    def __post_init__(self):
        if self.grid_width <= 0 or self.grid_height <= 0:
            raise SpecValidationError(f"{self.name}: grid dimensions must be positive")
        if self.cells_per_tile < 1:
            raise SpecValidationError(f"{self.name}: cells_per_tile must be >= 1")
        for x, y in self.excluded_tiles:
            if not (0 <= x < self.grid_width and 0 <= y < self.grid_height):
                raise SpecValidationError(f"{self.name}: excluded tile ({x}, {y}) outside grid")

    @property
    def usable_cells(self) -> int:
        tiles = self.grid_width * self.grid_height - len(self.excluded_tiles)
        return tiles * self.cells_per_tile

    def is_logic_tile(self, x: int, y: int) -> bool:
        return (0 <= x < self.grid_width and 0 <= y < self.grid_height
                and (x, y) not in self.excluded_tiles)

    def contains(self, loc: BelLocation) -> bool:
        return self.is_logic_tile(loc.x, loc.y) and 0 <= loc.lc < self.cells_per_tile

    def region_capacity(self, region) -> int:
        x0, y0, x1, y1 = region
        tiles = sum(1 for y in range(y0, y1 + 1) for x in range(x0, x1 + 1)
                    if self.is_logic_tile(x, y))
        return tiles * self.cells_per_tile

    def iter_cells(self, region=None, x_fastest=True) -> Iterator[BelLocation]:
        x0, y0, x1, y1 = region or (0, 0, self.grid_width - 1, self.grid_height - 1)
        if x_fastest:
            tiles = ((x, y) for y in range(y0, y1 + 1) for x in range(x0, x1 + 1))
        else:
            tiles = ((x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1))
        for x, y in tiles:
            if self.is_logic_tile(x, y):
                for lc in range(self.cells_per_tile):
                    yield BelLocation(x, y, lc)


@dataclass(frozen=True, order=True)
class BelLocation:
    x: int
    y: int
    lc: int

    def __str__(self):
        return f"X{self.x}/Y{self.y}/lc{self.lc}"

    @classmethod
    def parse(cls, text: str) -> BelLocation:
        m = _BEL.match(text.strip())
        if not m:
            raise ValueError(f"not a BEL location: {text!r} (expected X<x>/Y<y>/lc<n>)")
        return cls(*map(int, m.groups()))


@dataclass(frozen=True)
class PlacementStrategy:
    mode: str = "unconstrained"
    region: tuple | None = None
    fixed: tuple | None = None


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    kind: str
    device: DeviceGeometry
    cell_count: int
    input_pins: tuple
    output_pins: tuple = ()
    chains: int = 1
    placement: PlacementStrategy = field(default_factory=PlacementStrategy)
    lut_function: str | None = None

    @property
    def input_arity(self) -> int:
        return len(self.input_pins)

    @property
    def resolved_lut_function(self) -> str:
        """Grid truth table; defaults to the AND of every connected input."""
        if self.lut_function:
            return self.lut_function
        return {1: "buf_i0", 2: "and2_i0_i1", 3: "and3", 4: "and4"}[self.input_arity]


@dataclass(frozen=True)
class ValidatedSpec:
    spec: BenchmarkSpec
    geometry: DeviceGeometry
    inverters_per_chain: int | None
    total_cells: int

    @property
    def name(self):
        return self.spec.name

    @property
    def kind(self):
        return self.spec.kind


# geometry ------------------------------------------------------------------

def parse_geometry(text: str) -> DeviceGeometry:
    """Parse a geometry override file: ``name width height cells_per_tile`` then ``exclude x,y`` lines."""
    header = None
    excluded = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "exclude":
                if len(parts) != 2:
                    raise ValueError
                x, y = (int(v) for v in parts[1].split(","))
                excluded.add((x, y))
            elif header is None and len(parts) == 4:
                header = (parts[0], int(parts[1]), int(parts[2]), int(parts[3]))
            else:
                raise ValueError
        except ValueError:
            raise BenchdefError(f"bad geometry line {raw.strip()!r}", lineno, 1) from None
    if header is None:
        raise BenchdefError("geometry file has no 'name width height cells_per_tile' line")
    name, w, h, cpt = header
    return DeviceGeometry(name, w, h, cpt, frozenset(excluded))


@lru_cache(maxsize=None)
def builtin_devices() -> Mapping[str, DeviceGeometry]:
    devices = {}
    for entry in resources.files("icebench").joinpath("devices").iterdir():
        if entry.name.endswith(".geom"):
            geom = parse_geometry(entry.read_text())
            devices[geom.name] = geom
    return devices


def get_device(name: str, devices: Mapping[str, DeviceGeometry] | None = None) -> DeviceGeometry:
    table = dict(builtin_devices())
    if devices:
        table.update(devices)
    try:
        return table[name]
    except KeyError:
        raise BenchdefError(f"unknown device name: {name}") from None


# definition files ----------------------------------------------------------

def _split_list(value: str) -> tuple:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def _int(value: str, key: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise BenchdefError(f"{key}: expected an integer, got {value!r}") from None


def parse_benchdef(text: str, devices: Mapping[str, DeviceGeometry] | None = None) -> BenchmarkSpec:
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       inline_comment_prefixes=("#", ";"),
                                       empty_lines_in_values=False, default_section="\0")
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise BenchdefError("key outside of any [section]", exc.lineno, 1) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise BenchdefError(f"cannot parse {line.strip()!r}", lineno, 1) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise BenchdefError(exc.message.split(":", 1)[-1].strip(), exc.lineno, 1) from None

    for section in parser.sections():
        if section not in _SCHEMA:
            raise BenchdefError(f"unknown section: [{section}]")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise BenchdefError(f"unknown key: {section}.{key}")
    for section, key in _REQUIRED:
        if not parser.has_option(section, key):
            raise BenchdefError(f"missing required key: {key}")

    bench = parser["benchmark"]
    kind = bench["kind"].strip()
    if kind not in KINDS:
        raise BenchdefError(f"kind must be one of {', '.join(KINDS)}, got {kind!r}")
    name = bench["name"].strip()
    if not _IDENT.match(name):
        raise BenchdefError(f"name must be a Verilog identifier, got {name!r}")

    placement = PlacementStrategy()
    if parser.has_section("placement"):
        sec = parser["placement"]
        mode = sec.get("mode", "unconstrained").strip()
        if mode not in PLACEMENT_MODES:
            raise BenchdefError(f"unknown placement mode: {mode}")
        region = None
        if "region" in sec:
            coords = _split_list(sec["region"])
            if len(coords) != 4:
                raise BenchdefError("region expects x0,y0,x1,y1")
            region = tuple(_int(c, "region") for c in coords)
        fixed = None
        if "fixed" in sec:
            try:
                fixed = tuple(BelLocation.parse(v) for v in _split_list(sec["fixed"]))
            except ValueError as exc:
                raise BenchdefError(str(exc)) from None
        placement = PlacementStrategy(mode, region, fixed)

    pins = parser["pins"]
    return BenchmarkSpec(
        name=name,
        kind=kind,
        device=get_device(bench["device"].strip(), devices),
        cell_count=_int(bench["cells"], "cells"),
        chains=_int(bench.get("chains", "1"), "chains"),
        placement=placement,
        input_pins=_split_list(pins["inputs"]),
        output_pins=_split_list(pins.get("outputs", "")),
        lut_function=bench.get("lut_function", "").strip() or None,
    )


def serialize_benchdef(spec: BenchmarkSpec) -> str:
    lines = ["[benchmark]",
             f"name = {spec.name}",
             f"kind = {spec.kind}",
             f"device = {spec.device.name}",
             f"cells = {spec.cell_count}",
             f"chains = {spec.chains}"]
    if spec.lut_function:
        lines.append(f"lut_function = {spec.lut_function}")
    lines += ["", "[placement]", f"mode = {spec.placement.mode}"]
    if spec.placement.region is not None:
        lines.append("region = " + ",".join(map(str, spec.placement.region)))
    if spec.placement.fixed is not None:
        lines.append("fixed = " + ", ".join(map(str, spec.placement.fixed)))
    lines += ["", "[pins]", "inputs = " + ",".join(spec.input_pins)]
    if spec.output_pins:
        lines.append("outputs = " + ",".join(spec.output_pins))
    return "\n".join(lines) + "\n"


# validation ----------------------------------------------------------------

def largest_odd_at_most(value: int) -> int:
    return value if value % 2 else value - 1


def validate_spec(spec: BenchmarkSpec, geometry: DeviceGeometry | None = None) -> ValidatedSpec:
    geometry = geometry or spec.device
    if spec.cell_count < 1:
        raise SpecValidationError("cells must be >= 1")
    pins = spec.input_pins + spec.output_pins
    if len(set(pins)) != len(pins):
        raise SpecValidationError(f"pin names must be unique: {', '.join(pins)}")

    inverters = None
    if spec.kind == "lut_grid":
        if not 1 <= len(spec.input_pins) <= 4:
            raise SpecValidationError(
                f"lut_grid needs 1 to 4 input pins, got {len(spec.input_pins)}")
        if len(spec.output_pins) > spec.cell_count:
            raise SpecValidationError("more output pins than cells")
        total = spec.cell_count
    else:
        if len(spec.input_pins) != 1:
            raise SpecValidationError(
                f"ring_oscillator needs exactly 1 enable pin, got {len(spec.input_pins)}")
        if spec.chains < 1:
            raise SpecValidationError("chains must be >= 1")
        if spec.cell_count < spec.chains:
            raise SpecValidationError(
                f"cannot build {spec.chains} odd-length chains from {spec.cell_count} cells")
        if len(spec.output_pins) > spec.chains:
            raise SpecValidationError("more output pins than chains")
        inverters = largest_odd_at_most(spec.cell_count // spec.chains)
        total = spec.chains * (inverters + 1)

    if total > geometry.usable_cells:
        raise SpecValidationError(
            f"capacity exceeded: {total} cells requested, {geometry.name} has {geometry.usable_cells}")

    placement = spec.placement
    if placement.mode == "fixed_list":
        if placement.fixed is None or len(placement.fixed) != total:
            got = 0 if placement.fixed is None else len(placement.fixed)
            raise SpecValidationError(f"fixed_list needs {total} locations, got {got}")
    elif placement.mode == "region_fill":
        if placement.region is None:
            raise SpecValidationError("region_fill needs a region")
    if placement.region is not None:
        x0, y0, x1, y1 = placement.region
        if x0 > x1 or y0 > y1:
            raise SpecValidationError(f"empty region {placement.region}")
        if placement.mode != "unconstrained" and geometry.region_capacity(placement.region) < total:
            raise SpecValidationError(
                f"region {placement.region} holds {geometry.region_capacity(placement.region)} "
                f"cells, {total} requested")

    return ValidatedSpec(spec, geometry, inverters, total)


def expand_placements(validated: ValidatedSpec, geometry: DeviceGeometry | None = None) -> list:
    geometry = geometry or validated.geometry
    placement = validated.spec.placement
    count = validated.total_cells

    if placement.mode == "unconstrained":
        raise PlacementError("unconstrained placement has no BEL locations to expand")

    if placement.mode == "fixed_list":
        fixed = list(placement.fixed or ())
        if len(fixed) != count:
            raise PlacementError(f"fixed list has {len(fixed)} locations, {count} needed")
        if len(set(fixed)) != len(fixed):
            raise PlacementError("fixed list contains duplicate locations")
        for loc in fixed:
            if not geometry.contains(loc):
                raise PlacementError(f"{loc} is not a logic cell of {geometry.name}")
        return fixed

    x_fastest = placement.mode != "column_sweep"
    locations = []
    for loc in geometry.iter_cells(placement.region, x_fastest=x_fastest):
        if len(locations) == count:
            break
        locations.append(loc)
    if len(locations) < count:
        raise PlacementError(f"region holds {len(locations)} cells, {count} needed")
    return locations
