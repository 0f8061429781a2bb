"""VCD parsing and switching-activity extraction.

Toggles are counted per bit between defined values only: any transition into
or out of ``x``/``z`` is ignored and the next defined value becomes the new
baseline. Counts from a zero-delay simulation are therefore a lower bound on
the switching of the real circuit.
"""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass, field

from .errors import VcdError

_UNITS = {"s": 0, "ms": -3, "us": -6, "ns": -9, "ps": -12, "fs": -15}
_SKIP_BLOCKS = {"$date", "$version", "$comment"}
_DUMP_KEYWORDS = {"$dumpvars", "$dumpall", "$dumpon", "$dumpoff", "$end"}
PROVENANCE = "zero-delay simulation: toggle counts are a lower bound of hardware switching"


@dataclass(frozen=True)
class VcdSignal:
    id_code: str
    name: str
    width: int


@dataclass
class VcdTrace:
    timescale: tuple  # (magnitude, unit)
    signals: list
    changes: list  # (timestamp ticks, id code, value string)
    start_time: int | None = None
    end_time: int | None = None

    @property
    def seconds_per_tick(self) -> float:
        magnitude, unit = self.timescale
        return magnitude * 10.0 ** _UNITS[unit]

    @property
    def duration_s(self) -> float:
        if self.start_time is None:
            return 0.0
        return (self.end_time - self.start_time) * self.seconds_per_tick

    def widths(self) -> dict:
        return {s.id_code: s.width for s in self.signals}


def _parse_timescale(tokens) -> tuple:
    text = "".join(tokens)
    digits = text.rstrip("munpfs")
    unit = text[len(digits):]
    if digits not in ("1", "10", "100") or unit not in _UNITS:
        raise VcdError(f"malformed $timescale: {' '.join(tokens)!r}")
    return int(digits), unit


def parse_vcd(text: str) -> VcdTrace:
    tokens = text.split()
    pos = 0
    n = len(tokens)

    def block():
        nonlocal pos
        body = []
        while pos < n and tokens[pos] != "$end":
            body.append(tokens[pos])
            pos += 1
        if pos == n:
            raise VcdError("malformed header: unterminated declaration")
        pos += 1
        return body

    timescale = (1, "ns")
    scopes, signals, widths = [], [], {}
    while True:
        if pos == n:
            raise VcdError("malformed header: missing $enddefinitions")
        tok = tokens[pos]
        pos += 1
        if tok in _SKIP_BLOCKS:
            block()
        elif tok == "$timescale":
            timescale = _parse_timescale(block())
        elif tok == "$scope":
            body = block()
            if len(body) != 2:
                raise VcdError(f"malformed $scope: {' '.join(body)!r}")
            scopes.append(body[1])
        elif tok == "$upscope":
            block()
            if not scopes:
                raise VcdError("malformed header: $upscope without $scope")
            scopes.pop()
        elif tok == "$var":
            body = block()
            if len(body) < 4:
                raise VcdError(f"malformed $var: {' '.join(body)!r}")
            try:
                width = int(body[1])
            except ValueError:
                raise VcdError(f"malformed $var width: {body[1]!r}") from None
            id_code, ref = body[2], body[3]
            name = ".".join(scopes + [ref])
            if id_code in widths and widths[id_code] != width:
                raise VcdError(f"id {id_code!r} declared with two widths")
            widths[id_code] = width
            signals.append(VcdSignal(id_code, name, width))
        elif tok == "$enddefinitions":
            block()
            break
        else:
            raise VcdError(f"malformed header: unexpected token {tok!r}")

    changes = []
    now = start = None
    while pos < n:
        tok = tokens[pos]
        pos += 1
        head = tok[0]
        if head == "#":
            try:
                t = int(tok[1:])
            except ValueError:
                raise VcdError(f"bad timestamp {tok!r}") from None
            if now is not None and t < now:
                raise VcdError(f"timestamp {t} goes backwards")
            now = t
            if start is None:
                start = t
            continue
        if tok in _DUMP_KEYWORDS:
            continue
        if head == "$":
            if tok in _SKIP_BLOCKS:
                block()
                continue
            raise VcdError(f"unsupported keyword {tok!r}")
        if head in "bBrR":
            if pos == n:
                raise VcdError(f"vector change {tok!r} without id code")
            value, id_code = tok[1:].lower(), tokens[pos]
            pos += 1
            if head in "rR":
                value = "r" + value
        else:
            value, id_code = tok[0].lower(), tok[1:]
            if value not in "01xz" or not id_code:
                raise VcdError(f"bad value change {tok!r}")
        if now is None:
            raise VcdError("value change before any timestamp")
        if id_code not in widths:
            raise VcdError(f"value change for unknown id code {id_code!r}")
        changes.append((now, id_code, value))

    return VcdTrace(timescale, signals, changes, start, now)


def _expand(value: str, width: int) -> str:
    if len(value) >= width:
        return value[-width:]
    fill = value[0] if value[0] in "xz" else "0"
    return fill * (width - len(value)) + value


def _masks(value: str, width: int):
    bits = _expand(value, width)
    val = defined = 0
    for ch in bits:
        val <<= 1
        defined <<= 1
        if ch == "1":
            val |= 1
            defined |= 1
        elif ch == "0":
            defined |= 1
    return val, defined


def toggle_counts_by_id(trace: VcdTrace) -> dict:
    widths = trace.widths()
    state = {}
    counts = defaultdict(int)
    for _, id_code, value in trace.changes:
        if value.startswith("r"):
            continue
        new = _masks(value, widths[id_code])
        old = state.get(id_code)
        if old is not None:
            counts[id_code] += ((old[0] ^ new[0]) & old[1] & new[1]).bit_count()
        # a bit that goes x/z loses its baseline, so the new value is the new state
        state[id_code] = new
    return {s.id_code: counts.get(s.id_code, 0) for s in trace.signals}


def toggle_counts(trace: VcdTrace) -> dict:
    by_id = toggle_counts_by_id(trace)
    return {s.name: by_id[s.id_code] for s in trace.signals}


@dataclass
class SignalActivity:
    name: str
    width: int
    toggle_count: int
    activation_rate_hz: float
    toggles_per_step: float | None = None


@dataclass
class ActivityReport:
    signals: list
    duration_s: float
    stimulus_interval_s: float | None = None
    provenance: str = PROVENANCE
    timescale: tuple = field(default=(1, "ns"))

    def by_name(self) -> dict:
        return {s.name: s for s in self.signals}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["signal", "toggles", "rate_hz", "toggles_per_step"])
        for s in self.signals:
            per_step = "" if s.toggles_per_step is None else repr(s.toggles_per_step)
            writer.writerow([s.name, s.toggle_count, repr(s.activation_rate_hz), per_step])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "provenance": self.provenance,
            "timescale": f"{self.timescale[0]}{self.timescale[1]}",
            "duration_s": self.duration_s,
            "stimulus_interval_s": self.stimulus_interval_s,
            "signals": [vars(s) for s in self.signals],
        }
        return json.dumps(doc, indent=2) + "\n"


def activation_rates(trace: VcdTrace, stimulus_interval: float | None = None,
                     duration: float | None = None) -> ActivityReport:
    """Toggle rates per second and, given ``stimulus_interval`` (seconds), per step."""
    duration = trace.duration_s if duration is None else duration
    if duration <= 0:
        raise VcdError("trace duration is zero; cannot compute rates")
    if stimulus_interval is not None and stimulus_interval <= 0:
        raise VcdError("stimulus interval must be > 0")
    by_id = toggle_counts_by_id(trace)
    steps = None if stimulus_interval is None else duration / stimulus_interval
    signals = []
    for s in trace.signals:
        count = by_id[s.id_code]
        signals.append(SignalActivity(
            s.name, s.width, count, count / duration,
            None if steps is None else count / steps))
    return ActivityReport(signals, duration, stimulus_interval, timescale=trace.timescale)
