import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icebench.activity import (
    PROVENANCE,
    activation_rates,
    parse_vcd,
    toggle_counts,
)
from icebench.errors import VcdError
from icebench.lfsr import LfsrConfig, generate_sequence

HEADER = """$timescale 1ns $end
$scope module tb $end
{vars}
$upscope $end
$enddefinitions $end
"""


def vcd(vars_, body, timescale="1ns"):
    head = HEADER.format(vars="\n".join(vars_)).replace("1ns", timescale, 1)
    return head + body


def render_changes(changes, widths):
    """changes: list of (time, id, value string)."""
    out, now = [], None
    for t, ident, value in changes:
        if t != now:
            out.append(f"#{t}")
            now = t
        if widths[ident] == 1 and len(value) == 1:
            out.append(f"{value}{ident}")
        else:
            out.append(f"b{value} {ident}")
    return "\n".join(out) + "\n"


def naive_counts(changes, widths):
    """Per-character reference: each bit keeps its last defined value; x/z drops it."""
    last = {ident: [None] * w for ident, w in widths.items()}
    counts = dict.fromkeys(widths, 0)
    for _, ident, value in changes:
        w = widths[ident]
        if len(value) < w:
            pad = value[0] if value[0] in "xz" else "0"
            value = pad * (w - len(value)) + value
        value = value[len(value) - w:]
        for i, ch in enumerate(value):
            prev = last[ident][i]
            if ch in "01":
                if prev is not None and prev != ch:
                    counts[ident] += 1
                last[ident][i] = ch
            else:
                last[ident][i] = None
    return counts


MINIMAL = """$timescale 1ns $end
$scope module tb $end
$var wire 1 ! a $end
$upscope $end
$enddefinitions $end
#0
0!
#10
1!
#20
0!
"""


def test_minimal_vcd():
    trace = parse_vcd(MINIMAL)
    assert len(trace.signals) == 1 and trace.signals[0].name == "tb.a"
    # the initial value plus two changes
    assert [c for c in trace.changes if c[0] > 0] == [(10, "!", "1"), (20, "!", "0")]
    assert toggle_counts(trace) == {"tb.a": 2}


def test_x_initialisation_then_toggle():
    text = vcd(["$var wire 1 ! a $end"], "#0\nx!\n#5\n0!\n#10\n1!\n")
    assert toggle_counts(parse_vcd(text)) == {"tb.a": 1}


def test_x_in_the_middle_resets_baseline():
    text = vcd(["$var wire 1 ! a $end"], "#0\n0!\n#1\nx!\n#2\n1!\n#3\n0!\n")
    # 0 -> x -> 1 is not a toggle, 1 -> 0 is
    assert toggle_counts(parse_vcd(text)) == {"tb.a": 1}


def test_undeclared_id_rejected():
    with pytest.raises(VcdError, match="unknown id"):
        parse_vcd(vcd(["$var wire 1 ! a $end"], "#0\n1?\n"))


def test_header_and_ordering_errors():
    with pytest.raises(VcdError, match="enddefinitions"):
        parse_vcd("$timescale 1ns $end\n$var wire 1 ! a $end\n")
    with pytest.raises(VcdError, match="before any timestamp"):
        parse_vcd(vcd(["$var wire 1 ! a $end"], "1!\n#0\n"))
    with pytest.raises(VcdError, match="backwards"):
        parse_vcd(vcd(["$var wire 1 ! a $end"], "#5\n1!\n#4\n0!\n"))
    with pytest.raises(VcdError, match="timescale"):
        parse_vcd(vcd(["$var wire 1 ! a $end"], "#0\n", timescale="3ns"))


def test_vector_all_bits_toggle():
    text = vcd(["$var wire 4 # bus [3:0] $end"], "#0\nb0000 #\n#1\nb1111 #\n")
    assert toggle_counts(parse_vcd(text)) == {"tb.bus": 4}


def test_vector_short_values_are_left_extended():
    text = vcd(["$var wire 4 # bus $end"], "#0\nb1111 #\n#1\nb1 #\n#2\nbx #\n#3\nb0 #\n")
    # 1111 -> 0001 (3), then all x, then 0000 without a baseline (0)
    assert toggle_counts(parse_vcd(text)) == {"tb.bus": 3}


def test_constant_signal():
    text = vcd(["$var wire 1 ! a $end", "$var reg 1 \" b $end"], "#0\n0!\n1\"\n#50\n1!\n#100\n")
    trace = parse_vcd(text)
    assert toggle_counts(trace) == {"tb.a": 1, "tb.b": 0}
    assert activation_rates(trace).by_name()["tb.b"].activation_rate_hz == 0


def test_header_blocks_and_dump_keywords_skipped():
    text = ("$date today $end\n$version iverilog $end\n$comment any words here $end\n"
            + vcd(["$var wire 1 ! a $end"], "#0\n$dumpvars\n0!\n$end\n#3\n1!\n"))
    assert toggle_counts(parse_vcd(text)) == {"tb.a": 1}


def test_real_values_ignored():
    text = vcd(["$var real 64 % v $end", "$var wire 1 ! a $end"], "#0\nr1.5 %\n0!\n#1\nr2.5 %\n1!\n")
    assert toggle_counts(parse_vcd(text)) == {"tb.v": 0, "tb.a": 1}


# rates ---------------------------------------------------------------------

def lfsr_bit_vcd(bit, timescale_mult=1, unit="ns"):
    states = generate_sequence(LfsrConfig(4, {4, 3}, 1), 16)  # 15 steps and the wrap
    step = 100_000 * timescale_mult  # 100 us
    lines = [f"#{k * step}\n{(s >> bit) & 1}!" for k, s in enumerate(states)]
    return vcd(["$var wire 1 ! in $end"], "\n".join(lines) + "\n", timescale=f"1{unit}"), states


@pytest.mark.parametrize("bit", range(4))
def test_rates_for_lfsr_input_bit(bit):
    text, states = lfsr_bit_vcd(bit)
    column = [(s >> bit) & 1 for s in states]
    flips = sum(a != b for a, b in zip(column, column[1:]))
    assert flips == 8
    report = activation_rates(parse_vcd(text), stimulus_interval=100e-6)
    sig = report.by_name()["tb.in"]
    assert report.duration_s == pytest.approx(1.5e-3, rel=1e-12)
    assert sig.toggle_count == 8
    assert sig.activation_rate_hz == pytest.approx(5333.333, abs=1e-3)
    assert sig.toggles_per_step == pytest.approx(8 / 15, rel=1e-12)
    assert report.provenance == PROVENANCE


def test_zero_duration_rejected():
    trace = parse_vcd(vcd(["$var wire 1 ! a $end"], "#7\n0!\n"))
    with pytest.raises(VcdError, match="zero"):
        activation_rates(trace)
    with pytest.raises(VcdError):
        activation_rates(parse_vcd(MINIMAL), stimulus_interval=0)


def test_report_outputs():
    report = activation_rates(parse_vcd(MINIMAL), stimulus_interval=10e-9)
    lines = report.to_csv().splitlines()
    assert lines[0] == "signal,toggles,rate_hz,toggles_per_step"
    name, toggles, rate, per_step = lines[1].split(",")
    assert (name, int(toggles)) == ("tb.a", 2)
    assert float(rate) == pytest.approx(2 / 20e-9)
    assert float(per_step) == pytest.approx(1.0)
    doc = json.loads(report.to_json())
    assert doc["provenance"] == PROVENANCE
    assert doc["signals"][0]["toggle_count"] == 2
    assert doc["timescale"] == "1ns"
    assert activation_rates(parse_vcd(MINIMAL)).to_csv().splitlines()[1].endswith(",")


# properties ----------------------------------------------------------------

def random_trace(rng, max_events=10_000):
    nsig = rng.randint(1, 6)
    widths = {chr(33 + i): rng.choice([1, 1, 2, 4, 8]) for i in range(nsig)}
    n = rng.randint(1, max_events)
    changes, t = [], 0
    for _ in range(n):
        t += rng.choice([0, 0, 1, 3, 10])
        ident = rng.choice(list(widths))
        w = widths[ident]
        length = w if rng.random() < 0.8 else rng.randint(1, w)
        alphabet = "01" if rng.random() < 0.9 else "01xz"
        changes.append((t, ident, "".join(rng.choice(alphabet) for _ in range(length))))
    return changes, widths


def render_trace(changes, widths, timescale="1ns"):
    vars_ = [f"$var wire {w} {i} s{ord(i)} $end" for i, w in widths.items()]
    return vcd(vars_, render_changes(changes, widths), timescale=timescale)


def test_random_traces_match_naive_reference():
    rng = random.Random(1234)
    for _ in range(100):
        changes, widths = random_trace(rng)
        got = toggle_counts(parse_vcd(render_trace(changes, widths)))
        want = naive_counts(changes, widths)
        assert got == {f"tb.s{ord(i)}": c for i, c in want.items()}


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_timescale_invariance(seed):
    changes, widths = random_trace(random.Random(seed), 500)
    changes.append((changes[-1][0] + 1, changes[-1][1], changes[-1][2]))  # non-zero span
    a = activation_rates(parse_vcd(render_trace(changes, widths, "1ns")))
    scaled = [(t * 1000, i, v) for t, i, v in changes]
    b = activation_rates(parse_vcd(render_trace(scaled, widths, "1ps")))
    for sa, sb in zip(a.signals, b.signals):
        assert sa.toggle_count == sb.toggle_count
        assert sb.activation_rate_hz == pytest.approx(sa.activation_rate_hz, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), split=st.integers(1, 500))
def test_appending_changes_never_decreases_counts(seed, split):
    changes, widths = random_trace(random.Random(seed), 500)
    split = min(split, len(changes))
    prefix = toggle_counts(parse_vcd(render_trace(changes[:split], widths)))
    full = toggle_counts(parse_vcd(render_trace(changes, widths)))
    assert all(full[k] >= prefix[k] for k in prefix)


@settings(max_examples=40, deadline=None)
@given(values=st.lists(st.text("01xz", min_size=8, max_size=8), min_size=1, max_size=60))
def test_vector_count_equals_sum_of_split_bits(values):
    vec = vcd(["$var wire 8 # bus $end"],
              "".join(f"#{t}\nb{v} #\n" for t, v in enumerate(values)))
    ids = [chr(40 + k) for k in range(8)]  # ids for bus[7] .. bus[0]
    scalars = vcd([f"$var wire 1 {i} b{7 - k} $end" for k, i in enumerate(ids)],
                  "".join(f"#{t}\n" + "".join(f"{ch}{i}\n" for ch, i in zip(v, ids))
                          for t, v in enumerate(values)))
    total = sum(toggle_counts(parse_vcd(scalars)).values())
    assert toggle_counts(parse_vcd(vec))["tb.bus"] == total
