"""Shunt-measurement analysis: currents, power, spikes, fits and amplifier checks.

Channel voltages come from an oscilloscope. The core-rail shunt is read
through a current-sense amplifier (``amplified``, I = U_out / (G * R_SH));
IO shunts go through unity subtraction circuits (``subtraction_unity``,
I = U_diff / R_SH).
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import MeasurementError

ROLES = ("core", "io", "trigger")
CONDITIONING = ("amplified", "subtraction_unity")
MAX_SAMPLE_JITTER = 0.01


@dataclass(frozen=True)
class AmplifierConfig:
    gain: float
    bandwidth_hz: float | None = None
    noise_density: float | None = None  # V/sqrt(Hz)
    cmrr_db: float | None = None
    psrr: float | None = None  # uV/V

    def __post_init__(self):
        if self.gain <= 0:
            raise MeasurementError("amplifier gain must be > 0")

    @classmethod
    def ina293b5(cls) -> AmplifierConfig:
        return cls(gain=500.0, bandwidth_hz=900e3, noise_density=50e-9, cmrr_db=140.0, psrr=0.1)


@dataclass(frozen=True)
class ShuntConfig:
    resistance_ohm: float
    channel_role: str = "core"
    conditioning: str = "amplified"
    gain: float = 500.0

    def __post_init__(self):
        if self.resistance_ohm <= 0:
            raise MeasurementError("shunt resistance must be > 0")
        if self.conditioning not in CONDITIONING:
            raise MeasurementError(f"unknown conditioning {self.conditioning!r}")
        if self.conditioning == "amplified" and self.gain <= 0:
            raise MeasurementError("amplifier gain must be > 0")

    @property
    def transimpedance(self) -> float:
        """Channel volts per shunt amp."""
        if self.conditioning == "amplified":
            return self.gain * self.resistance_ohm
        return self.resistance_ohm


def channel_to_current(voltage_v, cfg: ShuntConfig):
    return np.asarray(voltage_v, dtype=float) / cfg.transimpedance


def current_to_channel(current_a, cfg: ShuntConfig):
    return np.asarray(current_a, dtype=float) * cfg.transimpedance


@dataclass
class PowerTrace:
    sample_period_s: float
    channels: dict  # column name -> voltage array
    roles: dict  # column name -> role
    trigger: int | None = None
    shunts: dict = field(default_factory=dict)  # role -> ShuntConfig
    vcore_nominal_v: float | None = None
    start_time_s: float = 0.0

    def __post_init__(self):
        if self.sample_period_s <= 0:
            raise MeasurementError("sample period must be > 0")
        lengths = {len(v) for v in self.channels.values()}
        if len(lengths) > 1:
            raise MeasurementError("channels differ in length")

    def __len__(self):
        return len(next(iter(self.channels.values()))) if self.channels else 0

    def channel_name(self, role: str) -> str:
        for name, r in self.roles.items():
            if r == role:
                return name
        raise MeasurementError(f"trace has no {role} channel")

    def channel(self, role: str) -> np.ndarray:
        return self.channels[self.channel_name(role)]

    def current(self, role: str = "core") -> np.ndarray:
        if role not in self.shunts:
            raise MeasurementError(f"no shunt calibration for the {role} channel")
        return channel_to_current(self.channel(role), self.shunts[role])

    def time_from_trigger(self) -> np.ndarray:
        origin = self.trigger or 0
        return (np.arange(len(self)) - origin) * self.sample_period_s


def _find_rising_edge(values: np.ndarray) -> int:
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi <= lo:
        raise MeasurementError("no trigger edge found: trigger channel is flat")
    threshold = (lo + hi) / 2
    above = values >= threshold
    edges = np.flatnonzero(~above[:-1] & above[1:])
    if edges.size == 0:
        raise MeasurementError("no trigger edge found")
    return int(edges[0] + 1)


def load_scope_csv(text: str, channel_map=None, shunts=None, vcore_nominal_v=None,
                   require_trigger: bool = True) -> PowerTrace:
    """Read a ``time_s,<role>:<name>,...`` capture.

    ``channel_map`` maps column labels to roles for headers without a
    ``role:`` prefix. ``shunts`` maps roles to :class:`ShuntConfig`.
    """
    first, _, body = text.partition("\n")
    header = [h.strip() for h in first.strip().split(",")]
    if len(header) < 2 or header[0] != "time_s":
        raise MeasurementError("scope CSV header must start with 'time_s'")
    channel_map = dict(channel_map or {})
    names, roles = [], {}
    for label in header[1:]:
        if label in channel_map:
            role, name = channel_map[label], label
        elif ":" in label:
            role, name = label.split(":", 1)
        else:
            raise MeasurementError(f"column {label!r} has no role (use role:name)")
        if role not in ROLES:
            raise MeasurementError(f"column {label!r}: unknown role {role!r}")
        if name in roles:
            raise MeasurementError(f"duplicate channel name {name!r}")
        names.append(name)
        roles[name] = role

    if not body.strip():
        raise MeasurementError("scope CSV has no samples")
    try:
        data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
    except ValueError as exc:
        raise MeasurementError(f"ragged or non-numeric rows in scope CSV: {exc}") from None
    if data.shape[1] != len(header):
        raise MeasurementError(f"rows have {data.shape[1]} fields, header has {len(header)}")
    if data.shape[0] < 2:
        raise MeasurementError("need at least two samples to infer the sample period")

    t = data[:, 0]
    period = (t[-1] - t[0]) / (len(t) - 1)
    if period <= 0:
        raise MeasurementError("time column is not increasing")
    if np.max(np.abs(np.diff(t) - period)) > MAX_SAMPLE_JITTER * period:
        raise MeasurementError("non-uniform sampling (jitter above 1%)")

    channels = {name: data[:, i + 1].copy() for i, name in enumerate(names)}
    trigger = None
    if "trigger" in roles.values():
        trigger_name = next(n for n, r in roles.items() if r == "trigger")
        trigger = _find_rising_edge(channels[trigger_name])
    elif require_trigger:
        raise MeasurementError("trace has no trigger channel")
    return PowerTrace(float(period), channels, roles, trigger, dict(shunts or {}),
                      vcore_nominal_v, float(t[0]))


def write_scope_csv(trace: PowerTrace) -> str:
    cols = list(trace.channels)
    t = trace.start_time_s + np.arange(len(trace)) * trace.sample_period_s
    data = np.column_stack([t] + [trace.channels[c] for c in cols])
    buf = io.StringIO()
    buf.write(",".join(["time_s"] + [f"{trace.roles[c]}:{c}" for c in cols]) + "\n")
    np.savetxt(buf, data, delimiter=",", fmt="%.12g")
    return buf.getvalue()


def instantaneous_power(trace: PowerTrace, subtract_baseline: bool = False) -> np.ndarray:
    """P = V_core * I_core per sample, optionally minus the pre-trigger mean current."""
    if trace.vcore_nominal_v is None:
        raise MeasurementError("core voltage (vcore) must be configured")
    current = trace.current("core")
    if subtract_baseline:
        if not trace.trigger:
            raise MeasurementError("baseline subtraction needs samples before the trigger")
        current = current - current[: trace.trigger].mean()
    return trace.vcore_nominal_v * current


@dataclass(frozen=True)
class QuantizationReport:
    lsb_v: float
    min_current_a: float


def quantization_report(adc_bits: int, vref_v: float, shunt: ShuntConfig) -> QuantizationReport:
    if adc_bits < 1:
        raise MeasurementError("adc_bits must be >= 1")
    lsb = vref_v / 2 ** adc_bits
    return QuantizationReport(lsb, lsb / shunt.transimpedance)


@dataclass(frozen=True)
class ValidationRow:
    u_out_v: float
    u_diff_mv: float
    u_amp_calc_v: float
    e_rel_pct: float
    u_supply_v: float | None = None
    r_load_ohm: float | None = None
    r_shunt_ohm: float | None = None
    label: str | None = None


def validate_amplifier(rows, amp: AmplifierConfig) -> list:
    """Compare measured outputs against gain * measured shunt drop.

    ``rows`` holds ``(u_out_v, u_diff_mv)`` pairs or dicts with those keys
    (plus optional ``u_supply_v``, ``r_load_ohm``, ``r_shunt_ohm``, ``label``).
    The relative error is signed and referred to the measured output.
    """
    result = []
    for row in rows:
        extra = {}
        if isinstance(row, dict):
            extra = {k: row.get(k) for k in ("u_supply_v", "r_load_ohm", "r_shunt_ohm", "label")}
            u_out, u_diff_mv = float(row["u_out_v"]), float(row["u_diff_mv"])
        else:
            u_out, u_diff_mv = map(float, row)
        if u_out == 0:
            raise MeasurementError("u_out = 0: relative error undefined")
        calc = amp.gain * u_diff_mv * 1e-3
        result.append(ValidationRow(u_out, u_diff_mv, calc, (u_out - calc) / u_out * 100, **extra))
    return result


# spikes --------------------------------------------------------------------

@dataclass(frozen=True)
class SpikeEvent:
    time_s: float
    amplitude_v: float
    stimulus_index: int
    lfsr_state: int
    inputs_high: int
    inputs_toggled: int


def stimulus_predictors(schedule, initial_vector: int = 0) -> list:
    """(state, inputs_high, inputs_toggled) per schedule row; inputs idle at ``initial_vector``."""
    out = []
    prev = initial_vector
    for row in schedule.rows:
        state = row.state if row.state is not None else row.vector
        out.append((state, row.vector.bit_count(), (row.vector ^ prev).bit_count()))
        prev = row.vector
    return out


def detect_spikes(trace: PowerTrace, schedule, window_fraction: float = 0.25,
                  role: str = "core", initial_vector: int = 0) -> list:
    """One event per schedule step: peak in a window around the expected time.

    The amplitude is the window maximum minus the median of the window's first
    and last quarters, clamped at zero.
    """
    if trace.trigger is None:
        raise MeasurementError("trace has no located trigger")
    if not schedule.rows:
        raise MeasurementError("empty schedule")
    if not 0 < window_fraction <= 0.5:
        raise MeasurementError("window_fraction must be in (0, 0.5]")
    values = trace.channel(role)
    dt = trace.sample_period_s
    half = max(2, int(round(window_fraction * schedule.interval * 1e-6 / dt)))
    quarter = max(1, (2 * half + 1) // 4)
    events = []
    for k, (row, (state, high, toggled)) in enumerate(
            zip(schedule.rows, stimulus_predictors(schedule, initial_vector))):
        centre = trace.trigger + int(round(row.time_us * 1e-6 / dt))
        lo, hi = centre - half, centre + half + 1
        if lo < 0 or hi > len(values):
            raise MeasurementError(f"spike window of step {k} extends beyond the trace")
        window = values[lo:hi]
        baseline = float(np.median(np.concatenate([window[:quarter], window[-quarter:]])))
        peak = int(np.argmax(window))
        amplitude = max(0.0, float(window[peak]) - baseline)
        events.append(SpikeEvent((lo + peak - trace.trigger) * dt, amplitude, k,
                                  state, high, toggled))
    return events


@dataclass(frozen=True)
class SpikeCorrelation:
    r_high: float
    r_toggle: float
    slope_high: float
    slope_toggle: float
    n_events: int


def correlate_spikes(events) -> SpikeCorrelation:
    """Pearson r and least-squares slope of amplitude against both predictors."""
    if len(events) < 3:
        raise MeasurementError("need at least 3 events")
    amp = np.array([e.amplitude_v for e in events])
    high = np.array([e.inputs_high for e in events], dtype=float)
    toggled = np.array([e.inputs_toggled for e in events], dtype=float)
    for label, values in (("amplitude", amp), ("inputs_high", high), ("inputs_toggled", toggled)):
        if np.ptp(values) == 0 or np.std(values) <= 1e-12 * np.max(np.abs(values)):
            raise MeasurementError(f"degenerate variance in {label}")

    def fit(x):
        r = float(np.corrcoef(x, amp)[0, 1])
        slope = float(np.polyfit(x, amp, 1)[0])
        return r, slope

    r_high, slope_high = fit(high)
    r_toggle, slope_toggle = fit(toggled)
    return SpikeCorrelation(r_high, r_toggle, slope_high, slope_toggle, len(events))


def spikes_to_csv(events) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = list(SpikeEvent.__dataclass_fields__)
    writer.writerow(cols)
    for e in events:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in asdict(e).values()])
    return buf.getvalue()


# models --------------------------------------------------------------------

@dataclass(frozen=True)
class AdditiveFit:
    p0_w: float
    p_cell_w: float
    residual_rms: float

    def predict(self, cells):
        return self.p0_w + np.asarray(cells, dtype=float) * self.p_cell_w


def fit_additive_model(points) -> AdditiveFit:
    """Least-squares P(n) = p0 + n * p_cell over (cell count, mean power) points."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise MeasurementError("need at least two (cells, power) points")
    n, p = pts[:, 0], pts[:, 1]
    if np.unique(n).size < 2:
        raise MeasurementError("need at least two distinct cell counts")
    # centred regression keeps the normal equations well conditioned
    n_mean, p_mean = n.mean(), p.mean()
    dn = n - n_mean
    slope = float(np.dot(dn, p - p_mean) / np.dot(dn, dn))
    intercept = float(p_mean - slope * n_mean)
    residual = p - (intercept + slope * n)
    return AdditiveFit(intercept, slope, float(np.sqrt(np.mean(residual ** 2))))


def estimate_ring_frequency(inverters_per_chain: int, tau_gate_s: float, chains: int = 1) -> float:
    """Per-chain oscillation frequency 1 / (2 * (inverters + 1) * tau).

    The enable AND is one of the loop stages. Chains run independently, all at
    this frequency. Gate delays only, so the real frequency is at most this.
    """
    if inverters_per_chain < 1 or inverters_per_chain % 2 == 0:
        raise MeasurementError(f"a ring needs an odd inverter count, got {inverters_per_chain}")
    if tau_gate_s <= 0:
        raise MeasurementError("gate delay must be > 0")
    if chains < 1:
        raise MeasurementError("chains must be >= 1")
    return 1.0 / (2 * (inverters_per_chain + 1) * tau_gate_s)


# synthetic traces ----------------------------------------------------------

def amplitude_per_high(volts_per_input: float):
    return lambda event: volts_per_input * event.inputs_high


def amplitude_per_toggle(volts_per_toggle: float):
    return lambda event: volts_per_toggle * event.inputs_toggled


def synthesize_trace(schedule, spike_model, noise_sigma: float = 0.0,
                     sample_period: float = 1e-6, seed: int = 0, baseline_v: float = 0.0,
                     decay_s: float | None = None, pre_trigger_s: float | None = None,
                     trigger_high_v: float = 3.3, initial_vector: int = 0,
                     shunts=None, vcore_nominal_v=None) -> PowerTrace:
    """Flat baseline plus decaying pulses at each schedule time plus Gaussian noise.

    ``spike_model`` gets a :class:`SpikeEvent` carrying the step's predictors
    (amplitude and time zero) and returns the pulse height in volts.
    """
    interval_s = schedule.interval * 1e-6
    decay_s = 3 * sample_period if decay_s is None else decay_s
    pre_trigger_s = interval_s if pre_trigger_s is None else pre_trigger_s
    trigger = int(round(pre_trigger_s / sample_period))
    end_s = schedule.rows[-1].time_us * 1e-6 + interval_s
    n = trigger + int(round(end_s / sample_period)) + 1

    core = np.full(n, float(baseline_v))
    idx = np.arange(n)
    for k, (row, (state, high, toggled)) in enumerate(
            zip(schedule.rows, stimulus_predictors(schedule, initial_vector))):
        amplitude = float(spike_model(SpikeEvent(0.0, 0.0, k, state, high, toggled)))
        start = trigger + int(round(row.time_us * 1e-6 / sample_period))
        stop = min(n, start + int(round(interval_s / sample_period)))
        core[start:stop] += amplitude * np.exp(-(idx[start:stop] - start) * sample_period / decay_s)
    if noise_sigma > 0:
        core += np.random.default_rng(seed).normal(0.0, noise_sigma, n)

    trig = np.where(idx >= trigger, trigger_high_v, 0.0)
    return PowerTrace(sample_period, {"vcore": core, "trig": trig},
                      {"vcore": "core", "trig": "trigger"}, trigger,
                      dict(shunts or {}), vcore_nominal_v, -trigger * sample_period)
