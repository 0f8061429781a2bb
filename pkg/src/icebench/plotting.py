"""Report figures. Everything renders off-screen to files next to the CSV/JSON output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (7.0, 3.6),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
    "savefig.dpi": 150,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_trace_with_spikes(trace, events, path, role="core"):
    t_ms = trace.time_from_trigger() * 1e3
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(t_ms, trace.channel(role) * 1e3, lw=0.6, color="0.25", label=f"{role} channel")
        if events:
            ax.scatter([e.time_s * 1e3 for e in events],
                       [trace.channel(role)[trace.trigger + int(round(e.time_s / trace.sample_period_s))] * 1e3
                        for e in events],
                       s=14, color="tab:red", zorder=3, label="detected peak")
        if "trigger" in trace.roles.values():
            trig = trace.channel("trigger")
            scale = np.ptp(trace.channel(role)) / max(np.ptp(trig), 1e-30)
            ax.plot(t_ms, (trig - trig.min()) * scale * 1e3 + trace.channel(role).min() * 1e3,
                    lw=0.6, ls="--", color="tab:blue", label="trigger (scaled)")
        ax.set_xlabel("time after trigger [ms]")
        ax.set_ylabel("channel voltage [mV]")
        ax.legend(loc="lower center", bbox_to_anchor=(0.5, 1.0), ncol=3, frameon=False)
        return _save(fig, path)


def plot_spike_correlation(events, correlation, path):
    amp = np.array([e.amplitude_v for e in events]) * 1e3
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, sharey=True)
        for ax, attr, r, slope, label in (
                (axes[0], "inputs_high", correlation.r_high, correlation.slope_high, "inputs high"),
                (axes[1], "inputs_toggled", correlation.r_toggle, correlation.slope_toggle,
                 "inputs toggled")):
            x = np.array([getattr(e, attr) for e in events])
            ax.scatter(x, amp, s=14)
            xs = np.array([x.min(), x.max()])
            intercept = amp.mean() - slope * 1e3 * x.mean()
            ax.plot(xs, intercept + slope * 1e3 * xs, color="tab:red", lw=1)
            ax.set_xlabel(label)
            ax.set_title(f"r = {r:.3f}")
        axes[0].set_ylabel("spike amplitude [mV]")
        return _save(fig, path)


def plot_power(trace, power_w, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(trace.time_from_trigger() * 1e3, power_w * 1e3, lw=0.6)
        ax.set_xlabel("time after trigger [ms]")
        ax.set_ylabel("core power [mW]")
        return _save(fig, path)


def plot_additive_fit(points, fit, path):
    pts = np.asarray(points, dtype=float)
    xs = np.linspace(0, pts[:, 0].max() * 1.05, 50)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.scatter(pts[:, 0], pts[:, 1] * 1e3, label="measured", zorder=3)
        ax.plot(xs, fit.predict(xs) * 1e3, color="tab:red",
                label=f"p0 = {fit.p0_w * 1e3:.4g} mW, per cell = {fit.p_cell_w * 1e6:.4g} uW")
        ax.set_xlabel("cells")
        ax.set_ylabel("mean power [mW]")
        ax.legend()
        return _save(fig, path)


def plot_activity(report, path, top=20):
    signals = sorted(report.signals, key=lambda s: s.toggle_count, reverse=True)[:top]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7.0, max(2.0, 0.25 * len(signals) + 1)))
        ax.barh([s.name for s in signals][::-1], [s.activation_rate_hz for s in signals][::-1])
        ax.set_xlabel("activation rate [Hz]")
        ax.grid(axis="y", visible=False)
        return _save(fig, path)
