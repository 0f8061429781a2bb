"""``icebench`` command line: generate -> stimulate -> (simulate externally) -> analyze.

Exit status: 0 success, 2 bad input, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__, activity, benchdef, lfsr, netgen, powerlab, stimgen
from .errors import IceBenchError, InvariantError

log = logging.getLogger("icebench")

EXIT_OK, EXIT_USAGE, EXIT_INTERNAL = 0, 2, 3


class Run:
    """Collects inputs/outputs of one invocation and writes its run manifest."""

    def __init__(self, args, subcommand):
        self.out_dir = Path(args.out_dir)
        self.subcommand = subcommand
        self.params = {k: (str(v) if isinstance(v, Path) else v)
                       for k, v in sorted(vars(args).items()) if k not in ("func", "quiet")}
        self.inputs = {}
        self.outputs = []

    def read(self, path) -> str:
        data = Path(path).read_bytes()
        self.inputs[str(path)] = hashlib.sha256(data).hexdigest()
        return data.decode("utf-8")

    def write(self, name, text):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        path.write_text(text)
        self.outputs.append(str(path))
        log.info("wrote %s", path)
        return path

    def figure(self, name, render):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        render(path)
        self.outputs.append(str(path))
        log.info("wrote %s", path)

    def finish(self):
        for out in self.outputs:
            if not Path(out).exists():
                raise InvariantError(f"listed output {out} was not written")
        manifest = {
            "tool_version": __version__,
            "subcommand": self.subcommand,
            "parameters": self.params,
            "inputs": self.inputs,
            "outputs": self.outputs,
        }
        name = "run_" + self.subcommand.replace(" ", "_") + ".json"
        path = self.out_dir / name
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest, indent=2) + "\n")


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _lfsr_config(args) -> lfsr.LfsrConfig:
    taps = frozenset(_int_list(args.taps)) if args.taps else lfsr.max_length_taps(args.order)
    return lfsr.LfsrConfig(args.order, taps, args.lfsr_seed)


# subcommands ---------------------------------------------------------------

def cmd_gen(args):
    run = Run(args, "gen")
    devices = None
    if args.geometry:
        geom = benchdef.parse_geometry(run.read(args.geometry))
        devices = {geom.name: geom}
    spec = benchdef.parse_benchdef(run.read(args.benchdef), devices)
    validated = benchdef.validate_spec(spec)
    bundle = netgen.generate(validated)
    if bundle.manifest["cell_count"] != validated.total_cells:
        raise InvariantError("generated cell count differs from the validated spec")
    run.write(f"{spec.name}.v", bundle.verilog)
    run.write(f"{spec.name}.pcf", bundle.pcf)
    run.write(f"{spec.name}.manifest.json", bundle.manifest_json())
    run.finish()
    return bundle


def cmd_tb(args):
    run = Run(args, "tb")
    try:
        manifest = json.loads(run.read(args.manifest))
    except json.JSONDecodeError as exc:
        raise IceBenchError(f"{args.manifest}: not a JSON manifest ({exc})") from None
    try:
        bundle = netgen.DesignBundle("", "", manifest)
        name, inputs, kind = bundle.name, manifest["inputs"], manifest["spec"]["kind"]
    except (KeyError, TypeError):
        raise IceBenchError(f"{args.manifest}: not an icebench design manifest") from None
    cfg = _lfsr_config(args)
    steps = args.steps or lfsr.period(cfg)
    timing = stimgen.StimulusTiming(args.interval, args.lead, steps)

    if kind == "ring_oscillator":
        if args.steps is None:
            timing = stimgen.StimulusTiming(args.interval, args.lead, 1)
        schedule = stimgen.constant_schedule(timing, width=len(inputs), value=1)
    else:
        width = args.bits if args.bits is not None else len(inputs)
        bit_select = _int_list(args.bit_select) if args.bit_select else None
        schedule = stimgen.build_schedule(cfg, timing, width, bit_select)

    vcd = args.vcd or f"{name}.vcd"
    run.write(f"{name}_tb.v", stimgen.gen_verilog_testbench(bundle, schedule, vcd))
    run.write(f"{name}_schedule.csv", stimgen.gen_mcu_schedule(schedule))
    sim = run.write(f"{name}_sim.sh", stimgen.gen_sim_driver(bundle, args.variant, args.cells_sim, vcd))
    sim.chmod(0o755)
    run.finish()


def cmd_lfsr(args):
    if args.table_csv:
        sys.stdout.write(lfsr.tap_table_csv())
        return
    cfg = _lfsr_config(args)
    count = args.count if args.count is not None else lfsr.period(cfg)
    digits = max(1, (cfg.order + 3) // 4)
    for state in lfsr.generate_sequence(cfg, count):
        print(f"{state:0{digits}X}")


def cmd_activity(args):
    run = Run(args, "activity")
    trace = activity.parse_vcd(run.read(args.vcd))
    interval = args.interval_us * 1e-6 if args.interval_us else None
    if args.schedule and interval is None:
        interval = stimgen.parse_mcu_schedule(run.read(args.schedule)).interval * 1e-6
    report = activity.activation_rates(trace, interval)
    stem = Path(args.vcd).stem
    run.write(f"{stem}_activity.csv", report.to_csv())
    run.write(f"{stem}_activity.json", report.to_json())
    if args.plots:
        from . import plotting
        run.figure(f"{stem}_activity.png", lambda p: plotting.plot_activity(report, p))
    run.finish()
    return report


def cmd_power_analyze(args):
    run = Run(args, "power analyze")
    shunts = {"core": powerlab.ShuntConfig(args.shunt_core, "core", "amplified", args.gain)}
    if args.shunt_io:
        shunts["io"] = powerlab.ShuntConfig(args.shunt_io, "io", "subtraction_unity")
    trace = powerlab.load_scope_csv(run.read(args.trace), shunts=shunts,
                                    vcore_nominal_v=args.vcore)
    schedule = stimgen.parse_mcu_schedule(run.read(args.schedule))
    power = powerlab.instantaneous_power(trace, subtract_baseline=args.subtract_baseline)
    current = trace.current("core")
    events = powerlab.detect_spikes(trace, schedule, args.window)
    try:
        corr = asdict(powerlab.correlate_spikes(events))
    except IceBenchError as exc:
        corr = {"error": str(exc)}
    after = slice(trace.trigger, None)
    report = {
        "sample_period_s": trace.sample_period_s,
        "samples": len(trace),
        "trigger_index": trace.trigger,
        "vcore_v": args.vcore,
        "mean_core_current_a": float(current.mean()),
        "mean_core_current_after_trigger_a": float(current[after].mean()),
        "mean_power_after_trigger_w": float(power[after].mean()),
        "baseline_subtracted": args.subtract_baseline,
        "events": len(events),
        "correlation": corr,
    }
    if "io" in shunts:
        report["mean_io_current_a"] = float(trace.current("io").mean())
    stem = Path(args.trace).stem
    run.write(f"{stem}_spikes.csv", powerlab.spikes_to_csv(events))
    run.write(f"{stem}_power.json", json.dumps(report, indent=2) + "\n")
    if args.plots:
        from . import plotting
        run.figure(f"{stem}_trace.png", lambda p: plotting.plot_trace_with_spikes(trace, events, p))
        run.figure(f"{stem}_power.png", lambda p: plotting.plot_power(trace, power, p))
        if "error" not in corr:
            c = powerlab.SpikeCorrelation(**corr)
            run.figure(f"{stem}_spikes.png", lambda p: plotting.plot_spike_correlation(events, c, p))
    run.finish()
    return report


def _read_csv_dicts(text, required):
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in required if c not in (reader.fieldnames or [])]
    if missing:
        raise IceBenchError(f"CSV is missing column(s): {', '.join(missing)}")
    return list(reader)


def cmd_power_validate_amp(args):
    run = Run(args, "power validate-amp")
    rows = _read_csv_dicts(run.read(args.rows), ["u_out_v", "u_diff_mv"])
    try:
        rows = [{k: (v if k == "label" else float(v)) for k, v in r.items() if v not in (None, "")}
                for r in rows]
    except ValueError as exc:
        raise IceBenchError(f"bad number in rows CSV: {exc}") from None
    result = powerlab.validate_amplifier(rows, powerlab.AmplifierConfig(args.gain))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", "u_out_v", "u_diff_mv", "u_amp_calc_v", "e_rel_pct"])
    for i, r in enumerate(result):
        writer.writerow([r.label or f"amp{i + 1}", r.u_out_v, r.u_diff_mv,
                         f"{r.u_amp_calc_v:.6g}", f"{r.e_rel_pct:.4f}"])
        log.info("%s: U_out=%.3f V  U_amp_calc=%.3f V  e_rel=%.2f %%",
                 r.label or f"amp{i + 1}", r.u_out_v, r.u_amp_calc_v, r.e_rel_pct)
    run.write("validate_amp.csv", buf.getvalue())
    run.finish()
    return result


def cmd_power_quantization(args):
    run = Run(args, "power quantization")
    if args.gain:
        shunt = powerlab.ShuntConfig(args.shunt, "core", "amplified", args.gain)
    else:
        shunt = powerlab.ShuntConfig(args.shunt, "core", "subtraction_unity")
    q = powerlab.quantization_report(args.bits, args.vref, shunt)
    log.info("LSB %.4g mV, minimum current %.4g uA", q.lsb_v * 1e3, q.min_current_a * 1e6)
    run.write("quantization.json", json.dumps(asdict(q), indent=2) + "\n")
    run.finish()
    return q


def cmd_power_fit(args):
    run = Run(args, "power fit")
    rows = _read_csv_dicts(run.read(args.points), ["cells", "power_w"])
    try:
        points = [(float(r["cells"]), float(r["power_w"])) for r in rows]
    except ValueError as exc:
        raise IceBenchError(f"bad number in points CSV: {exc}") from None
    fit = powerlab.fit_additive_model(points)
    log.info("p0 = %.6g W, p_cell = %.6g W, residual rms = %.3g W",
             fit.p0_w, fit.p_cell_w, fit.residual_rms)
    run.write("fit.json", json.dumps(asdict(fit), indent=2) + "\n")
    if args.plots:
        from . import plotting
        run.figure("fit.png", lambda p: plotting.plot_additive_fit(points, fit, p))
    run.finish()
    return fit


def cmd_power_ringfreq(args):
    run = Run(args, "power ringfreq")
    f = powerlab.estimate_ring_frequency(args.inverters, args.tau_ns * 1e-9, args.chains)
    log.info("%d chain(s) at %.6g MHz each (upper bound)", args.chains, f / 1e6)
    doc = {"inverters": args.inverters, "tau_s": args.tau_ns * 1e-9, "chains": args.chains,
           "frequency_hz": f, "upper_bound": True}
    run.write("ringfreq.json", json.dumps(doc, indent=2) + "\n")
    run.finish()
    return f


def cmd_power_synth(args):
    run = Run(args, "power synth")
    schedule = stimgen.parse_mcu_schedule(run.read(args.schedule))
    model = (powerlab.amplitude_per_high if args.model == "high"
             else powerlab.amplitude_per_toggle)(args.k)
    trace = powerlab.synthesize_trace(schedule, model, args.noise, args.sample_period_us * 1e-6,
                                      seed=args.seed, baseline_v=args.baseline)
    run.write(args.output, powerlab.write_scope_csv(trace))
    run.finish()


# parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", type=Path, default=argparse.SUPPRESS,
                        help="output directory (default: .)")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="RNG seed for synthetic data")

    parser = argparse.ArgumentParser(prog="icebench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"icebench {__version__}")
    parser.add_argument("--out-dir", type=Path, default=Path("."))
    parser.add_argument("--quiet", action="store_true")
    parser.add_argument("--seed", type=int, default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a benchmark netlist")
    p.add_argument("benchdef", type=Path)
    p.add_argument("--geometry", type=Path, help="device geometry override file")
    p.set_defaults(func=cmd_gen)

    def lfsr_flags(p):
        p.add_argument("--order", type=int, default=4)
        p.add_argument("--taps", help="comma-separated taps (default: maximal-length table)")
        p.add_argument("--lfsr-seed", type=int, default=1)

    p = sub.add_parser("tb", parents=[common], help="generate testbench, schedule and sim script")
    p.add_argument("manifest", type=Path)
    lfsr_flags(p)
    p.add_argument("--interval", type=float, default=100.0, help="stimulus interval [us]")
    p.add_argument("--lead", type=float, default=100.0, help="trigger to first stimulus [us]")
    p.add_argument("--steps", type=int, help="vectors to apply (default: one LFSR period)")
    p.add_argument("--bits", type=int, help="stimulus width (default: DUT input count)")
    p.add_argument("--bit-select", help="LFSR bit indices driving in0.. (1 = LSB)")
    p.add_argument("--variant", choices=sorted(stimgen.SIM_VARIANTS), default="lp")
    p.add_argument("--cells-sim", default=stimgen.DEFAULT_CELLS_SIM)
    p.add_argument("--vcd", help="VCD path written by the testbench")
    p.set_defaults(func=cmd_tb)

    p = sub.add_parser("lfsr", parents=[common], help="print an LFSR sequence as hex")
    lfsr_flags(p)
    p.add_argument("--count", type=int, help="states to print (default: one period)")
    p.add_argument("--table-csv", action="store_true", help="print the tap table as CSV")
    p.set_defaults(func=cmd_lfsr)

    p = sub.add_parser("activity", parents=[common], help="toggle counts from a VCD trace")
    p.add_argument("vcd", type=Path)
    p.add_argument("--schedule", type=Path, help="schedule CSV (for the stimulus interval)")
    p.add_argument("--interval-us", type=float)
    p.add_argument("--no-plots", dest="plots", action="store_false")
    p.set_defaults(func=cmd_activity)

    power = sub.add_parser("power", help="measurement analysis").add_subparsers(
        dest="power_command", required=True)

    p = power.add_parser("analyze", parents=[common], help="spike and power analysis of a capture")
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--schedule", type=Path, required=True)
    p.add_argument("--shunt-core", type=float, required=True, help="core shunt [ohm]")
    p.add_argument("--gain", type=float, default=500.0)
    p.add_argument("--vcore", type=float, required=True, help="nominal core voltage [V]")
    p.add_argument("--shunt-io", type=float, help="IO shunt [ohm] (unity subtraction)")
    p.add_argument("--window", type=float, default=0.25, help="search window, fraction of interval")
    p.add_argument("--subtract-baseline", action="store_true")
    p.add_argument("--no-plots", dest="plots", action="store_false")
    p.set_defaults(func=cmd_power_analyze)

    p = power.add_parser("validate-amp", parents=[common], help="amplifier DC validation")
    p.add_argument("--rows", type=Path, required=True, help="CSV with u_out_v,u_diff_mv")
    p.add_argument("--gain", type=float, default=500.0)
    p.set_defaults(func=cmd_power_validate_amp)

    p = power.add_parser("quantization", parents=[common], help="ADC step and minimum current")
    p.add_argument("--bits", type=int, required=True)
    p.add_argument("--vref", type=float, required=True)
    p.add_argument("--shunt", type=float, required=True)
    p.add_argument("--gain", type=float, help="amplifier gain (omit for a direct reading)")
    p.set_defaults(func=cmd_power_quantization)

    p = power.add_parser("fit", parents=[common], help="additive per-cell power fit")
    p.add_argument("--points", type=Path, required=True, help="CSV with cells,power_w")
    p.add_argument("--no-plots", dest="plots", action="store_false")
    p.set_defaults(func=cmd_power_fit)

    p = power.add_parser("ringfreq", parents=[common], help="ring oscillator frequency bound")
    p.add_argument("--inverters", type=int, required=True)
    p.add_argument("--tau-ns", type=float, required=True)
    p.add_argument("--chains", type=int, default=1)
    p.set_defaults(func=cmd_power_ringfreq)

    p = power.add_parser("synth", parents=[common], help="synthesize a capture from a schedule")
    p.add_argument("--schedule", type=Path, required=True)
    p.add_argument("--model", choices=("high", "toggle"), default="high")
    p.add_argument("--k", type=float, default=1e-3, help="volts per input high/toggled")
    p.add_argument("--noise", type=float, default=1e-5, help="noise sigma [V]")
    p.add_argument("--baseline", type=float, default=0.0)
    p.add_argument("--sample-period-us", type=float, default=1.0)
    p.add_argument("--output", default="synthetic_trace.csv")
    p.set_defaults(func=cmd_power_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    try:
        args.func(args)
    except InvariantError as exc:
        print(f"icebench: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (IceBenchError, OSError, UnicodeDecodeError) as exc:
        print(f"icebench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
