"""Command-line entry point.

Examples::

    aeqreg species Sr87
    aeqreg detect --species Yb171 --B 2 --Omega 30 --N 100
    aeqreg gate --I 0.5 --ratio 40
    aeqreg sweep --config sweep.json --out results/

Flags override the matching keys of ``--config``. The output directory is,
in order of precedence, ``--out``, ``$AEQREG_OUTPUT_DIR``, the config's
``output.dir``, then ``./out``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from dataclasses import replace

from . import __version__
from .config import (ConfigError, RunSpec, detection_inputs, gate_inputs, load_document,
                     spec_from_document)
from .detection import (coherence_retention, calibrate_pulse_time, detection_error,
                        gj_sensitivity)
from .gate import GateEngine, blockade_scaling
from .report import (Report, detection_report, gate_report, optimize_report, render_report,
                     scaling_report, species_report, spectrum_report, sweep_report)
from .species import MHZ, species_lookup, transition_spectrum
from .sweep import SweepSpec, minimize_error, run_sweep

ENV_OUTPUT = "AEQREG_OUTPUT_DIR"

# CLI flag -> config key, per command
_DETECT_FLAGS = {"species": "species", "B": "B_T", "Omega": "Omega_MHz", "Delta": "Delta_MHz",
                 "Omega_c": "Omega_c_MHz", "N": "N_target", "tau": "tau_us",
                 "mc_samples": "mc_samples", "gJ": "gJ", "gI": "gI"}
_GATE_FLAGS = {"I": "I", "ratio": "ratio", "J": "J", "U_gg": "U_gg", "U_ss": "U_ss", "V": "V",
               "V_ex": "V_ex", "multiples": "multiples", "schedule": "schedule",
               "ratios": "ratios", "B": "B_T"}
_SPECTRUM_FLAGS = {"species": "species", "I": "I", "g_g": "g_g", "g_s": "g_s",
                   "delta_g": "delta_g", "B": "B_T"}


def _quantity(text: str):
    """Plain number, or a string such as '6 GHz' left for the config layer to convert."""
    try:
        return float(text)
    except ValueError:
        return text


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or YAML run configuration")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", nargs="+", choices=["json", "csv"], dest="formats")
    common.add_argument("--seed", type=int)
    common.add_argument("--no-figures", action="store_true", help="skip PNG figures")

    parser = argparse.ArgumentParser(prog="aeqreg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"aeqreg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("species", parents=[common], help="print built-in species constants")
    p.add_argument("name", nargs="?")

    p = sub.add_parser("spectrum", parents=[common], help="enumerate g-s clock lines")
    p.add_argument("--species")
    p.add_argument("--I", type=float)
    p.add_argument("--g-g", dest="g_g", type=float)
    p.add_argument("--g-s", dest="g_s", type=float)
    p.add_argument("--delta-g", dest="delta_g", type=float)
    p.add_argument("--B", type=_quantity, help="field (T)")

    for name, help_ in (("detect", "detection error for one parameter point"),
                        ("calibrate", "pulse length for a target photon number")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--species")
        p.add_argument("--B", type=_quantity, help="field (T)")
        p.add_argument("--Omega", type=_quantity, help="probe Rabi frequency / 2pi (MHz)")
        p.add_argument("--Delta", type=_quantity, help="detuning / 2pi (MHz)")
        p.add_argument("--Omega-c", dest="Omega_c", type=_quantity,
                       help="control Rabi frequency / 2pi (MHz)")
        p.add_argument("--N", type=float, help="target photon number")
        p.add_argument("--tau", type=_quantity, help="fixed pulse length (us), skips calibration")
        p.add_argument("--mc-samples", dest="mc_samples", type=int)
        p.add_argument("--gJ", type=float)
        p.add_argument("--gI", type=float)
        p.add_argument("--sensitivity", action="store_true", help="report dp/dgJ at +-10%%")

    p = sub.add_parser("gate", parents=[common], help="run the interregister phase gate")
    p.add_argument("--I", type=float)
    p.add_argument("--ratio", type=float, help="U_gg / J")
    p.add_argument("--J", type=float)
    p.add_argument("--U-gg", dest="U_gg", type=float)
    p.add_argument("--U-ss", dest="U_ss", type=float)
    p.add_argument("--V", type=float)
    p.add_argument("--V-ex", dest="V_ex", type=float)
    p.add_argument("--multiples", type=float, nargs=3, metavar=("U_SS", "V", "V_EX"))
    p.add_argument("--schedule", nargs="+")
    p.add_argument("--ratios", type=float, nargs="+", help="also run the blockade scaling")
    p.add_argument("--B", type=_quantity)

    sub.add_parser("sweep", parents=[common], help="grid sweep (needs --config)")
    p = sub.add_parser("optimize", parents=[common], help="coordinate-descent minimisation")
    p.add_argument("--budget", type=int)
    return parser


def spec_from_args(args) -> RunSpec:
    doc = load_document(args.config) if args.config else {"command": args.command}
    if doc.get("command") != args.command:
        raise ConfigError(f"config is for command {doc.get('command')!r}, not {args.command!r}")
    block = dict(doc.get(args.command, {}))
    flags = {"detect": _DETECT_FLAGS, "calibrate": _DETECT_FLAGS, "gate": _GATE_FLAGS,
             "spectrum": _SPECTRUM_FLAGS}.get(args.command, {})
    for flag, key in flags.items():
        val = getattr(args, flag, None)
        if val is not None:
            block[key] = list(val) if isinstance(val, (list, tuple)) else val
    if args.command == "species" and args.name:
        block["name"] = args.name
    if args.command in ("detect", "calibrate") and args.sensitivity:
        block["sensitivity"] = True
    if args.command == "optimize" and args.budget is not None:
        block["budget"] = args.budget
    if block or args.command not in ("sweep", "optimize"):
        doc[args.command] = block
    out = dict(doc.get("output", {}))
    if args.formats:
        out["formats"] = args.formats
    if args.no_figures:
        out["figures"] = False
    out_dir = args.out or os.environ.get(ENV_OUTPUT)
    if out_dir:
        out["dir"] = out_dir
    if out:
        doc["output"] = out
    if args.seed is not None:
        doc["seed"] = args.seed
    return spec_from_document(doc)


def execute(spec: RunSpec) -> list[Report]:
    """Run the command described by ``spec`` and return its reports."""
    c = spec.config
    meta = {"config_hash": spec.config_hash(), "seed": spec.seed, "command": spec.command}
    ov = spec.overrides
    if spec.command == "species":
        names = [c["name"]] if c.get("name") else sorted({"Yb171", "Sr87", "Ca43", *ov})
        return [species_report(species_lookup(n, ov), meta) for n in names]

    if spec.command == "spectrum":
        if "species" in c:
            sp = species_lookup(c["species"], ov)
            I, g_g, g_s = sp.I, sp.g_g, sp.g_s
        else:
            I, g_g, g_s = c.get("I", 0.5), c.get("g_g", 0.0), c.get("g_s", 0.0)
        g_s = c.get("g_s", g_s)
        g_g = c.get("g_g", g_g)
        if "delta_g" in c:
            g_g = g_s + c["delta_g"]
        B = float(c.get("B_T", 0.0))
        return [spectrum_report(transition_spectrum(I, g_g, g_s, B), I, g_g, g_s, B, meta)]

    if spec.command in ("detect", "calibrate"):
        space, species, cfg, n_target = detection_inputs(c, ov)
        if spec.command == "calibrate":
            if n_target is None:
                raise ConfigError("calibrate needs N_target, not tau_us")
            tau, N = calibrate_pulse_time(_bright_space(space), species, replace(cfg, Omega_c=0.0), n_target)
            row = {"species": species.name, "N_target": n_target, "tau_us": tau * 1e6, "N": N}
            return [Report(f"calibrate_{species.name}", row, [row], meta)]
        if cfg.Omega_c > 0:
            return [_selective_detection(space, species, cfg, n_target, meta, c.get("m"))]
        rep = detection_error(space, species, cfg, n_target,
                              mc_samples=int(c.get("mc_samples", 0)), seed=spec.seed)
        sens = gj_sensitivity(space, species, cfg, n_target) if c.get("sensitivity") else None
        return [detection_report(species, cfg, rep, sens, meta)]

    if spec.command == "gate":
        params, schedule = gate_inputs(c)
        params.check_blockade()
        eng = GateEngine(params)
        reports = [gate_report(eng.report(schedule, reference_m=c.get("reference_m")),
                               params, schedule, meta)]
        if c.get("ratios"):
            mult = c.get("multiples") or (params.U_ss / params.U_gg, params.V / params.U_gg,
                                          params.V_ex / params.U_gg)
            rows, slope = blockade_scaling(params.I, c["ratios"], tuple(mult), schedule)
            reports.append(scaling_report(rows, slope, params.I, meta))
        return reports

    if spec.command == "sweep":
        sw = SweepSpec.from_config(c, spec.seed)
        table = run_sweep(sw, workers=int(c.get("workers", 1)), overrides=ov)
        return [sweep_report(table, meta)]

    if spec.command == "optimize":
        bounds = {k: (float(v[0]), float(v[1])) for k, v in c["bounds"].items()}
        res, best = minimize_error(c["task"], bounds, int(c.get("budget", 40)),
                                   c.get("fixed", {}), float(c.get("N_target", 100.0)),
                                   c.get("objective"), ov)
        return [optimize_report(res, best, c["task"], meta)]
    raise ConfigError(f"unknown command {spec.command!r}")


def _bright_space(space):
    return replace(space, with_r=False, with_s=False)


def _selective_detection(space, species, cfg, n_target, meta, m=None) -> Report:
    """Calibrate tau on a lone g atom, then score the g-s superposition with and without control."""
    if cfg.tau is None:
        tau, _ = calibrate_pulse_time(_bright_space(space), species,
                                      replace(cfg, Omega_c=0.0), n_target)
        cfg = replace(cfg, tau=tau)
    full = replace(space, with_r=True, with_s=True)
    dark = coherence_retention(full, species, cfg, m)
    lit = coherence_retention(replace(full, with_r=False), species, replace(cfg, Omega_c=0.0), m)
    row = {"species": species.name, "B_T": cfg.B, "Omega_MHz": cfg.Omega / MHZ,
           "Omega_c_MHz": cfg.Omega_c / MHZ, "tau_us": cfg.tau * 1e6,
           "N_control": dark.N, "retention_control": dark.retention,
           "N_no_control": lit.N, "retention_no_control": lit.retention}
    return Report(f"selective_{species.name}", row, [row], meta)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return "" if v is None else str(v)


def _summary(reports: list[Report]) -> str:
    """Short table per report for the terminal; the files carry full precision."""
    lines = []
    for rep in reports:
        if not rep.rows or len(rep.rows) > 8:
            lines.append(f"{rep.name}: {len(rep.rows)} rows")
            continue
        cols = list(dict.fromkeys(k for row in rep.rows for k in row))
        lines.append(",".join(cols))
        lines += [",".join(_fmt(row.get(k)) for k in cols) for row in rep.rows]
    return "\n".join(lines)


def _write_error(text: str, args) -> None:
    out = args.out or os.environ.get(ENV_OUTPUT)
    if not out:
        return
    try:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "error.json"), "w") as fh:
            fh.write(text + "\n")
    except OSError:
        pass  # stderr already carries the report


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = spec_from_args(args)
        reports = execute(spec)
        written = []
        for rep in reports:
            written += render_report(rep, spec.formats, spec.output_dir, spec.figures)
    except Exception as exc:  # noqa: BLE001 - converted to the error report below
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        if os.environ.get("AEQREG_DEBUG"):
            err["traceback"] = traceback.format_exc()
        text = json.dumps(err, sort_keys=True)
        print(text, file=sys.stderr)
        _write_error(text, args)
        return 2 if isinstance(exc, ConfigError) else 1
    print(_summary(reports))
    for path in written:
        print(f"wrote {path}")
    return 0 if all(r.ok for r in reports) else 3


if __name__ == "__main__":
    sys.exit(main())

