"""Structured reports and their JSON / CSV / figure renderings."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .species import MHZ, SpeciesParams


@dataclass
class Report:
    """One rendered unit: a nested document, flat rows, and optional figure builders."""

    name: str
    document: dict
    rows: list[dict]
    meta: dict = field(default_factory=dict)
    figures: dict[str, Callable] = field(default_factory=dict)
    ok: bool = True


def sig9(x):
    """Round floats (recursively) to 9 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return float(f"{x:.9g}") if math.isfinite(x) else str(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, np.ndarray):
        return [sig9(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {str(k): sig9(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [sig9(v) for v in x]
    return x


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    if v is None:
        return ""
    return str(v)


def to_json(report: Report) -> str:
    doc = {"meta": {**report.meta, "version": __version__}, "report": report.document}
    return json.dumps(sig9(doc), sort_keys=True, indent=2) + "\n"


def to_csv(report: Report) -> str:
    meta = {"config_hash": report.meta.get("config_hash", ""), "version": __version__}
    rows = [{**r, **meta} for r in report.rows]
    columns = []
    for r in rows:
        for k in r:
            if k not in columns:
                columns.append(k)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(r.get(k)) for k in columns})
    return buf.getvalue()


def render_report(report: Report, formats=("json", "csv"), outdir=".",
                  figures: bool = True) -> list[Path]:
    """Write the report in each format (plus figures) into ``outdir``; returns the paths."""
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {outdir}: {exc}") from exc
    paths = []
    for fmt in formats:
        if fmt == "json":
            text = to_json(report)
        elif fmt == "csv":
            text = to_csv(report)
        else:
            raise ValueError(f"unsupported format {fmt!r}")
        path = outdir / f"{report.name}.{fmt}"
        path.write_text(text)
        paths.append(path)
    if figures:
        from .plotting import save

        for stem, build in report.figures.items():
            path = outdir / f"{report.name}_{stem}.png"
            save(build(), path)
            paths.append(path)
    return paths


# ------------------------------------------------------------------ builders


def species_report(sp: SpeciesParams, meta=None) -> Report:
    row = sp.to_config()
    return Report(f"species_{sp.name}", row, [row], meta or {})


def spectrum_report(spectrum, I, g_g, g_s, B, meta=None) -> Report:
    from .plotting import spectrum_stems

    rows = [{"m_g": ln.m_g, "m_s": ln.m_s, "polarization": ln.polarization,
             "offset_MHz": ln.offset / MHZ} for ln in spectrum.lines]
    doc = {"I": I, "g_g": g_g, "g_s": g_s, "B_T": B, "count": len(rows),
           "min_spacing_MHz": spectrum.min_spacing / MHZ,
           "min_pi_spacing_MHz": spectrum.min_pi_spacing / MHZ, "lines": rows}
    figs = {"lines": lambda: spectrum_stems([r["offset_MHz"] for r in rows],
                                            [r["polarization"] for r in rows],
                                            f"I={I:g}, B={B:g} T")}
    return Report("spectrum", doc, rows, meta or {}, figs)


def detection_row(species, cfg, rep) -> dict:
    row = {"species": species.name, "B_T": cfg.B, "Omega_MHz": cfg.Omega / MHZ,
           "Delta_MHz": cfg.Delta / MHZ, "tau_us": rep.tau * 1e6, "N": rep.N, "p": rep.p}
    for k, phi in enumerate(rep.phi):
        row[f"phi_m{species.I - k:+g}"] = phi
    return row


def detection_report(species, cfg, rep, sensitivity=None, meta=None) -> Report:
    from .plotting import phase_bars

    row = detection_row(species, cfg, rep)
    doc = {
        "species": species.to_config(),
        "config": {"B_T": cfg.B, "Omega_MHz": cfg.Omega / MHZ, "Delta_MHz": cfg.Delta / MHZ,
                   "Omega_c_MHz": cfg.Omega_c / MHZ, "decay_cutoff": cfg.decay_cutoff,
                   "pulse_shape": cfg.pulse_shape},
        "tau_us": rep.tau * 1e6, "N": rep.N, "Fbar": rep.Fbar, "p": rep.p,
        "phi": {f"{species.I - k:+g}": v for k, v in enumerate(rep.phi)},
    }
    if rep.Fbar_mc is not None:
        doc["Fbar_mc"] = rep.Fbar_mc
        doc["mc_stderr"] = rep.mc_stderr
        row["Fbar_mc"] = rep.Fbar_mc
    if sensitivity is not None:
        doc["gJ_sensitivity"] = {"gJ": sensitivity.gJ, "p_minus10": sensitivity.p_low,
                                 "p_plus10": sensitivity.p_high, "dp_dgJ": sensitivity.dp_dgJ}
        row["dp_dgJ"] = sensitivity.dp_dgJ
    ms = [species.I - k for k in range(species.dim)]
    figs = {"phases": lambda: phase_bars(ms, rep.phi, f"{species.name}, p={rep.p:.3g}")}
    return Report(f"detect_{species.name}", doc, [row], meta or {}, figs)


def gate_report(rep, params, schedule, meta=None) -> Report:
    from .plotting import gate_phase_map

    rows = [{"alpha_L": r[0], "m_L": r[1], "alpha_R": r[2], "m_R": r[3], "phase": r[4],
             "amplitude": r[5]} for r in rep.phase_rows()]
    doc = {
        "params": {k: getattr(params, k) for k in
                   ("I", "J", "U_gg", "U_ss", "V", "V_ex", "B", "g_g", "g_s", "J_s")},
        "schedule": list(schedule.tokens),
        "infidelity": rep.infidelity, "leakage": rep.leakage,
        "reference": list(rep.reference),
        "phases": rows,
    }
    return Report("gate", doc, rows, meta or {}, {"phases": lambda: gate_phase_map(rep)})


def scaling_report(rows, slope, I, meta=None) -> Report:
    from .plotting import loglog_fit

    flat = [{"J_over_U": r[0], "epsilon": r[1], "leakage": r[2]} for r in rows]
    doc = {"I": I, "slope": slope, "rows": flat}
    figs = {"scaling": lambda: loglog_fit([r[0] for r in rows], [r[1] for r in rows],
                                          r"$J/U_{gg}$", r"$\epsilon$", slope)}
    return Report("gate_scaling", doc, flat, meta or {}, figs)


def sweep_report(table, meta=None) -> Report:
    from .plotting import sweep_lines

    ycol = "p" if table.meta.get("task") == "detection" else "epsilon"
    doc = {"axes": list(table.axes), "meta": table.meta,
           "rows": [{"point": r["point"], "result": r["result"], "error": r["error"]}
                    for r in table.rows]}
    figs = {ycol: lambda: sweep_lines(table, ycol)}
    ok = all(r["error"] is None for r in table.rows)
    return Report("sweep", doc, table.flat_rows(), {**table.meta, **(meta or {})}, figs, ok)


def optimize_report(res, best, task, meta=None) -> Report:
    from .plotting import history

    obj = "p" if task == "detection" else "epsilon"
    doc = {"task": task, "x": res.x, "fun": res.fun, "n_evals": res.n_evals,
           "budget_exhausted": res.exhausted, "best": best,
           "history": [{"x": x, "value": v} for x, v in res.history]}
    rows = [{**x, obj: v} for x, v in res.history]
    figs = {"history": lambda: history([v for _, v in res.history], obj)}
    return Report("optimize", doc, rows, meta or {}, figs)
