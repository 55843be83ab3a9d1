"""Run configuration: schema, unit handling and conversion to engine inputs.

Boundary units are linear-frequency MHz, tesla and microseconds; quantities
can also be written as strings such as ``"15 GHz"`` or ``"3 ms"``. Everything
is converted once, here, to rad/s and seconds.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .detection import DetectionConfig, DetectionSpace
from .gate import GateSchedule, TwoWellParams
from .species import MHZ, SpeciesParams, species_lookup

COMMANDS = ("species", "spectrum", "detect", "calibrate", "gate", "sweep", "optimize")
FORMATS = ("json", "csv")

# synthetic interaction multiples (U_ss, V, V_ex) / U_gg for gate scenarios
DEFAULT_MULTIPLES = (0.0, 0.0, 0.0)


class ConfigError(ValueError):
    pass


_UNITS = {
    "MHz": ("frequency", 1.0), "GHz": ("frequency", 1e3), "kHz": ("frequency", 1e-3),
    "Hz": ("frequency", 1e-6),
    "T": ("field", 1.0), "mT": ("field", 1e-3), "G": ("field", 1e-4),
    "us": ("time", 1.0), "µs": ("time", 1.0), "ns": ("time", 1e-3), "ms": ("time", 1e3),
    "s": ("time", 1e6),
}
_SUFFIX_KIND = {"_MHz": "frequency", "_T": "field", "_us": "time"}
_QUANTITY = re.compile(r"^\s*([-+0-9.eE]+)\s*([a-zA-Zµ]+)\s*$")

_num = {"type": ["number", "string"]}
_freq = _num
_species_override = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "I", "Gamma_MHz", "A_MHz"],
    "properties": {
        "name": {"type": "string"}, "I": {"type": "number"}, "Gamma_MHz": _freq,
        "A_MHz": _freq, "Q_MHz": _freq, "gJ": {"type": "number"}, "gI": {"type": "number"},
        "g_g": {"type": "number"}, "g_s": {"type": "number"}, "delta_g": {"type": "number"},
    },
}
_detect_props = {
    "species": {"type": "string"}, "B_T": _num, "Omega_MHz": _freq, "Delta_MHz": _freq,
    "Omega_c_MHz": _freq, "tau_us": _num, "N_target": {"type": ["number", "null"]},
    "decay_cutoff": {"type": "number", "minimum": 10},
    "pulse_shape": {"enum": ["rectangular", "sin2"]}, "ramp_us": _num,
    "gJ": {"type": "number"}, "gI": {"type": "number"},
    "mc_samples": {"type": "integer", "minimum": 0},
    "sensitivity": {"type": "boolean"},
    "with_r": {"type": "boolean"}, "with_s": {"type": "boolean"},
    "m": {"type": "number"},
}
_gate_props = {
    "I": {"type": "number"}, "J": {"type": "number", "exclusiveMinimum": 0},
    "ratio": {"type": "number"}, "U_gg": {"type": "number"}, "U_ss": {"type": "number"},
    "V": {"type": "number"}, "V_ex": {"type": "number"},
    "multiples": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
    "B_T": _num, "g_g": {"type": "number"}, "g_s": {"type": "number"},
    "J_s": {"type": ["number", "null"]},
    "schedule": {"type": "array", "items": {"type": "string"}},
    "ratios": {"type": "array", "items": {"type": "number", "minimum": 10}},
    "reference_m": {"type": "number"},
}
_axis = {
    "type": "object", "additionalProperties": False, "required": ["path", "values"],
    "properties": {"path": {"type": "string"}, "values": {"type": "array", "minItems": 1}},
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "aeqreg run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["command"],
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "seed": {"type": "integer"},
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": list(FORMATS)}, "minItems": 1},
                "figures": {"type": "boolean"},
            },
        },
        "species_overrides": {"type": "array", "items": _species_override},
        "species": {
            "type": "object", "additionalProperties": False,
            "properties": {"name": {"type": "string"}},
        },
        "spectrum": {
            "type": "object", "additionalProperties": False,
            "properties": {"species": {"type": "string"}, "I": {"type": "number"},
                           "g_g": {"type": "number"}, "g_s": {"type": "number"},
                           "delta_g": {"type": "number"}, "B_T": _num},
        },
        "detect": {"type": "object", "additionalProperties": False, "properties": _detect_props},
        "calibrate": {"type": "object", "additionalProperties": False, "properties": _detect_props},
        "gate": {"type": "object", "additionalProperties": False, "properties": _gate_props},
        "sweep": {
            "type": "object", "additionalProperties": False, "required": ["task", "axes"],
            "properties": {
                "task": {"enum": ["detection", "gate"]},
                "axes": {"type": "array", "items": _axis, "minItems": 1},
                "fixed": {"type": "object"},
                "N_target": {"type": "number", "minimum": 0},
                "workers": {"type": "integer", "minimum": 1},
            },
        },
        "optimize": {
            "type": "object", "additionalProperties": False, "required": ["task", "bounds"],
            "properties": {
                "task": {"enum": ["detection", "gate"]},
                "bounds": {"type": "object", "minProperties": 1,
                           "additionalProperties": {"type": "array", "items": _num,
                                                    "minItems": 2, "maxItems": 2}},
                "fixed": {"type": "object"},
                "budget": {"type": "integer", "minimum": 10},
                "N_target": {"type": "number", "minimum": 0},
                "objective": {"enum": ["p", "epsilon"]},
            },
        },
    },
}


def _path(err) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def validate(doc: dict) -> None:
    """Schema check with path-qualified messages; raises :class:`ConfigError`."""
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(doc),
                    key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        msgs = []
        for err in errors:
            if err.validator == "additionalProperties":
                extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
                for key in extra:
                    loc = _path(err)
                    msgs.append(f"unknown key {key!r} at {loc if loc != '<root>' else 'top level'}")
            else:
                msgs.append(f"{_path(err)}: {err.message}")
        raise ConfigError("; ".join(msgs))


def parse_quantity(value, key: str):
    """Number in the unit named by the key suffix; strings may carry their own unit."""
    kind = next((k for s, k in _SUFFIX_KIND.items() if key.endswith(s)), None)
    if kind is None or not isinstance(value, str):
        return value
    m = _QUANTITY.match(value)
    if not m:
        raise ConfigError(f"{key}: cannot parse quantity {value!r}")
    number, unit = float(m.group(1)), m.group(2)
    if unit not in _UNITS:
        raise ConfigError(f"{key}: unknown unit {unit!r}")
    ukind, factor = _UNITS[unit]
    if ukind != kind:
        raise ConfigError(f"{key}: unit {unit!r} is a {ukind}, expected a {kind}")
    return number * factor


def normalise_units(block: dict, where: str = "") -> dict:
    out = {}
    for key, value in block.items():
        try:
            out[key] = parse_quantity(value, key)
        except ConfigError as exc:
            raise ConfigError(f"{where}{exc}") from None
    return out


def _normalise_search(block: dict, where: str) -> dict:
    """Unit strings inside sweep axes, optimize bounds and fixed parameters."""
    block = dict(block)
    if "fixed" in block:
        block["fixed"] = normalise_units(block["fixed"], f"{where}.fixed.")
    if "axes" in block:
        block["axes"] = [
            {**ax, "values": [normalise_units({ax["path"]: v}, f"{where}.axes.{i}.")[ax["path"]]
                              for v in ax["values"]]}
            for i, ax in enumerate(block["axes"])]
    if "bounds" in block:
        block["bounds"] = {k: [normalise_units({k: v}, f"{where}.bounds.")[k] for v in pair]
                           for k, pair in block["bounds"].items()}
    return block


@dataclass(frozen=True)
class RunSpec:
    command: str
    config: dict
    output_dir: str = "out"
    formats: tuple[str, ...] = ("json", "csv")
    seed: int = 0
    figures: bool = True
    overrides: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if not self.formats:
            raise ConfigError("at least one output format is required")

    def to_document(self) -> dict:
        doc = {
            "command": self.command,
            "seed": self.seed,
            "output": {"dir": self.output_dir, "formats": list(self.formats),
                       "figures": self.figures},
            self.command: copy.deepcopy(self.config),
        }
        if self.overrides:
            doc["species_overrides"] = [sp.to_config() for sp in self.overrides.values()]
        return doc

    def config_hash(self) -> str:
        doc = self.to_document()
        doc.pop("output")
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_document(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml

        return yaml.safe_load(text)
    return json.loads(text)


def spec_from_document(doc: dict) -> RunSpec:
    validate(doc)
    overrides = {}
    for k, entry in enumerate(doc.get("species_overrides", [])):
        try:
            sp = SpeciesParams.from_config(entry)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"species_overrides.{k}: {exc}") from None
        overrides[sp.name] = sp
    command = doc["command"]
    block = doc.get(command, {})
    if command in ("detect", "calibrate", "spectrum", "gate"):
        block = normalise_units(block, f"{command}.")
    elif command in ("sweep", "optimize"):
        block = _normalise_search(block, command)
    out = doc.get("output", {})
    spec = RunSpec(
        command=command,
        config=block,
        output_dir=out.get("dir", "out"),
        formats=tuple(out.get("formats", FORMATS)),
        seed=int(doc.get("seed", 0)),
        figures=bool(out.get("figures", True)),
        overrides=overrides,
    )
    if command in ("detect", "calibrate"):
        detection_inputs(spec.config, overrides)  # surface semantic errors at parse time
    if command == "gate":
        gate_inputs(spec.config)
    return spec


def dump_config(spec: RunSpec, path) -> Path:
    """Write ``spec`` as a JSON document that :func:`parse_config` reads back."""
    path = Path(path)
    path.write_text(json.dumps(spec.to_document(), sort_keys=True, indent=2) + "\n")
    return path


def parse_config(path) -> RunSpec:
    return spec_from_document(load_document(path))


# ---------------------------------------------------------------- conversion


DETECT_DEFAULTS = {"Delta_MHz": 0.0, "B_T": 0.0, "Omega_c_MHz": 0.0, "N_target": 100.0,
                   "decay_cutoff": 30.0, "pulse_shape": "rectangular", "mc_samples": 0}


def detection_inputs(params: dict, overrides: dict | None = None):
    """(space, species, cfg, N_target) from boundary-unit parameters."""
    p = {**DETECT_DEFAULTS, **normalise_units(params)}
    if "species" not in p or "Omega_MHz" not in p:
        raise ConfigError("detection needs 'species' and 'Omega_MHz'")
    try:
        species = species_lookup(p["species"], overrides)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    tweaks = {k: float(p[k]) for k in ("gJ", "gI") if k in p}
    if tweaks:
        species = SpeciesParams(**{**species.__dict__, **tweaks})
    tau = p.get("tau_us")
    n_target = p.get("N_target")
    if tau is not None:
        n_target = None
    cfg = DetectionConfig(
        Omega=float(p["Omega_MHz"]) * MHZ,
        Delta=float(p["Delta_MHz"]) * MHZ,
        B=float(p["B_T"]),
        tau=None if tau is None else float(tau) * 1e-6,
        Omega_c=float(p["Omega_c_MHz"]) * MHZ,
        decay_cutoff=float(p["decay_cutoff"]),
        pulse_shape=p["pulse_shape"],
        ramp_time=float(p.get("ramp_us", 0.0)) * 1e-6,
    )
    with_r = bool(p.get("with_r", cfg.Omega_c > 0))
    space = DetectionSpace(species.I, with_r=with_r, with_s=bool(p.get("with_s", False)))
    return space, species, cfg, n_target


def gate_inputs(params: dict):
    """(TwoWellParams, GateSchedule) from a gate block; energies in units of J by default."""
    p = normalise_units(params)
    J = float(p.get("J", 1.0))
    if "U_gg" in p:
        U = float(p["U_gg"])
    elif "ratio" in p:
        U = float(p["ratio"]) * J
    else:
        raise ConfigError("gate needs 'ratio' or 'U_gg'")
    mult = p.get("multiples", DEFAULT_MULTIPLES)
    try:
        tw = TwoWellParams(
            I=float(p.get("I", 0.5)), J=J, U_gg=U,
            U_ss=float(p.get("U_ss", mult[0] * U)),
            V=float(p.get("V", mult[1] * U)),
            V_ex=float(p.get("V_ex", mult[2] * U)),
            B=float(p.get("B_T", 0.0)), g_g=float(p.get("g_g", 0.0)),
            g_s=float(p.get("g_s", 0.0)), J_s=p.get("J_s"),
        )
        schedule = GateSchedule(tuple(p["schedule"])) if "schedule" in p else GateSchedule.default()
    except ValueError as exc:
        raise ConfigError(f"gate: {exc}") from None
    return tw, schedule
