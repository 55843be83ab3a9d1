"""Atomic constants for fermionic alkaline-earth isotopes and clock-line spectra."""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field
from math import pi

# Physical constants (angular frequency per tesla). Defined here and nowhere else.
MU_B = 2 * pi * 13.996245e9
MU_N = 2 * pi * 7.6225932e6

MHZ = 2 * pi * 1e6  # 1 MHz of linear frequency in rad/s


@dataclass(frozen=True)
class SpeciesParams:
    """Constants of one isotope. Frequencies are angular (rad/s).

    ``gJ`` and ``gI`` default to 1 and 0; neither is a measured value for the
    1P1 state used here. ``g_g``/``g_s`` are the effective clock-state nuclear
    g-factors used only by :func:`transition_spectrum`.
    """

    name: str
    I: float
    Gamma: float
    A: float
    Q: float
    gJ: float = 1.0
    gI: float = 0.0
    g_g: float = 0.0
    g_s: float = 0.0

    def __post_init__(self):
        two_i = 2 * self.I
        if self.I <= 0 or abs(two_i - round(two_i)) > 1e-12 or round(two_i) % 2 != 1:
            raise ValueError(f"{self.name}: nuclear spin must be a positive odd half-integer, got {self.I}")
        if not self.Gamma > 0:
            raise ValueError(f"{self.name}: Gamma must be positive")
        if self.Q != 0 and self.I == 0.5:
            raise ValueError(f"{self.name}: quadrupole constant must vanish for I = 1/2")

    @property
    def dim(self) -> int:
        return int(round(2 * self.I)) + 1

    def to_config(self) -> dict:
        """Serialise with frequencies in linear MHz."""
        d = asdict(self)
        for key in ("Gamma", "A", "Q"):
            d[f"{key}_MHz"] = float(f"{d.pop(key) / MHZ:.12g}")
        return d

    @classmethod
    def from_config(cls, doc: dict) -> "SpeciesParams":
        known = {"name", "I", "Gamma_MHz", "A_MHz", "Q_MHz", "gJ", "gI", "g_g", "g_s", "delta_g"}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise KeyError(f"unknown species keys: {', '.join(unknown)}")
        missing = sorted({"name", "I", "Gamma_MHz", "A_MHz"} - set(doc))
        if missing:
            raise KeyError(f"missing species keys: {', '.join(missing)}")
        kw = {k: doc[k] for k in ("gJ", "gI", "g_g", "g_s") if k in doc}
        if "delta_g" in doc:
            # g_g = g_s + delta_g
            kw["g_g"] = kw.get("g_s", 0.0) + float(doc["delta_g"])
        return cls(
            name=str(doc["name"]),
            I=float(doc["I"]),
            Gamma=float(doc["Gamma_MHz"]) * MHZ,
            A=float(doc["A_MHz"]) * MHZ,
            Q=float(doc.get("Q_MHz", 0.0)) * MHZ,
            **{k: float(v) for k, v in kw.items()},
        )


BUILTIN = {
    "Yb171": SpeciesParams("Yb171", 0.5, 28.0 * MHZ, -213.0 * MHZ, 0.0),
    "Sr87": SpeciesParams("Sr87", 4.5, 30.2 * MHZ, -3.4 * MHZ, 39.0 * MHZ),
    "Ca43": SpeciesParams("Ca43", 3.5, 35.0 * MHZ, -15.5 * MHZ, -3.5 * MHZ),
}


def species_lookup(name: str, overrides: dict | None = None) -> SpeciesParams:
    """Built-in (or user-supplied, via ``overrides``) species record by name."""
    table = dict(BUILTIN)
    if overrides:
        table.update(overrides)
    try:
        return table[name]
    except KeyError:
        raise KeyError(f"unknown species {name!r}; available: {', '.join(sorted(table))}") from None


@dataclass(frozen=True)
class TransitionLine:
    m_g: float
    m_s: float
    polarization: str
    offset: float

    def __post_init__(self):
        dm = self.m_s - self.m_g
        expected = {0: "pi", 1: "sigma+", -1: "sigma-"}.get(round(dm))
        if abs(dm) > 1 or expected != self.polarization:
            raise ValueError(f"inconsistent line {self}")


@dataclass(frozen=True)
class Spectrum:
    lines: tuple[TransitionLine, ...]
    min_spacing: float
    min_pi_spacing: float = field(default=float("nan"))

    def __len__(self):
        return len(self.lines)

    def __iter__(self):
        return iter(self.lines)


def _min_gap(values) -> float:
    values = sorted(values)
    if len(values) < 2:
        return float("inf")
    return min(b - a for a, b in itertools.pairwise(values))


def transition_spectrum(I: float, g_g: float, g_s: float, B: float) -> Spectrum:
    """All |g, m_g> -> |s, m_s> lines with |m_s - m_g| <= 1.

    Offsets are ``MU_N * B * (g_g m_g - g_s m_s)`` relative to the zero-field
    line, from level energies ``-g MU_N m B``.
    """
    n = int(round(2 * I)) + 1
    ms = [I - k for k in range(n)]
    lines = []
    for m_g in ms:
        for m_s in ms:
            dm = round(m_s - m_g)
            if abs(dm) > 1:
                continue
            pol = {0: "pi", 1: "sigma+", -1: "sigma-"}[dm]
            lines.append(TransitionLine(m_g, m_s, pol, MU_N * B * (g_g * m_g - g_s * m_s)))
    return Spectrum(
        tuple(lines),
        _min_gap([ln.offset for ln in lines]),
        _min_gap([ln.offset for ln in lines if ln.polarization == "pi"]),
    )
