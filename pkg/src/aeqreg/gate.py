"""
Conditional-tunnelling phase gate between two single-atom registers.

Two wells (L, R), two orbitals (g, s) and 2I+1 nuclear levels per orbital
give 4(2I+1) fermionic modes. The two-atom sector is diagonalised exactly
and the gate is the ordered product of bias pulses and ideal local
operations on the right well.

Energies are angular frequencies with hbar = 1; any consistent unit works,
and the default scenario measures everything in units of J.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .fermions import operator_matrix, permutation_matrix, sector_states
from .qcore import Propagator
from .species import MU_N

SITES = ("L", "R")
ORBITALS = ("g", "s")


class BlockadeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TwoWellParams:
    """Couplings of the two-well Hubbard model.

    ``V`` and ``V_ex`` are the direct and exchange inter-orbital terms. ``J_s``
    overrides the s-orbital tunnelling (``None``: same as ``J``).
    """

    I: float
    J: float
    U_gg: float
    U_ss: float
    V: float
    V_ex: float
    B: float = 0.0
    g_g: float = 0.0
    g_s: float = 0.0
    J_s: float | None = None

    def __post_init__(self):
        if not self.J > 0:
            raise ValueError("tunnelling J must be positive")
        two_i = 2 * self.I
        if abs(two_i - round(two_i)) > 1e-12 or round(two_i) % 2 != 1:
            raise ValueError(f"I must be an odd half-integer, got {self.I}")

    @classmethod
    def scenario(cls, I: float, ratio: float, multiples=(0.0, 0.0, 0.0), J: float = 1.0,
                 **kw) -> "TwoWellParams":
        """U_gg = ratio * J with (U_ss, V, V_ex) = multiples * U_gg."""
        u = ratio * J
        return cls(I, J, u, multiples[0] * u, multiples[1] * u, multiples[2] * u, **kw)

    @property
    def blockade_margin(self) -> float:
        """Smallest |U_gg - U| over the competing pair energies, in units of J."""
        others = (self.U_ss, self.V + self.V_ex, self.V - self.V_ex)
        return min(abs(self.U_gg - u) for u in others) / self.J

    def check_blockade(self, factor: float = 10.0) -> bool:
        ok = self.blockade_margin >= factor
        if not ok:
            warnings.warn(f"interaction blockade is weak: margin {self.blockade_margin:.3g} J",
                          BlockadeWarning, stacklevel=2)
        return ok


@dataclass(frozen=True)
class Mode:
    site: str
    orbital: str
    m: float


class FockBasis2:
    """All two-fermion states over modes ordered (site L<R, orbital g<s, m ascending)."""

    def __init__(self, I: float):
        self.I = I
        self.n_m = int(round(2 * I)) + 1
        ms = [-I + k for k in range(self.n_m)]
        self.modes = [Mode(i, a, m) for i in SITES for a in ORBITALS for m in ms]
        self.mode_index = {(md.site, md.orbital, md.m): k for k, md in enumerate(self.modes)}
        self.states = sector_states(len(self.modes), 2)
        self.index = {s: k for k, s in enumerate(self.states)}

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def dim(self) -> int:
        return len(self.states)

    def mode(self, site: str, orbital: str, m: float) -> int:
        return self.mode_index[(site, orbital, float(m))]

    def occupied(self, state: int) -> tuple[int, int]:
        a, b = (k for k in range(self.n_modes) if state >> k & 1)
        return a, b

    def state_of(self, *modes: int) -> int:
        return sum(1 << a for a in modes)

    @cached_property
    def one_per_site(self) -> np.ndarray:
        """Basis indices with one atom in each well."""
        return np.array([k for k, s in enumerate(self.states)
                         if {self.modes[a].site for a in self.occupied(s)} == {"L", "R"}])

    def label(self, state: int) -> tuple:
        """(alpha_L, m_L, alpha_R, m_R) for a one-per-site state."""
        a, b = self.occupied(state)
        ml, mr = self.modes[a], self.modes[b]
        return (ml.orbital, ml.m, mr.orbital, mr.m)

    def pair_index(self, alpha_l, m_l, alpha_r, m_r) -> int:
        """Basis index of c^dag_{L alpha_l m_l} c^dag_{R alpha_r m_r} |0>."""
        return self.index[self.state_of(self.mode("L", alpha_l, m_l), self.mode("R", alpha_r, m_r))]


def two_particle_basis(I: float) -> FockBasis2:
    two_i = 2 * I
    if abs(two_i - round(two_i)) > 1e-12 or round(two_i) % 2 != 1:
        raise ValueError(f"I must be an odd half-integer, got {I}")
    return FockBasis2(I)


def hubbard_terms(basis: FockBasis2, params: TwoWellParams, DeltaE: float) -> list:
    """Operator strings of the two-well Hamiltonian."""
    md = basis.mode
    ms = [-basis.I + k for k in range(basis.n_m)]
    g_factor = {"g": params.g_g, "s": params.g_s}
    hop = {"g": params.J, "s": params.J if params.J_s is None else params.J_s}
    U = {"g": params.U_gg, "s": params.U_ss}
    terms = []
    for a in ORBITALS:
        for m in ms:
            l, r = md("L", a, m), md("R", a, m)
            terms += [(-hop[a], [("+", l), ("-", r)]), (-hop[a], [("+", r), ("-", l)])]
            if DeltaE:
                terms.append((DeltaE, [("+", r), ("-", r)]))
            for site in SITES:
                z = -MU_N * params.B * m * g_factor[a]
                if z:
                    k = md(site, a, m)
                    terms.append((z, [("+", k), ("-", k)]))
    for site in SITES:
        for a in ORBITALS:
            for i, m in enumerate(ms):
                for m2 in ms[i + 1:]:
                    p, q = md(site, a, m), md(site, a, m2)
                    terms.append((U[a], [("+", p), ("-", p), ("+", q), ("-", q)]))
        for m in ms:
            for m2 in ms:
                gm, sm2 = md(site, "g", m), md(site, "s", m2)
                terms.append((params.V, [("+", gm), ("-", gm), ("+", sm2), ("-", sm2)]))
                # c^dag_{g m} c^dag_{s m'} c_{g m'} c_{s m}
                terms.append((params.V_ex, [("+", gm), ("+", sm2),
                                            ("-", md(site, "g", m2)), ("-", md(site, "s", m))]))
    return [(c, ops) for c, ops in terms if c != 0]


def build_hubbard(basis: FockBasis2, params: TwoWellParams, DeltaE: float,
                  states=None) -> np.ndarray:
    """Hamiltonian matrix on the two-particle sector (or on ``states`` if given)."""
    if abs(basis.I - params.I) > 1e-12:
        raise ValueError("basis and params disagree on I")
    return operator_matrix(hubbard_terms(basis, params, DeltaE),
                           basis.states if states is None else states)


def local_unitaries(basis: FockBasis2) -> dict[str, np.ndarray]:
    """P: -1 per R-site g atom with m > 0. X: (R, g, m) <-> (R, g, -m)."""
    pos = [basis.mode("R", "g", m) for m in (-basis.I + k for k in range(basis.n_m)) if m > 0]
    mask = sum(1 << a for a in pos)
    P = np.diag([(-1.0) ** bin(s & mask).count("1") for s in basis.states]).astype(complex)
    perm = list(range(basis.n_modes))
    for k, md in enumerate(basis.modes):
        if md.site == "R" and md.orbital == "g":
            perm[k] = basis.mode("R", "g", -md.m)
    X = permutation_matrix(perm, basis.states).astype(complex)
    return {"P": P, "X": X}


TOKEN_RE = re.compile(r"^(BIAS)(?:\(([0-9.eE+-]+)\))?$|^(PHASE_R_POS|SWAP_R)$")


@dataclass(frozen=True)
class GateSchedule:
    """Token sequence in time order. ``BIAS(x)`` lasts x times pi/(sqrt(2) J)."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        for t in self.tokens:
            if not TOKEN_RE.match(t):
                raise ValueError(f"undefined schedule token {t!r}")

    @classmethod
    def default(cls) -> "GateSchedule":
        step12 = ("BIAS", "PHASE_R_POS", "BIAS", "PHASE_R_POS")
        return cls(step12 + ("SWAP_R",) + step12 + ("SWAP_R",))

    @property
    def n_bias(self) -> int:
        return sum(t.startswith("BIAS") for t in self.tokens)


def bias_time(params: TwoWellParams) -> float:
    return math.pi / (math.sqrt(2) * params.J)


@dataclass
class GateReport:
    unitary: np.ndarray
    basis: FockBasis2 = field(repr=False)
    phases: dict
    magnitudes: dict
    infidelity: float
    leakage: float
    reference: tuple

    def phase_rows(self):
        """(alpha_L, m_L, alpha_R, m_R, phase, |amplitude|) sorted by label."""
        return [(*k, self.phases[k], self.magnitudes[k]) for k in sorted(self.phases)]

    def group_phases(self, pair: str) -> np.ndarray:
        """Phases of every one-per-site state with electronic pair e.g. ``"gg"``."""
        return np.array([v for k, v in self.phases.items() if k[0] + k[2] == pair])


class GateEngine:
    """Caches the bias propagator and local unitaries for one parameter set."""

    def __init__(self, params: TwoWellParams, basis: FockBasis2 | None = None):
        self.params = params
        self.basis = basis or two_particle_basis(params.I)
        self.tau = bias_time(params)
        self._bias: dict[float, np.ndarray] = {}
        self.local = local_unitaries(self.basis)

    def bias(self, factor: float = 1.0, rotate_out_zeeman: bool = False) -> np.ndarray:
        key = (factor, rotate_out_zeeman)
        if key not in self._bias:
            H = build_hubbard(self.basis, self.params, self.params.U_gg)
            t = factor * self.tau
            U = Propagator(-1j * H)(t)
            if rotate_out_zeeman:
                U = np.exp(1j * self.zeeman_diagonal() * t)[:, None] * U
            self._bias[key] = U
        return self._bias[key]

    def zeeman_diagonal(self) -> np.ndarray:
        """Nuclear Zeeman energy of every basis state."""
        p, b = self.params, self.basis
        g = {"g": p.g_g, "s": p.g_s}
        return np.array([sum(-MU_N * p.B * b.modes[a].m * g[b.modes[a].orbital]
                             for a in b.occupied(s)) for s in b.states])

    def unitary(self, schedule: GateSchedule, rotate_out_zeeman: bool = False) -> np.ndarray:
        U = np.eye(self.basis.dim, dtype=complex)
        for tok in schedule.tokens:
            m = TOKEN_RE.match(tok)
            if m.group(1):
                step = self.bias(float(m.group(2) or 1.0), rotate_out_zeeman)
            elif tok == "PHASE_R_POS":
                step = self.local["P"]
            else:
                step = self.local["X"]
            U = step @ U
        return U

    def reference_index(self, m: float | None = None) -> int:
        m = -self.params.I if m is None else m
        return self.basis.pair_index("s", m, "s", m)

    def report(self, schedule: GateSchedule | None = None, reference_m: float | None = None,
               rotate_out_zeeman: bool = False) -> GateReport:
        schedule = schedule or GateSchedule.default()
        basis = self.basis
        U = self.unitary(schedule, rotate_out_zeeman)
        ref = self.reference_index(reference_m)
        U = U * np.exp(-1j * np.angle(U[ref, ref]))
        sec = basis.one_per_site
        Usec = U[np.ix_(sec, sec)]
        labels = [basis.label(basis.states[k]) for k in sec]
        target = np.array([-1.0 if lab[0] == lab[2] == "g" else 1.0 for lab in labels])
        overlap = np.sum(target.conj() * np.diag(Usec)) / len(sec)
        eps = max(0.0, 1.0 - abs(overlap) ** 2)
        kept = np.sum(np.abs(Usec) ** 2, axis=0)
        diag = np.diag(Usec)
        return GateReport(
            unitary=U,
            basis=basis,
            phases={lab: float(np.angle(z)) for lab, z in zip(labels, diag)},
            magnitudes={lab: float(abs(z)) for lab, z in zip(labels, diag)},
            infidelity=float(eps),
            leakage=float(max(0.0, 1.0 - kept.min())),
            reference=basis.label(basis.states[ref]),
        )


def run_gate_protocol(params: TwoWellParams, schedule: GateSchedule | None = None,
                      **kw) -> GateReport:
    params.check_blockade()
    return GateEngine(params).report(schedule, **kw)


@dataclass(frozen=True)
class BiasAnalysis:
    return_probability: float
    antisymmetric_phases: np.ndarray
    symmetric_phases: np.ndarray
    diagonal_phases: np.ndarray
    swap_error: float


def bias_pulse_analysis(params: TwoWellParams, engine: GateEngine | None = None) -> BiasAnalysis:
    """Single bias pulse restricted to one-per-site |g,g> states.

    The ideal action is the nuclear exchange |m2, m1> -> |m1, m2>, i.e. -1 on
    antisymmetric and +1 on symmetric nuclear combinations.
    """
    eng = engine or GateEngine(params)
    b = eng.basis
    U = eng.bias()
    ms = [-b.I + k for k in range(b.n_m)]
    gg = [b.pair_index("g", m2, "g", m1) for m2 in ms for m1 in ms]
    sub = U[np.ix_(gg, gg)]
    # strip the bias phase common to every one-per-site state
    sub = sub * np.exp(1j * params.U_gg * eng.tau)
    swap = np.zeros_like(sub)
    n = len(ms)
    for i2 in range(n):
        for i1 in range(n):
            swap[i1 * n + i2, i2 * n + i1] = 1.0
    anti, sym, diag = [], [], []
    for i1 in range(n):
        for i2 in range(i1, n):
            a, c = i2 * n + i1, i1 * n + i2
            if i1 == i2:
                diag.append(np.angle(sub[a, a]))
                continue
            va = np.zeros(n * n, dtype=complex)
            vs = np.zeros(n * n, dtype=complex)
            va[a], va[c] = 1 / math.sqrt(2), -1 / math.sqrt(2)
            vs[a], vs[c] = 1 / math.sqrt(2), 1 / math.sqrt(2)
            anti.append(np.angle(va.conj() @ sub @ va))
            sym.append(np.angle(vs.conj() @ sub @ vs))
    return BiasAnalysis(
        return_probability=float(np.min(np.sum(np.abs(sub) ** 2, axis=0))),
        antisymmetric_phases=np.array(anti),
        symmetric_phases=np.array(sym),
        diagonal_phases=np.array(diag),
        swap_error=float(np.abs(sub - swap).max()),
    )


def blockade_scaling(I: float, ratios, multiples=(0.0, 0.0, 0.0), schedule=None):
    """Protocol infidelity versus J/U_gg with (U_ss, V, V_ex) scaled along with U_gg.

    Returns ``(rows, slope)`` with rows ``(J/U_gg, infidelity, leakage)`` and
    the least-squares slope of log(infidelity) against log(J/U_gg).
    """
    rows = []
    for r in ratios:
        if r < 10:
            raise ValueError("ratios must be at least 10")
        rep = GateEngine(TwoWellParams.scenario(I, r, multiples)).report(schedule)
        rows.append((1.0 / r, rep.infidelity, rep.leakage))
    x = np.log([row[0] for row in rows])
    y = np.log([max(row[1], 1e-300) for row in rows])
    slope = float(np.polyfit(x, y, 1)[0]) if len(rows) > 1 else float("nan")
    return rows, slope
