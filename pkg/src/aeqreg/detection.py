"""
Fluorescence detection of the electronic qubit with the nuclear register intact.

The atom is modelled on the g (1S0, J=0) and e (1P1, J=1) manifolds, each
carrying the 2I+1 nuclear Zeeman states, optionally extended by an r level
(J=0, coupled to e by a control field) and an s level (J=0 dark spectator).
A rectangular probe pulse of length ``tau`` followed by a decay tail maps
density matrices on g to density matrices on g; that map is compared with
the closest diagonal unitary via the average gate fidelity.

Vectorisation is column stacking throughout (see :mod:`aeqreg.qcore`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .qcore import Propagator, haar_states, spin_operators
from .species import MU_B, MU_N, SpeciesParams

LEVEL_J = {"g": 0, "e": 1, "r": 0, "s": 0}
LEVEL_ORDER = ("g", "e", "r", "s")


class DetectionError(RuntimeError):
    """A detection computation could not meet its numerical contract."""


@dataclass(frozen=True)
class DetectionSpace:
    """Product basis |level, m_J> |m_I> with m descending inside each level."""

    I: float
    with_r: bool = False
    with_s: bool = False

    @property
    def levels(self) -> tuple[str, ...]:
        return tuple(lv for lv in LEVEL_ORDER
                     if lv in "ge" or (lv == "r" and self.with_r) or (lv == "s" and self.with_s))

    @property
    def nuc_dim(self) -> int:
        return int(round(2 * self.I)) + 1

    @cached_property
    def offsets(self) -> dict[str, int]:
        out, pos = {}, 0
        for lv in self.levels:
            out[lv] = pos
            pos += (2 * LEVEL_J[lv] + 1) * self.nuc_dim
        return out

    @property
    def dim(self) -> int:
        return sum((2 * LEVEL_J[lv] + 1) * self.nuc_dim for lv in self.levels)

    def index(self, level: str, m_J: float, m_I: float) -> int:
        jj = LEVEL_J[level]
        kj = int(round(jj - m_J))
        ki = int(round(self.I - m_I))
        if not (0 <= kj <= 2 * jj and 0 <= ki < self.nuc_dim):
            raise ValueError(f"no basis state ({level}, {m_J}, {m_I})")
        return self.offsets[level] + kj * self.nuc_dim + ki

    def block(self, level: str) -> np.ndarray:
        start = self.offsets[level]
        return np.arange(start, start + (2 * LEVEL_J[level] + 1) * self.nuc_dim)

    def labels(self) -> list[tuple[str, float, float]]:
        out = []
        for lv in self.levels:
            jj = LEVEL_J[lv]
            for kj in range(2 * jj + 1):
                for ki in range(self.nuc_dim):
                    out.append((lv, jj - kj, self.I - ki))
        return out

    def projector(self, level: str) -> np.ndarray:
        p = np.zeros((self.dim, self.dim))
        idx = self.block(level)
        p[idx, idx] = 1.0
        return p


@dataclass(frozen=True)
class DetectionConfig:
    """Drive parameters. Frequencies in rad/s, field in tesla, times in seconds.

    ``pulse_shape`` is ``"rectangular"`` (abrupt switching) or ``"sin2"``, which
    replaces the first and last ``ramp_time`` of the pulse with a staircase
    of ``ramp_steps`` piecewise-constant segments following sin^2.
    """

    Omega: float
    Delta: float = 0.0
    B: float = 0.0
    tau: float | None = None
    Omega_c: float = 0.0
    decay_cutoff: float = 30.0
    pulse_shape: str = "rectangular"
    ramp_time: float = 0.0
    ramp_steps: int = 8

    def __post_init__(self):
        if self.Omega < 0 or self.Omega_c < 0:
            raise ValueError("Rabi frequencies must be non-negative")
        if self.tau is not None and self.tau < 0:
            raise ValueError("tau must be non-negative")
        if self.decay_cutoff < 10:
            raise ValueError("decay_cutoff must be at least 10 lifetimes")
        if self.pulse_shape not in ("rectangular", "sin2"):
            raise ValueError(f"unknown pulse shape {self.pulse_shape!r}")

    def segments(self, tau: float) -> list[tuple[float, float]]:
        """Piecewise-constant (amplitude scale, duration) list covering ``tau``."""
        if self.pulse_shape == "rectangular" or self.ramp_time <= 0 or tau <= 0:
            return [(1.0, tau)]
        ramp = min(self.ramp_time, tau / 2)
        n = self.ramp_steps
        dt = ramp / n
        up = [(math.sin(0.5 * math.pi * (k + 0.5) / n) ** 2, dt) for k in range(n)]
        return up + [(1.0, tau - 2 * ramp)] + up[::-1]


@dataclass(frozen=True)
class QuantumChannel:
    """Linear map on d x d density matrices as a d^2 x d^2 column-stacked superoperator."""

    superop: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(round(math.sqrt(self.superop.shape[0])))

    def __call__(self, rho) -> np.ndarray:
        d = self.dim
        return (self.superop @ np.asarray(rho).reshape(-1, order="F")).reshape(d, d, order="F")

    def compose(self, other: "QuantumChannel") -> "QuantumChannel":
        """``self`` after ``other``."""
        return QuantumChannel(self.superop @ other.superop)

    def choi(self) -> np.ndarray:
        """Choi operator sum_{mn} |m><n| (x) E(|m><n|), output factor second."""
        d = self.dim
        # superop[(a,b),(m,n)] with column stacking: row a + b d, column m + n d
        s = self.superop.reshape(d, d, d, d, order="F")  # s[a, b, m, n]
        return s.transpose(2, 0, 3, 1).reshape(d * d, d * d)

    def trace_preservation_error(self) -> float:
        d = self.dim
        vec_id = np.eye(d).reshape(-1, order="F")
        return float(np.abs(vec_id @ self.superop - vec_id).max())

    def min_choi_eigenvalue(self) -> float:
        c = self.choi()
        return float(np.linalg.eigvalsh(0.5 * (c + c.conj().T)).min())

    @classmethod
    def from_unitary(cls, U) -> "QuantumChannel":
        U = np.asarray(U, dtype=complex)
        return cls(np.kron(U.conj(), U))


@dataclass(frozen=True)
class DetectionReport:
    phi: np.ndarray
    Fbar: float
    N: float
    tau: float
    Fbar_mc: float | None = None
    mc_stderr: float | None = None

    @property
    def p(self) -> float:
        return 1.0 - self.Fbar


# ---------------------------------------------------------------- Hamiltonian


def _check_compatible(space: DetectionSpace, species: SpeciesParams):
    if abs(space.I - species.I) > 1e-12:
        raise ValueError(f"space has I={space.I} but {species.name} has I={species.I}")
    if species.Q != 0 and species.I <= 0.5:
        raise ValueError("quadrupole term requires I > 1/2")


def hyperfine_block(species: SpeciesParams, B: float) -> np.ndarray:
    """e-manifold (J=1) hyperfine + Zeeman Hamiltonian, basis |m_J> (x) |m_I>."""
    I = species.I
    ns, js = spin_operators(I), spin_operators(1)
    one_i, one_j = np.eye(ns.dim), np.eye(3)
    IJ = sum(np.kron(ja, ia) for ja, ia in ((js.Jx, ns.Jx), (js.Jy, ns.Jy), (js.Jz, ns.Jz)))
    h = species.A * IJ
    if species.Q != 0:
        K = I * (I + 1) * 2.0
        quad = 3 * IJ @ IJ + 1.5 * IJ - K * np.eye(3 * ns.dim)
        h = h + species.Q * quad / (2 * I * 1 * (2 * I - 1) * (2 * 1 - 1))
    h = h + species.gJ * MU_B * B * np.kron(js.Jz, one_i)
    h = h - species.gI * MU_N * B * np.kron(one_j, ns.Jz)
    return h


def build_detection_hamiltonian(space: DetectionSpace, species: SpeciesParams,
                                cfg: DetectionConfig, omega_scale: float = 1.0) -> np.ndarray:
    """Probe-rotating-frame Hamiltonian on ``space`` (rad/s)."""
    _check_compatible(space, species)
    H = np.zeros((space.dim, space.dim), dtype=complex)
    nuc_zeeman = -species.gI * MU_N * cfg.B * spin_operators(space.I).Jz
    for lv in space.levels:
        idx = space.block(lv)
        if lv == "e":
            blk = hyperfine_block(species, cfg.B) - cfg.Delta * np.eye(len(idx))
        else:
            blk = nuc_zeeman
        H[np.ix_(idx, idx)] += blk
    ms = space.I - np.arange(space.nuc_dim)
    e0 = [space.index("e", 0, m) for m in ms]
    for lv, amp in (("g", cfg.Omega * omega_scale), ("r", cfg.Omega_c * omega_scale)):
        if lv not in space.levels or amp == 0:
            continue
        src = [space.index(lv, 0, m) for m in ms]
        H[src, e0] -= amp
        H[e0, src] -= amp
    return H


def build_jump_operators(space: DetectionSpace, species: SpeciesParams) -> list[np.ndarray]:
    """``sqrt(Gamma) sum_mI |g, m_I><e, m_J=q, m_I|`` for q = -1, 0, +1."""
    ops = []
    rate = math.sqrt(species.Gamma)
    ms = space.I - np.arange(space.nuc_dim)
    for q in (-1, 0, 1):
        L = np.zeros((space.dim, space.dim), dtype=complex)
        for m in ms:
            L[space.index("g", 0, m), space.index("e", q, m)] = rate
        ops.append(L)
    return ops


def liouvillian(H, jump_ops) -> np.ndarray:
    """Column-stacked generator of ``drho/dt = -i[H, rho] + sum D[L] rho``."""
    H = np.asarray(H, dtype=complex)
    n = H.shape[0]
    eye = np.eye(n)
    L = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for op in jump_ops:
        op = np.asarray(op, dtype=complex)
        if op.shape != H.shape:
            raise ValueError(f"jump operator shape {op.shape} does not match H {H.shape}")
        ldl = op.conj().T @ op
        L += np.kron(op.conj(), op) - 0.5 * (np.kron(eye, ldl) + np.kron(ldl.T, eye))
    return L


def vec(rho) -> np.ndarray:
    return np.asarray(rho, dtype=complex).reshape(-1, order="F")


def unvec(v, n: int) -> np.ndarray:
    return np.asarray(v).reshape(n, n, order="F")


# ------------------------------------------------------------- time evolution


class PulseEvolution:
    """Cached Liouvillian propagators for one (space, species, cfg) triple."""

    def __init__(self, space: DetectionSpace, species: SpeciesParams, cfg: DetectionConfig):
        self.space, self.species, self.cfg = space, species, cfg
        self.jumps = build_jump_operators(space, species)
        self._props: dict[float, Propagator] = {}
        e = space.block("e")
        n = space.dim
        # vec(rho) positions of the e-manifold populations
        self.e_diag = e + e * n

    def prop(self, scale: float) -> Propagator:
        if scale not in self._props:
            H = build_detection_hamiltonian(self.space, self.species, self.cfg, omega_scale=scale)
            self._props[scale] = Propagator(liouvillian(H, self.jumps))
        return self._props[scale]

    @property
    def tail_time(self) -> float:
        return self.cfg.decay_cutoff / self.species.Gamma

    def pulse(self, v, tau: float):
        """Evolve ``v`` through the pulse; returns (final vec, integrated e-population)."""
        n_e = 0.0
        v = np.asarray(v, dtype=complex)
        for scale, dt in self.cfg.segments(tau):
            p = self.prop(scale)
            if v.ndim == 1:
                n_e += np.real(p.integral(dt, v)[self.e_diag].sum())
            v = p.apply(dt, v)
        return v, n_e

    def tail(self, v):
        p = self.prop(0.0)
        n_e = np.real(p.integral(self.tail_time, v)[self.e_diag].sum()) if np.ndim(v) == 1 else 0.0
        return p.apply(self.tail_time, v), n_e

    def photons(self, v0, tau: float) -> tuple[float, float]:
        """(photons during the pulse, photons in the decay tail) starting from ``v0``."""
        v, n_pulse = self.pulse(v0, tau)
        _, n_tail = self.tail(v)
        g = self.species.Gamma
        return g * n_pulse, g * n_tail


def _mixed_ground(space: DetectionSpace) -> np.ndarray:
    rho = np.zeros((space.dim, space.dim), dtype=complex)
    idx = space.block("g")
    rho[idx, idx] = 1.0 / len(idx)
    return vec(rho)


def photon_count(space: DetectionSpace, species: SpeciesParams, cfg: DetectionConfig,
                 rho0=None, evolution: PulseEvolution | None = None) -> float:
    """Scattered photons ``Gamma * int tr(P_e rho) dt`` over pulse and decay tail.

    The time integral is done in closed form from the Liouvillian propagator,
    so it carries no discretisation error. The default initial state is the
    maximally mixed g manifold.
    """
    if cfg.tau is None:
        raise ValueError("photon_count needs cfg.tau")
    if cfg.Omega == 0 and cfg.Omega_c == 0:
        return 0.0
    ev = evolution or PulseEvolution(space, species, cfg)
    v0 = _mixed_ground(space) if rho0 is None else vec(rho0)
    return float(sum(ev.photons(v0, cfg.tau)))


def calibrate_pulse_time(space: DetectionSpace, species: SpeciesParams, cfg: DetectionConfig,
                         N_target: float, tau_max: float = 1.0, tol: float = 0.5,
                         evolution: PulseEvolution | None = None) -> tuple[float, float]:
    """Bisect for the pulse length scattering ``N_target`` photons; returns (tau, N)."""
    if N_target < 0:
        raise ValueError("N_target must be non-negative")
    if N_target == 0:
        return 0.0, 0.0
    if cfg.Omega <= 0:
        raise ValueError("calibration needs Omega > 0")
    ev = evolution or PulseEvolution(space, species, cfg)
    v0 = _mixed_ground(space)

    def count(t):
        return float(sum(ev.photons(v0, t)))

    lo, n_lo = 0.0, 0.0
    hi = 1.0 / species.Gamma
    n_hi = count(hi)
    while n_hi < N_target:
        lo, n_lo = hi, n_hi
        hi *= 2
        if hi > tau_max:
            raise DetectionError(f"N={N_target} not reached below tau_max={tau_max} s")
        n_hi = count(hi)
    for _ in range(200):
        if abs(n_hi - N_target) <= tol:
            return hi, n_hi
        if abs(n_lo - N_target) <= tol and lo > 0:
            return lo, n_lo
        mid = 0.5 * (lo + hi)
        n_mid = count(mid)
        if n_mid < N_target:
            lo, n_lo = mid, n_mid
        else:
            hi, n_hi = mid, n_mid
    raise DetectionError("pulse-time bisection did not converge")


def detection_channel(space: DetectionSpace, species: SpeciesParams, cfg: DetectionConfig,
                      evolution: PulseEvolution | None = None,
                      residual_tol: float = 1e-10) -> QuantumChannel:
    """Net pulse-plus-decay map on the g manifold."""
    if cfg.tau is None:
        raise ValueError("detection_channel needs cfg.tau")
    if space.with_s:
        raise ValueError("the detection channel is defined on g only; drop the s level")
    ev = evolution or PulseEvolution(space, species, cfg)
    n = space.dim
    g = space.block("g")
    d = len(g)
    # columns: vec(|g_a><g_b|) for (a, b) in column-stacking order
    cols = np.zeros((n * n, d * d), dtype=complex)
    for b in range(d):
        for a in range(d):
            cols[g[a] + g[b] * n, a + b * d] = 1.0
    out, _ = ev.pulse(cols, cfg.tau)
    out, _ = ev.tail(out)
    e_pop = np.abs(out[ev.e_diag]).max() if out.size else 0.0
    if e_pop > residual_tol:
        raise DetectionError(
            f"excited population {e_pop:.2e} remains after the decay tail; raise decay_cutoff")
    rows = (g[:, None] + g[None, :] * n).reshape(-1, order="F")
    return QuantumChannel(out[rows, :], meta={"tau": cfg.tau, "species": species.name})


# ---------------------------------------------------------------- fidelities


def ideal_phase_target(channel: QuantumChannel, amp_tol: float = 1e-12) -> np.ndarray:
    """Diagonal unitary read back from the coherences rho_{m, -I}.

    The last basis index is m = -I (descending order), whose phase is zero.
    """
    d = channel.dim
    ref = d - 1
    phases = np.zeros(d)
    for m in range(d - 1):
        k = m + ref * d
        amp = channel.superop[k, k]
        if abs(amp) < amp_tol:
            raise DetectionError(f"coherence amplitude for index {m} vanishes; phase undefined")
        phases[m] = np.angle(amp)
    return np.diag(np.exp(1j * phases))


def entanglement_fidelity(channel: QuantumChannel, U) -> float:
    d = channel.dim
    U = np.asarray(U, dtype=complex)
    # F_e = (1/d^2) sum_{mn} <m| U^dag E(|m><n|) U |n>
    total = 0.0
    for n_ in range(d):
        for m in range(d):
            out = unvec(channel.superop[:, m + n_ * d], d)
            total += (U.conj().T @ out @ U)[m, n_]
    return float(np.real(total)) / d**2


def average_gate_fidelity(channel: QuantumChannel, U) -> float:
    d = channel.dim
    return (d * entanglement_fidelity(channel, U) + 1) / (d + 1)


def average_gate_fidelity_mc(channel: QuantumChannel, U, samples: int = 10_000,
                             seed: int = 0) -> tuple[float, float]:
    """Haar Monte-Carlo estimate of the average gate fidelity; returns (mean, standard error)."""
    d = channel.dim
    U = np.asarray(U, dtype=complex)
    psi = haar_states(d, samples, seed)
    # rho_vecs[s, a + b d] = psi_a conj(psi_b)
    rho_vecs = np.einsum("sa,sb->sba", psi, psi.conj()).reshape(samples, d * d)
    outs = rho_vecs @ channel.superop.T  # rows: vec(E(rho))
    phi = psi @ U.T  # U|psi>
    out_mats = outs.reshape(samples, d, d).transpose(0, 2, 1)  # [s, a, b]
    vals = np.real(np.einsum("sa,sab,sb->s", phi.conj(), out_mats, phi))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples))


# --------------------------------------------------------------- pipelines


def detection_error(space: DetectionSpace, species: SpeciesParams, cfg: DetectionConfig,
                    N_target: float | None = 100.0, mc_samples: int = 0,
                    seed: int = 0) -> DetectionReport:
    """Calibrate tau (unless ``N_target`` is None), build the channel and score it."""
    ev = PulseEvolution(space, species, cfg)
    if N_target is not None:
        tau, N = calibrate_pulse_time(space, species, cfg, N_target, evolution=ev)
        cfg = replace(cfg, tau=tau)
    else:
        N = photon_count(space, species, cfg, evolution=ev)
    ch = detection_channel(space, species, cfg, evolution=ev)
    U = ideal_phase_target(ch)
    Fbar = average_gate_fidelity(ch, U)
    mc = se = None
    if mc_samples:
        mc, se = average_gate_fidelity_mc(ch, U, mc_samples, seed)
    return DetectionReport(np.angle(np.diag(U)), Fbar, N, cfg.tau, mc, se)


@dataclass(frozen=True)
class AnalyticEstimate:
    N_est: float
    tau: float
    delta_literal: tuple[float, float]
    delta_hamiltonian: tuple[float, float]
    Gamma12_literal: float
    Gamma12_hamiltonian: float
    p_literal: float
    p_hamiltonian: float
    p_scaling: float


def e0_shifts(species: SpeciesParams, B: float) -> np.ndarray:
    """Diagonal energies of |e, m_J=0, m_I> relative to |g, m_I>, m_I descending."""
    h = hyperfine_block(species, B)
    d = species.dim
    diag = np.real(np.diag(h))[d: 2 * d]
    g_diag = -species.gI * MU_N * B * (species.I - np.arange(d))
    return diag - g_diag


def analytic_estimates(species: SpeciesParams, cfg: DetectionConfig, m1: float, m2: float,
                       N: float | None = None) -> AnalyticEstimate:
    """Off-resonant, decoupled-regime estimates of photon number and coherence decay.

    ``tau`` comes from ``cfg.tau`` or, when ``N`` is given, from inverting
    ``N = Gamma tau Omega^2 / Delta^2``.
    """
    if cfg.Delta == 0:
        raise ValueError("estimates need a nonzero detuning")
    G, W, D = species.Gamma, cfg.Omega, cfg.Delta
    tau = cfg.tau if N is None else N * D**2 / (G * W**2)
    if tau is None:
        raise ValueError("need cfg.tau or N")
    n_est = G * tau * W**2 / D**2
    lit = (3 * species.Q * m1**2, 3 * species.Q * m2**2)
    shifts = e0_shifts(species, cfg.B)
    ham = tuple(float(shifts[int(round(species.I - m))]) for m in (m1, m2))

    def rate(dd):
        return (dd[0] - dd[1]) ** 2 * W**2 * G / (2 * D**4)

    g_lit, g_ham = rate(lit), rate(ham)
    return AnalyticEstimate(n_est, tau, lit, ham, g_lit, g_ham, g_lit * tau, g_ham * tau,
                            n_est * (species.Q / D) ** 2)


@dataclass(frozen=True)
class Sensitivity:
    gJ: float
    p_low: float
    p_high: float
    rel: float = 0.1

    @property
    def dp_dgJ(self) -> float:
        return (self.p_high - self.p_low) / (2 * self.rel * self.gJ)


def gj_sensitivity(space: DetectionSpace, species: SpeciesParams, cfg: DetectionConfig,
                   N_target: float | None = 100.0, rel: float = 0.1) -> Sensitivity:
    """Detection error with gJ scaled by (1 -/+ rel), re-calibrating tau each time."""
    ps = []
    for f in (1 - rel, 1 + rel):
        sp = replace(species, gJ=species.gJ * f)
        ps.append(detection_error(space, sp, cfg, N_target).p)
    return Sensitivity(species.gJ, *ps, rel)


@dataclass(frozen=True)
class RetentionResult:
    """``N`` is per atom in g: photons from the g half of the superposition, doubled."""

    N: float
    retention: float


def coherence_retention(space: DetectionSpace, species: SpeciesParams, cfg: DetectionConfig,
                        m: float | None = None) -> RetentionResult:
    """Photons scattered and g-s coherence kept for (|g,m> + |s,m>)/sqrt(2)."""
    if not space.with_s:
        raise ValueError("coherence retention needs the s level")
    if cfg.Omega_c > 0 and not space.with_r:
        raise ValueError("a control field needs the r level")
    if cfg.tau is None:
        raise ValueError("coherence_retention needs cfg.tau")
    m = -space.I if m is None else m
    psi = np.zeros(space.dim, dtype=complex)
    ig, is_ = space.index("g", 0, m), space.index("s", 0, m)
    psi[[ig, is_]] = 1 / math.sqrt(2)
    v0 = vec(np.outer(psi, psi.conj()))
    if cfg.Omega == 0:
        return RetentionResult(0.0, 1.0)
    ev = PulseEvolution(space, species, cfg)
    v, n_pulse = ev.pulse(v0, cfg.tau)
    v, n_tail = ev.tail(v)
    rho = unvec(v, space.dim)
    # s is dark, so photons come only from the g population of 1/2
    return RetentionResult(2 * species.Gamma * (n_pulse + n_tail), float(2 * abs(rho[ig, is_])))
