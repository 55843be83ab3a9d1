"""
Dense quantum linear algebra shared by the detection and gate engines.

Conventions
-----------
- hbar = 1; operators are dense ``complex128`` arrays.
- Spin bases are ordered with m *descending*: index k <-> m = j - k.
- Density matrices are vectorised by column stacking,
  ``vec(A X B) = (B.T kron A) vec(X)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.csgraph

#: Eigenvector condition number above which :func:`propagator` falls back to expm.
EIG_COND_LIMIT = 1e8
#: Correction sweeps applied to every ``eig`` decomposition.
REFINE_STEPS = 3
#: Modes with ``|Re w|`` below this fraction of the spectral radius are refined.
SLOW_FRACTION = 1e-6


def refine_eig(G, w, v, steps: int | None = None, cond_limit: float = EIG_COND_LIMIT):
    """Sharpen the slow part of an eigen-decomposition ``G v = v diag(w)``.

    Long propagation times amplify eigenvalue errors (``|dw| t``), and plain
    ``eig`` only resolves eigenvalues to about ``eps * max|w|``. For a stiff
    generator that is too coarse for its slow modes, those with
    ``|Re w| <= SLOW_FRACTION * max|w|``.

    The slow invariant subspace ``X`` is corrected by quasi-Newton steps
    ``Lf Z - Z M = -Wf R``, ``X += Vf Z``, where ``R = G X - X M`` is formed
    in extended precision and ``Vf, Lf, Wf`` are the fast eigenpairs. The
    small slow generator ``M`` then has norm of order the slow rates and is
    diagonalised on its own. The input is returned unchanged if ``M`` is not
    diagonalisable within ``cond_limit``.
    """
    steps = REFINE_STEPS if steps is None else steps
    scale = max(np.abs(w).max(initial=0.0), 1.0)
    slow = np.abs(w.real) <= SLOW_FRACTION * scale
    if steps <= 0 or not slow.any() or slow.all():
        return w, v
    G = np.asarray(G, dtype=complex)
    Gl = G.astype(np.clongdouble)
    S, F = np.flatnonzero(slow), np.flatnonzero(~slow)
    inv = np.linalg.inv(v)
    X, Vf, Lf, Wf, Ws = v[:, S], v[:, F], w[F], inv[F], inv[S]
    for _ in range(steps):
        GX = Gl @ X.astype(np.clongdouble)
        M = (Ws.astype(np.clongdouble) @ GX).astype(complex)
        R = (GX - X.astype(np.clongdouble) @ M.astype(np.clongdouble)).astype(complex)
        Z = scipy.linalg.solve_sylvester(np.diag(Lf), -M, -(Wf @ R))
        X = X + Vf @ Z
    V = v.copy()
    V[:, S] = X
    inv = np.linalg.inv(V)
    M = (inv[S].astype(np.clongdouble) @ (Gl @ X.astype(np.clongdouble))).astype(complex)
    mu, sv = np.linalg.eig(M)
    if not np.isfinite(np.linalg.cond(sv)) or np.linalg.cond(sv) > cond_limit:
        return w, v
    w = w.astype(complex).copy()
    w[S] = mu
    V[:, S] = X @ sv
    return w, V


@dataclass(frozen=True)
class SpinOperators:
    j: float
    Jx: np.ndarray
    Jy: np.ndarray
    Jz: np.ndarray

    @property
    def dim(self) -> int:
        return self.Jz.shape[0]

    @property
    def Jp(self) -> np.ndarray:
        return self.Jx + 1j * self.Jy

    @property
    def Jm(self) -> np.ndarray:
        return self.Jx - 1j * self.Jy

    @property
    def m_values(self) -> np.ndarray:
        return self.j - np.arange(self.dim)


def _check_half_integer(j) -> float:
    two_j = Fraction(j).limit_denominator(1000) * 2
    if two_j.denominator != 1 or two_j < 0 or abs(float(two_j) - 2 * float(j)) > 1e-12:
        raise ValueError(f"spin must be a non-negative half-integer, got {j!r}")
    return float(two_j) / 2


def spin_operators(j) -> SpinOperators:
    """Angular momentum matrices for spin ``j`` in the m-descending basis."""
    j = _check_half_integer(j)
    m = j - np.arange(int(round(2 * j)) + 1)
    # <m+1| J+ |m> sits one row above the diagonal in descending order
    jp = np.diag(np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1)), k=1).astype(complex)
    jm = jp.conj().T
    jx = 0.5 * (jp + jm)
    jy = -0.5j * (jp - jm)
    jz = np.diag(m).astype(complex)
    for a in (jx, jy, jz):
        a.setflags(write=False)
    return SpinOperators(j, jx, jy, jz)


def embed_operator(op, index_map, total_dim: int) -> np.ndarray:
    """Place ``op`` on the rows/columns ``index_map`` of a zero ``total_dim`` matrix."""
    op = np.asarray(op, dtype=complex)
    idx = np.asarray(index_map, dtype=int)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ValueError("operator must be square")
    if len(idx) != op.shape[0]:
        raise ValueError(f"index_map has {len(idx)} entries for a {op.shape[0]}-dim operator")
    if len(set(idx.tolist())) != len(idx):
        raise ValueError("index_map is not injective")
    if idx.size and (idx.min() < 0 or idx.max() >= total_dim):
        raise ValueError(f"index_map entry out of range for total_dim={total_dim}")
    out = np.zeros((total_dim, total_dim), dtype=complex)
    out[np.ix_(idx, idx)] = op
    return out


class _Block:
    """exp(G t) for a single irreducible block of the generator."""

    def __init__(self, G, cond_limit):
        self.G = G
        self.dim = G.shape[0]
        self.method = "expm"
        self.cond = np.inf
        scale = max(np.abs(G).max(), 1.0)
        if np.abs(G + G.conj().T).max() <= 1e-14 * scale:
            w, v = np.linalg.eigh(1j * G)
            self.evals, self.evecs, self.inv = -1j * w, v, v.conj().T
            self.method, self.cond = "eigh", 1.0
            return
        w, v = np.linalg.eig(G)
        cond = np.linalg.cond(v)
        if np.isfinite(cond) and cond <= cond_limit:
            w, v = refine_eig(G, w, v, cond_limit=cond_limit)
            self.evals, self.evecs, self.inv = w, v, np.linalg.inv(v)
            self.method, self.cond = "eig", cond

    def matrix(self, t):
        if self.method == "expm":
            return scipy.linalg.expm(self.G * t)
        return (self.evecs * np.exp(self.evals * t)) @ self.inv

    def apply(self, t, v):
        if self.method == "expm":
            return self.matrix(t) @ v
        phase = np.exp(self.evals * t)
        if v.ndim == 2:
            phase = phase[:, None]
        return self.evecs @ (phase * (self.inv @ v))

    def integral(self, t, v):
        if self.method == "expm":
            # Van Loan: expm([[G, v], [0, 0]] t)[:n, n] = int_0^t exp(G s) v ds
            aug = np.zeros((self.dim + 1, self.dim + 1), dtype=complex)
            aug[: self.dim, : self.dim] = self.G
            aug[: self.dim, self.dim] = v
            return scipy.linalg.expm(aug * t)[: self.dim, self.dim]
        lam = self.evals
        z = lam * t
        small = np.abs(z) < 1e-8
        safe = np.where(small, 1.0, lam)
        w = np.where(small, t * (1 + z / 2), np.expm1(z) / safe)
        return self.evecs @ (w * (self.inv @ v))


class Propagator:
    """Reusable ``t -> exp(G t)`` for a fixed generator.

    The generator is first split into the connected components of its
    sparsity graph (conserved quantum numbers make Liouvillians block
    diagonal). Each block is diagonalised once: anti-Hermitian blocks with
    ``eigh``, others with ``eig`` when the eigenvector matrix has condition
    number at most ``cond_limit``; otherwise that block is exponentiated
    with :func:`scipy.linalg.expm` (scaling and squaring, Pade) at every call.
    """

    def __init__(self, G, cond_limit: float = EIG_COND_LIMIT):
        G = np.asarray(G, dtype=complex)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise ValueError("generator must be square")
        if not np.all(np.isfinite(G)):
            raise ValueError("generator has non-finite entries")
        self.G = G
        self.dim = G.shape[0]
        pattern = scipy.sparse.csr_matrix((G != 0) | (G.T != 0))
        n_blocks, labels = scipy.sparse.csgraph.connected_components(pattern, directed=False)
        self.blocks = []
        for b in range(n_blocks):
            idx = np.flatnonzero(labels == b)
            self.blocks.append((idx, _Block(G[np.ix_(idx, idx)], cond_limit)))

    @property
    def method(self) -> str:
        methods = {blk.method for _, blk in self.blocks}
        return methods.pop() if len(methods) == 1 else "mixed"

    @property
    def cond(self) -> float:
        return max(blk.cond for _, blk in self.blocks)

    def __call__(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError("propagation time must be non-negative")
        out = np.zeros_like(self.G)
        for idx, blk in self.blocks:
            out[np.ix_(idx, idx)] = blk.matrix(t)
        return out

    def apply(self, t: float, v) -> np.ndarray:
        """``exp(G t) @ v`` for a vector or a matrix of column vectors."""
        if t < 0:
            raise ValueError("propagation time must be non-negative")
        v = np.asarray(v, dtype=complex)
        out = np.zeros_like(v)
        for idx, blk in self.blocks:
            sub = v[idx]
            if np.any(sub):
                out[idx] = blk.apply(t, sub)
        return out

    def integral(self, t: float, v) -> np.ndarray:
        """``int_0^t exp(G s) v ds`` for a vector ``v``."""
        if t < 0:
            raise ValueError("integration time must be non-negative")
        v = np.asarray(v, dtype=complex)
        out = np.zeros_like(v)
        for idx, blk in self.blocks:
            sub = v[idx]
            if np.any(sub):
                out[idx] = blk.integral(t, sub)
        return out


def propagator(G, t: float) -> np.ndarray:
    """Return ``exp(G t)``."""
    return Propagator(G)(t)


def haar_state(d: int, seed: int) -> np.ndarray:
    """Haar-random unit vector in C^d, reproducible for a fixed ``seed``."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    rng = np.random.Generator(np.random.Philox(seed))
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return z / np.linalg.norm(z)


def haar_states(d: int, n: int, seed: int) -> np.ndarray:
    """``n`` Haar-random states as rows of an ``(n, d)`` array."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    rng = np.random.Generator(np.random.Philox(seed))
    z = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def commutator(a, b):
    return a @ b - b @ a


def dag(a):
    return np.conj(a).T
