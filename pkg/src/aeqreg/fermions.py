"""Occupation-number machinery for a handful of fermionic modes.

States are integer bitmasks; bit ``a`` set means mode ``a`` is occupied.
Creation operators follow the ordering convention

    c_a^dag |n> = (-1)^(sum_{b<a} n_b) |n + e_a>,

so the basis state with occupied modes a1 < a2 < ... equals
``c_a1^dag c_a2^dag ... |0>``.
"""

from __future__ import annotations

import itertools
from collections.abc import Iterable, Sequence

import numpy as np

# an operator string is applied right to left: [("+", a), ("-", b)] = c_a^dag c_b
OpString = Sequence[tuple[str, int]]


def _parity_below(state: int, mode: int) -> int:
    return -1 if bin(state & ((1 << mode) - 1)).count("1") % 2 else 1


def apply_string(ops: OpString, state: int) -> tuple[int, int]:
    """Apply an operator string to a basis state; returns (sign, new state), sign 0 if annihilated."""
    sign = 1
    for kind, mode in reversed(ops):
        bit = 1 << mode
        if kind == "+":
            if state & bit:
                return 0, 0
            sign *= _parity_below(state, mode)
            state |= bit
        elif kind == "-":
            if not state & bit:
                return 0, 0
            sign *= _parity_below(state, mode)
            state &= ~bit
        else:
            raise ValueError(f"unknown operator kind {kind!r}")
    return sign, state


def sector_states(n_modes: int, n_particles: int) -> list[int]:
    """Bitmasks with ``n_particles`` set bits, ordered lexicographically by occupied modes."""
    return [sum(1 << a for a in occ) for occ in itertools.combinations(range(n_modes), n_particles)]


def operator_matrix(terms: Iterable[tuple[complex, OpString]], states_in: Sequence[int],
                    states_out: Sequence[int] | None = None) -> np.ndarray:
    """Dense matrix of ``sum coef * string`` between two lists of basis states."""
    states_out = states_in if states_out is None else states_out
    index = {s: k for k, s in enumerate(states_out)}
    out = np.zeros((len(states_out), len(states_in)), dtype=complex)
    terms = list(terms)
    for col, s in enumerate(states_in):
        for coef, ops in terms:
            sign, new = apply_string(ops, s)
            if sign:
                row = index.get(new)
                if row is None:
                    raise ValueError("operator leaves the target state list")
                out[row, col] += sign * coef
    return out


def creation_matrix(mode: int, n_modes: int, n_particles: int) -> np.ndarray:
    """c_mode^dag from the N-particle sector to the (N+1)-particle sector."""
    return operator_matrix([(1.0, [("+", mode)])], sector_states(n_modes, n_particles),
                           sector_states(n_modes, n_particles + 1))


def permutation_matrix(perm: Sequence[int], states: Sequence[int]) -> np.ndarray:
    """Lift the mode map ``c_a^dag -> c_perm[a]^dag`` to the given basis states."""
    index = {s: k for k, s in enumerate(states)}
    out = np.zeros((len(states), len(states)))
    for col, s in enumerate(states):
        occ = [a for a in range(len(perm)) if s >> a & 1]
        image = [perm[a] for a in occ]
        # sign of the permutation that sorts the images into canonical order
        inversions = sum(1 for i in range(len(image)) for j in range(i + 1, len(image))
                         if image[i] > image[j])
        new = sum(1 << b for b in image)
        out[index[new], col] = -1.0 if inversions % 2 else 1.0
    return out
