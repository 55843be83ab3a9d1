"""Spin algebra, embeddings, propagators and Haar sampling."""

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from aeqreg.qcore import (Propagator, commutator, dag, embed_operator, haar_state, haar_states,
                          propagator, refine_eig, spin_operators)

SPINS = [0.5, 1, 1.5, 3.5, 4.5]


@pytest.mark.parametrize("j", SPINS)
def test_commutation_relations(j):
    s = spin_operators(j)
    np.testing.assert_allclose(commutator(s.Jx, s.Jy), 1j * s.Jz, atol=1e-13)
    np.testing.assert_allclose(commutator(s.Jy, s.Jz), 1j * s.Jx, atol=1e-13)
    np.testing.assert_allclose(commutator(s.Jz, s.Jx), 1j * s.Jy, atol=1e-13)


@pytest.mark.parametrize("j", SPINS)
def test_casimir(j):
    s = spin_operators(j)
    J2 = s.Jx @ s.Jx + s.Jy @ s.Jy + s.Jz @ s.Jz
    np.testing.assert_allclose(J2, j * (j + 1) * np.eye(s.dim), atol=1e-13)


def test_m_descending_and_hermitian():
    s = spin_operators(1.5)
    np.testing.assert_array_equal(np.diag(s.Jz).real, [1.5, 0.5, -0.5, -1.5])
    np.testing.assert_allclose(s.Jx, dag(s.Jx))
    np.testing.assert_allclose(s.Jy, dag(s.Jy))
    # J+ raises m, so in the descending basis it sits above the diagonal
    assert np.allclose(np.tril(s.Jp), 0)
    assert s.Jp[0, 1] == pytest.approx(np.sqrt(3))


def test_trace_jz_squared_spin_nine_halves():
    s = spin_operators(4.5)
    assert np.trace(s.Jz @ s.Jz).real == pytest.approx(82.5, abs=1e-12)


def test_spin_half_is_pauli_over_two():
    s = spin_operators(0.5)
    np.testing.assert_allclose(2 * s.Jx, [[0, 1], [1, 0]])
    np.testing.assert_allclose(2 * s.Jy, [[0, -1j], [1j, 0]])
    np.testing.assert_allclose(2 * s.Jz, [[1, 0], [0, -1]])


@pytest.mark.parametrize("bad", [-0.5, 0.3, 1.25])
def test_rejects_non_half_integer(bad):
    with pytest.raises(ValueError):
        spin_operators(bad)


def test_embed_operator():
    op = np.array([[1, 2], [3, 4]])
    out = embed_operator(op, [3, 1], 4)
    expected = np.zeros((4, 4), dtype=complex)
    expected[3, 3], expected[3, 1], expected[1, 3], expected[1, 1] = 1, 2, 3, 4
    np.testing.assert_array_equal(out, expected)


@pytest.mark.parametrize("op,idx,n", [
    (np.eye(2), [0, 0], 3),
    (np.eye(2), [0, 3], 3),
    (np.eye(2), [0], 3),
    (np.ones((2, 3)), [0, 1], 3),
])
def test_embed_operator_rejects(op, idx, n):
    with pytest.raises(ValueError):
        embed_operator(op, idx, n)


def test_propagator_spin_rotation():
    s = spin_operators(0.5)
    theta = 0.73
    U = propagator(-1j * 2 * s.Jx, theta / 2)
    expected = np.array([[np.cos(theta / 2), -1j * np.sin(theta / 2)],
                         [-1j * np.sin(theta / 2), np.cos(theta / 2)]])
    np.testing.assert_allclose(U, expected, atol=1e-14)


def _random_generator(n, seed, hermitian=False):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    if hermitian:
        return -1j * (A + dag(A)) / 2
    return A - 3 * np.eye(n)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), t=st.floats(0, 2), s=st.floats(0, 2))
def test_semigroup_property(seed, t, s):
    P = Propagator(_random_generator(5, seed))
    np.testing.assert_allclose(P(t) @ P(s), P(t + s), atol=1e-10)


def test_unitary_for_anti_hermitian_generator():
    P = Propagator(_random_generator(6, 1, hermitian=True))
    assert P.method == "eigh"
    U = P(3.1)
    np.testing.assert_allclose(U @ dag(U), np.eye(6), atol=1e-12)


def test_matches_expm():
    G = _random_generator(7, 2)
    np.testing.assert_allclose(propagator(G, 0.8), scipy.linalg.expm(0.8 * G), atol=1e-11)


def test_defective_generator_falls_back_to_expm():
    G = np.array([[0.0, 1.0], [0.0, 0.0]])  # Jordan block
    P = Propagator(G)
    assert P.method == "expm"
    np.testing.assert_allclose(P(2.0), [[1, 2], [0, 1]], atol=1e-14)


def test_block_decomposition_and_integral():
    G = scipy.linalg.block_diag(_random_generator(3, 3), _random_generator(2, 4))
    P = Propagator(G)
    assert len(P.blocks) == 2
    np.testing.assert_allclose(P(0.5), scipy.linalg.expm(0.5 * G), atol=1e-11)
    v = np.arange(5, dtype=complex) + 1
    ts = np.linspace(0, 0.9, 2001)
    quad = np.trapezoid([scipy.linalg.expm(t * G) @ v for t in ts], ts, axis=0)
    np.testing.assert_allclose(P.integral(0.9, v), quad, rtol=1e-5)


def _off_resonant_qubit():
    """Decaying qubit driven 6 GHz off resonance: slow rates ~1e4/s, fast ~4e10/s."""
    delta, omega, gamma = 2 * np.pi * 6e9, 2 * np.pi * 7e7, 2 * np.pi * 2e7
    H = np.array([[0, omega], [omega, -delta]], dtype=complex)
    c = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    eye, cc = np.eye(2), c.conj().T @ c
    return (-1j * (np.kron(eye, H) - np.kron(H.T, eye)) + np.kron(c.conj(), c)
            - 0.5 * np.kron(eye, cc) - 0.5 * np.kron(cc.T, eye))


def test_stiff_generator_keeps_trace_over_long_times():
    G = _off_resonant_qubit()
    vec_id = np.eye(2).reshape(-1, order="F")
    P = Propagator(G)
    for t in (1e-6, 3e-3, 1.0):
        assert np.abs(vec_id @ P(t) - vec_id).max() <= 1e-12


def test_refine_eig_sharpens_slow_eigenvalues():
    G = _off_resonant_qubit()
    w, v = np.linalg.eig(G)
    w2, v2 = refine_eig(G, w, v)
    # the steady state has eigenvalue exactly zero; plain eig resolves it to ~eps |G|
    k = np.argmin(np.abs(w2))
    assert abs(w2[k]) <= 1e-15
    np.testing.assert_allclose(np.delete(w2, k), np.delete(w, k), rtol=1e-12)
    rho = v2[:, k].reshape(2, 2, order="F")
    rho = rho / np.trace(rho)
    assert np.abs(rho - rho.conj().T).max() <= 1e-12
    w3, v3 = refine_eig(G, w, v, steps=0)
    assert w3 is w and v3 is v


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        Propagator(np.eye(2))(-1.0)


def test_haar_states_normalised_and_reproducible():
    a = haar_states(4, 100, seed=7)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1, atol=1e-14)
    np.testing.assert_array_equal(a, haar_states(4, 100, seed=7))
    np.testing.assert_array_equal(haar_state(3, 5), haar_state(3, 5))


def test_haar_mean_overlap():
    d = 5
    psi = haar_states(d, 20000, seed=1)
    # E|<0|psi>|^2 = 1/d
    assert np.mean(np.abs(psi[:, 0]) ** 2) == pytest.approx(1 / d, abs=0.005)
