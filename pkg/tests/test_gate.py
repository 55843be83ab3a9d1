"""Fermionic Fock machinery, the two-well Hubbard model and the phase-gate protocol."""

import itertools
import math

import numpy as np
import pytest

from aeqreg.fermions import (apply_string, creation_matrix, operator_matrix, permutation_matrix,
                             sector_states)
from aeqreg.gate import (BlockadeWarning, GateEngine, GateSchedule, TwoWellParams,
                         bias_pulse_analysis, blockade_scaling, build_hubbard, hubbard_terms,
                         local_unitaries, run_gate_protocol, two_particle_basis)

# ------------------------------------------------------------------ fermions


def test_sector_sizes():
    assert two_particle_basis(0.5).dim == 28
    assert two_particle_basis(4.5).dim == 780
    assert len(sector_states(6, 3)) == math.comb(6, 3)


def test_creation_order_antisymmetry():
    s1, a = apply_string([("+", 1), ("+", 4)], 0)
    s2, b = apply_string([("+", 4), ("+", 1)], 0)
    assert a == b and s1 == -s2


def test_double_creation_vanishes():
    assert apply_string([("+", 2), ("+", 2)], 0) == (0, 0)
    assert apply_string([("-", 3)], 0b0101) == (0, 0)


def _full_ops(n):
    """c_a^dag on the full Fock space of n modes."""
    states = list(range(2**n))
    return [operator_matrix([(1.0, [("+", a)])], states) for a in range(n)]


def test_canonical_anticommutation_exact():
    n = 4
    cd = _full_ops(n)
    c = [op.conj().T for op in cd]
    eye = np.eye(2**n)
    for a, b in itertools.product(range(n), repeat=2):
        np.testing.assert_array_equal(cd[a] @ c[b] + c[b] @ cd[a], eye * (a == b))
        np.testing.assert_array_equal(cd[a] @ cd[b] + cd[b] @ cd[a], 0 * eye)


def test_sector_creation_matches_full_space():
    n, N = 5, 2
    sub = creation_matrix(3, n, N)
    full = _full_ops(n)[3]
    rows, cols = sector_states(n, N + 1), sector_states(n, N)
    np.testing.assert_array_equal(sub, full[np.ix_(rows, cols)])


def test_permutation_matrix_sign():
    # swapping modes 0 and 1 flips the sign of c0^dag c1^dag |0>
    states = sector_states(3, 2)
    X = permutation_matrix([1, 0, 2], states)
    k = states.index(0b011)
    assert X[k, k] == -1
    np.testing.assert_array_equal(X @ X, np.eye(len(states)))


# ------------------------------------------------------------------- Hubbard


def _params(I=0.5, **kw):
    base = dict(I=I, J=1.0, U_gg=40.0, U_ss=0.0, V=0.0, V_ex=0.0)
    return TwoWellParams(**{**base, **kw})


def test_hubbard_hermitian_and_number_conserving():
    b = two_particle_basis(1.5)
    H = build_hubbard(b, _params(1.5, U_ss=13, V=7, V_ex=2, B=2.0, g_g=0.3, g_s=-0.2), 5.0)
    np.testing.assert_allclose(H, H.conj().T, atol=0)
    # total m is conserved by every term
    mz = np.array([sum(b.modes[a].m for a in b.occupied(s)) for s in b.states])
    np.testing.assert_allclose(H * (mz[:, None] - mz[None, :]), 0, atol=0)


def test_pauli_blocks_symmetric_pair():
    b = two_particle_basis(0.5)
    H = build_hubbard(b, _params(), 7.0)
    m = 0.5
    k = b.pair_index("g", m, "g", m)
    assert H[k, k] == pytest.approx(7.0)
    doubles = [i for i, s in enumerate(b.states)
               if {b.modes[a].site for a in b.occupied(s)} != {"L", "R"}]
    assert not np.any(H[doubles, k])


def test_antisymmetric_pair_coupling_sqrt2_j():
    b = two_particle_basis(1.5)
    H = build_hubbard(b, _params(1.5, J=0.7), 0.0)
    m1, m2 = 0.5, -1.5
    v = np.zeros(b.dim)
    v[b.pair_index("g", m2, "g", m1)] = 1 / math.sqrt(2)
    v[b.pair_index("g", m1, "g", m2)] = -1 / math.sqrt(2)
    dl = b.index[b.state_of(b.mode("L", "g", m1), b.mode("L", "g", m2))]
    dr = b.index[b.state_of(b.mode("R", "g", m1), b.mode("R", "g", m2))]
    assert abs(H[dl] @ v) == pytest.approx(math.sqrt(2) * 0.7, rel=1e-14)
    assert abs(H[dr] @ v) == pytest.approx(math.sqrt(2) * 0.7, rel=1e-14)


def test_single_particle_eigenvalues():
    b = two_particle_basis(0.5)
    one = sector_states(b.n_modes, 1)
    H = operator_matrix(hubbard_terms(b, _params(J=1.3), 0.0), one)
    g = [k for k, s in enumerate(one) if b.modes[s.bit_length() - 1].orbital == "g"]
    w = np.linalg.eigvalsh(H[np.ix_(g, g)])
    np.testing.assert_allclose(w, [-1.3, -1.3, 1.3, 1.3], atol=1e-14)


def test_local_unitaries():
    b = two_particle_basis(1.5)
    loc = local_unitaries(b)
    eye = np.eye(b.dim)
    np.testing.assert_array_equal(loc["P"] @ loc["P"], eye)
    np.testing.assert_array_equal(loc["X"] @ loc["X"], eye)
    k = b.pair_index("g", 1.5, "g", -0.5)  # no R g atom with m > 0
    assert loc["P"][k, k] == 1
    k = b.pair_index("s", 1.5, "g", 0.5)
    assert loc["P"][k, k] == -1
    src = b.pair_index("s", 0.5, "g", 1.5)
    dst = b.pair_index("s", 0.5, "g", -1.5)
    assert abs(loc["X"][dst, src]) == 1


def test_bad_schedule_token():
    with pytest.raises(ValueError, match="undefined schedule token"):
        GateSchedule(("BIAS", "WAIT"))


# ------------------------------------------------------------------ protocol


def test_protocol_unitary():
    eng = GateEngine(TwoWellParams.scenario(1.5, 40))
    U = eng.unitary(GateSchedule.default())
    np.testing.assert_allclose(U @ U.conj().T, np.eye(eng.basis.dim), atol=1e-10)


@pytest.mark.parametrize("I", [0.5, 1.5])
def test_gate_phases(I):
    rep = run_gate_protocol(TwoWellParams.scenario(I, 40))
    gg = rep.group_phases("gg")
    assert len(gg) == (2 * I + 1) ** 2
    assert np.all(np.abs(np.abs(gg) - math.pi) <= 0.1)
    for pair in ("gs", "sg", "ss"):
        assert np.all(np.abs(rep.group_phases(pair)) <= 0.1)
    assert rep.infidelity <= 5e-3
    assert rep.leakage <= 10 / 40**2


def test_reference_independence():
    eng = GateEngine(TwoWellParams.scenario(1.5, 1000))
    a = eng.report(reference_m=-1.5)
    b = eng.report(reference_m=0.5)
    for k in a.phases:
        d = (a.phases[k] - b.phases[k] + math.pi) % (2 * math.pi) - math.pi
        assert abs(d) <= 1e-9
    assert np.all(np.abs(a.group_phases("ss")) <= 1e-9)


def test_zeeman_rotates_out():
    ratio = 200
    kw = dict(g_g=-0.3, g_s=-0.3)
    ref = GateEngine(TwoWellParams.scenario(1.5, ratio, **kw)).report()
    hot = GateEngine(TwoWellParams.scenario(1.5, ratio, B=5.0, **kw)).report(
        rotate_out_zeeman=True)
    tol = (1 / ratio) ** 2 + 0.01
    for k, phi in ref.phases.items():
        d = (hot.phases[k] - phi + math.pi) % (2 * math.pi) - math.pi
        assert abs(d) <= tol, k


def test_truncated_single_bias():
    params = TwoWellParams.scenario(1.5, 1000)
    an = bias_pulse_analysis(params)
    assert np.all(np.abs(np.abs(an.antisymmetric_phases) - math.pi) <= 0.05)
    assert np.all(np.abs(an.symmetric_phases) <= 0.05)
    assert np.all(np.abs(an.diagonal_phases) <= 0.05)
    assert an.swap_error <= 1e-2


def test_single_bias_schedule_matches_analysis():
    params = TwoWellParams.scenario(0.5, 40)
    rep = GateEngine(params).report(GateSchedule(("BIAS",)))
    # |g,s> and |s,s> states do not tunnel resonantly
    assert rep.leakage <= 0.05
    assert len(rep.phases) == 16


def test_blockade_scaling_quadratic():
    rows, slope = blockade_scaling(0.5, [10, 20, 40, 80])
    eps = [r[1] for r in rows]
    assert all(a > b for a, b in zip(eps, eps[1:]))
    assert slope == pytest.approx(2.0, abs=0.3)
    assert eps[2] / eps[3] == pytest.approx(4.0, rel=0.3)


def test_blockade_warning_for_near_resonant_multiples():
    params = TwoWellParams.scenario(0.5, 40, (1.3, 0.7, 0.2))
    assert params.blockade_margin == pytest.approx(4.0)
    with pytest.warns(BlockadeWarning):
        run_gate_protocol(params)


def test_ratios_below_ten_rejected():
    with pytest.raises(ValueError):
        blockade_scaling(0.5, [5, 40])
