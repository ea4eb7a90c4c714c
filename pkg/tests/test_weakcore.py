import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsd import qmat
from rsd.qmat import SIGMA_X, SIGMA_Z
from rsd.states import bell_diagonal, mub_b0, pure, random_mixed, random_product, random_pure, singlet, werner
from rsd.weakcore import (
    CouplingSpec,
    PostSelection,
    VanishingDenominatorError,
    WeakValueRecord,
    bob_expectation_im,
    bob_expectation_re,
    bob_state_set1,
    bob_state_set2,
    exact_weak_value,
    resource_terms,
    total_state_exact,
    total_state_first_order,
    weak_partial_value,
)

from conftest import random_two_qubit

PLUS = mub_b0(2).projector()
P0, P1 = qmat.basis_projector(2, 0), qmat.basis_projector(2, 1)
N_AX = np.array([1.0, 0.0, 0.0])
M_AX = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
A_OBS, B_OBS = qmat.pauli_dot(N_AX), qmat.pauli_dot(M_AX)


def coupling(k=0, d=2, g=0.01, A=A_OBS):
    return CouplingSpec(k, qmat.basis_projector(d, k), A, g)


def test_exact_weak_value_worked_example():
    psi = pure([1, 1j], normalize=True)
    assert exact_weak_value(P0, PLUS, psi.density()) == pytest.approx(0.5 - 0.5j, abs=1e-15)


def test_identity_weak_value():
    for seed in range(100):
        rho = random_mixed(3, seed)
        pv = random_pure(3, 1000 + seed).projector()
        assert abs(exact_weak_value(np.eye(3), pv, rho) - 1) <= 1e-12


@pytest.mark.parametrize("d", [2, 3, 4, 8])
def test_weak_values_complete(d):
    for seed in range(5):
        rho = random_pure(d, seed).density()
        pv = mub_b0(d).projector()
        total = sum(exact_weak_value(qmat.basis_projector(d, k), pv, rho) for k in range(d))
        assert abs(total - 1) <= 1e-12


def test_exact_weak_value_vanishing():
    with pytest.raises(VanishingDenominatorError):
        exact_weak_value(P0, P1, P0)


def test_weak_partial_value_product():
    ra, rb = random_mixed(2, 1), random_mixed(2, 2)
    from rsd.states import product

    rho = product(ra, rb)
    expect = qmat.expectation(P1 @ SIGMA_X, ra.mat) / qmat.expectation(P1, ra.mat)
    assert weak_partial_value(SIGMA_X, P1, rho) == pytest.approx(expect, abs=1e-14)


def test_weak_partial_value_singlet_and_identity():
    # rho_A = I/2 for the singlet, so <1|sigma_x|1> = 0
    assert weak_partial_value(SIGMA_X, P1, singlet()) == pytest.approx(0, abs=1e-15)
    assert weak_partial_value(np.eye(2), P1, random_two_qubit(3)) == pytest.approx(1, abs=1e-14)


def test_weak_partial_value_bell_diagonal():
    n = np.array([0.6, 0.0, 0.8])
    rho = bell_diagonal(-0.3, 0.2, -0.5)
    assert weak_partial_value(qmat.pauli_dot(n), P1, rho) == pytest.approx(-n[2], abs=1e-14)


def test_coupling_validation():
    with pytest.raises(ValueError):
        CouplingSpec(0, np.eye(2), A_OBS, 0.1)
    with pytest.raises(ValueError):
        CouplingSpec(0, P0, np.array([[0, 1], [0, 0]]), 0.1)
    with pytest.raises(ValueError):
        CouplingSpec(0, P0, A_OBS, 0.0)


def test_postselection_noncommuting():
    PostSelection(PLUS, P1).check_noncommuting(SIGMA_X)
    with pytest.raises(ValueError):
        PostSelection(PLUS, P1).check_noncommuting(SIGMA_Z)


def test_weak_value_record():
    with pytest.raises(ValueError):
        WeakValueRecord(0, 1j, "inverted-sampled")
    rec = WeakValueRecord(1, 0.5 - 0.25j, "inverted-sampled", (0.1, 0.2))
    assert rec.to_json() == {"k": 1, "re": 0.5, "im": -0.25, "re_err": 0.1, "im_err": 0.2}


def test_first_order_trace_and_g_zero_limit():
    rho_I = random_pure(2, 0).density()
    rho = random_two_qubit(1)
    tw = total_state_first_order(rho_I, rho, coupling(g=1e-300))
    assert np.allclose(tw.mat, qmat.tensor(rho_I.mat, rho.mat), atol=1e-15)
    for seed in range(10):
        tw = total_state_first_order(random_pure(3, seed).density(), random_two_qubit(seed), coupling(1, 3, 0.2))
        assert abs(np.trace(tw.mat) - 1) <= 1e-13
        assert tw.perturbative


def test_first_order_vs_exact_scaling():
    rho_I = random_pure(2, 5).density()
    rho = random_two_qubit(6)
    gaps = []
    for g in (0.1, 0.05, 0.025):
        c = coupling(0, 2, g)
        gap = qmat.max_abs(total_state_first_order(rho_I, rho, c).mat - total_state_exact(rho_I, rho, c).mat)
        assert gap <= 2 * g**2
        gaps.append(gap)
    for a, b in zip(gaps, gaps[1:]):
        assert 3.5 <= a / b <= 4.5


def test_exact_preserves_purity():
    rho_I = random_pure(3, 2).density()
    rho = werner(0.6)
    tw = total_state_exact(rho_I, rho, coupling(2, 3, 0.3))
    assert tw.purity == pytest.approx(rho_I.purity * rho.purity, abs=1e-10)
    assert tw.min_eigenvalue > -1e-12


def test_dimension_mismatch():
    with pytest.raises(qmat.DimensionError):
        total_state_first_order(random_pure(3, 0).density(), werner(0.5), coupling(0, 2))


def test_bob_states_product_resource_is_inert():
    for seed in range(10):
        rho = random_product(seed)
        rho_b = rho.reduced([1]).mat
        tw = total_state_first_order(random_pure(2, seed).density(), rho, coupling(seed % 2, 2, 0.05))
        b1, _ = bob_state_set1(tw, PLUS)
        b2, _ = bob_state_set2(tw, PLUS, P1)
        assert qmat.max_abs(b1 - rho_b) <= 1e-12
        assert qmat.max_abs(b2 - rho_b) <= 1e-12


def test_bob_states_g_zero():
    rho = random_two_qubit(4)
    tw = total_state_first_order(random_pure(2, 1).density(), rho, coupling(g=1e-300))
    b1, _ = bob_state_set1(tw, PLUS)
    assert np.allclose(b1, rho.reduced([1]).mat, atol=1e-14)
    b2, _ = bob_state_set2(tw, PLUS, P1)
    cond = qmat.partial_trace(qmat.tensor(P1, np.eye(2)) @ rho.mat, (2, 2), keep=[1])
    assert np.allclose(b2, cond / np.trace(cond), atol=1e-14)


def test_bob_state_singlet_shift_is_traceless_first_order():
    rho = singlet()
    rho_b = rho.reduced([1]).mat
    psi = random_pure(2, 3).density()
    shifts = []
    for g in (0.02, 0.01):
        tw = total_state_first_order(psi, rho, coupling(0, 2, g))
        b1, _ = bob_state_set1(tw, PLUS)
        assert abs(np.trace(b1 - rho_b)) < 1e-14
        shifts.append(qmat.max_abs(b1 - rho_b))
    assert shifts[0] > 0
    assert shifts[0] / shifts[1] == pytest.approx(2, rel=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_set2_probability_is_half_of_set1(seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(-0.3, 0.3, 3)
    rho = bell_diagonal(*c)
    tw = total_state_first_order(random_pure(2, seed).density(), rho, coupling(seed % 2, 2, 0.05))
    _, p1 = bob_state_set1(tw, PLUS)
    _, p2 = bob_state_set2(tw, PLUS, P1)
    assert p2 == pytest.approx(p1 / 2, abs=1e-13)


def test_vanishing_postselection():
    tw = total_state_first_order(P0, werner(0.5), coupling(0, 2, 0.01))
    with pytest.raises(VanishingDenominatorError):
        bob_state_set1(tw, P1)


def test_im_closed_form_real_weak_value():
    rho = random_two_qubit(8)
    psi = pure([1, 1], normalize=True).density()  # both weak values real (1/2)
    t = resource_terms(rho, A_OBS, B_OBS, P1)
    assert bob_expectation_im(B_OBS, psi, rho, coupling(0), PLUS) == pytest.approx(t.b_in, abs=1e-15)


def test_im_closed_form_bell_diagonal():
    c = np.array([-0.5, -0.2, 0.1])
    rho = bell_diagonal(*c)
    psi = random_pure(2, 11).density()
    g = 0.01
    w = exact_weak_value(P0, PLUS, psi)
    expect = 2 * g * w.imag * (-np.sum(M_AX * N_AX * c))
    assert bob_expectation_im(B_OBS, psi, rho, coupling(0, 2, g), PLUS) == pytest.approx(expect, abs=1e-15)


def test_re_closed_form_g_zero_limit():
    rho = random_two_qubit(9)
    t = resource_terms(rho, A_OBS, B_OBS, P1)
    val = bob_expectation_re(B_OBS, random_pure(2, 2).density(), rho, coupling(0, 2, 1e-300), PLUS, P1)
    assert val == pytest.approx(t.t_b / t.q, abs=1e-14)


def test_re_closed_form_bell_diagonal():
    # hand-evaluated traces for (1/4)[I + sum c_i s_i s_i] with pi_l = |1><1|:
    # q = 1/2, T_B = -m3 c3 / 2 = 0 in-plane, (A)_w' = -n3 = 0,
    # i T_comm = -D with D = c1 m1 n2 - c2 m2 n1, T_anti = sum c_i n_i m_i
    c = np.array([-0.5, -0.2, 0.1])
    rho = bell_diagonal(*c)
    psi = random_pure(2, 12).density()
    g = 0.01
    w = exact_weak_value(P1, PLUS, psi)
    D = c[0] * M_AX[0] * N_AX[1] - c[1] * M_AX[1] * N_AX[0]
    anti = np.sum(c * N_AX * M_AX)
    t = resource_terms(rho, A_OBS, B_OBS, P1)
    assert t.q == pytest.approx(0.5, abs=1e-15)
    assert (1j * t.t_comm).real == pytest.approx(-D, abs=1e-15)
    assert t.t_anti == pytest.approx(anti, abs=1e-15)
    expect = (-g * w.real * D - g * w.imag * anti) / 0.5
    got = bob_expectation_re(B_OBS, psi, rho, coupling(1, 2, g), PLUS, P1)
    assert got == pytest.approx(expect, abs=1e-15)


def _numeric(rho, psi, c, B, set_id):
    tw = total_state_first_order(psi, rho, c)
    rb = bob_state_set1(tw, PLUS)[0] if set_id == 1 else bob_state_set2(tw, PLUS, P1)[0]
    return qmat.expectation(B, rb).real


@pytest.mark.parametrize("seed", range(8))
def test_closed_forms_match_numeric_route(seed):
    g = 0.02
    rho = random_two_qubit(100 + seed)
    psi = random_pure(2, seed).density()
    for k in (0, 1):
        c = coupling(k, 2, g)
        im = bob_expectation_im(B_OBS, psi, rho, c, PLUS)
        re = bob_expectation_re(B_OBS, psi, rho, c, PLUS, P1)
        assert abs(im - _numeric(rho, psi, c, B_OBS, 1)) <= 5 * g**2
        assert abs(re - _numeric(rho, psi, c, B_OBS, 2)) <= 5 * g**2


def test_flipped_anticommutator_sign_is_first_order_wrong():
    rho = random_two_qubit(202)
    psi = random_pure(2, 4).density()
    errs = {"corrected": [], "flipped": []}
    for g in (0.02, 0.01):
        c = coupling(0, 2, g)
        ref = _numeric(rho, psi, c, B_OBS, 2)
        for v in errs:
            errs[v].append(abs(bob_expectation_re(B_OBS, psi, rho, c, PLUS, P1, variant=v) - ref))
    assert errs["corrected"][0] / errs["corrected"][1] == pytest.approx(4, rel=0.05)
    assert errs["flipped"][0] / errs["flipped"][1] == pytest.approx(2, rel=0.05)


def test_joint_trace_variant_differs():
    rho = random_two_qubit(5)
    t = resource_terms(rho, A_OBS, B_OBS, P1)
    M_joint = qmat.partial_trace(qmat.tensor(A_OBS, B_OBS) @ rho.mat, (2, 2), keep=[1])
    assert t.trace_BM_joint == pytest.approx(qmat.expectation(B_OBS, M_joint))
    assert abs(t.trace_BM_joint - t.trace_BM) > 1e-3


def test_reality_check_rejects_non_hermitian_b():
    rho = random_two_qubit(7)
    with pytest.raises(ValueError, match="imaginary"):
        bob_expectation_im(np.array([[0, 1], [0, 0]]), random_pure(2, 1).density(), rho, coupling(0, 2, 0.1), PLUS)


@given(st.integers(0, 10_000), st.integers(0, 1), st.floats(1e-4, 0.2))
@settings(max_examples=40, deadline=None)
def test_expectations_are_real(seed, k, g):
    rho = random_two_qubit(seed)
    psi = random_pure(2, seed + 1).density()
    c = coupling(k, 2, g)
    t = resource_terms(rho, A_OBS, B_OBS, P1)
    assert abs(t.t_comm.real) < 1e-12
    assert np.isfinite(bob_expectation_im(B_OBS, psi, rho, c, PLUS))
    assert np.isfinite(bob_expectation_re(B_OBS, psi, rho, c, PLUS, P1))
