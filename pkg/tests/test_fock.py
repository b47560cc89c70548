import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from cvqkd_relay import fock
from cvqkd_relay.gaussian import thermal_loss_cm, tmsv_cm

PI_ROTATION = np.diag([1.0, 1.0, -1.0, -1.0])  # relates the two TMSV sign conventions


def ladder(d):
    return np.diag(np.sqrt(np.arange(1, d)), 1)


def bs_unitary(t, d):
    """Oracle: exp(theta (a^dag b - a b^dag)), cos^2 theta = T, on a two-mode truncated space."""
    a = np.kron(ladder(d), np.eye(d))
    b = np.kron(np.eye(d), ladder(d))
    theta = np.arccos(np.sqrt(t))
    return expm(theta * (a.conj().T @ b - a @ b.conj().T))


def test_fock_state_and_vacuum():
    k = fock.fock_state([1, 0], cutoff=3)
    assert k.dims == (4, 4) and k.norm == pytest.approx(1.0)
    assert fock.vacuum(2, 2).amplitudes[0, 0] == 1
    with pytest.raises(ValueError):
        fock.fock_state([5], cutoff=3)


def test_tensor_of_mixtures_is_kronecker():
    a = fock.from_density_matrix(np.diag([0.7, 0.3]), [2])
    b = fock.from_density_matrix(np.diag([0.1, 0.5, 0.4]), [3])
    ab = fock.tensor(a, b)
    assert np.allclose(ab.density_matrix(), np.kron(a.density_matrix(), b.density_matrix()))
    k = fock.tensor(fock.fock_state([1], 2), fock.fock_state([0], 2))
    assert isinstance(k, fock.FockKet) and k.dims == (3, 3)


@given(st.floats(0.0, 1.0), st.integers(3, 12))
def test_tmsv_norm_and_leakage(r, c):
    k = fock.tmsv_ket(r, c)
    assert k.norm ** 2 + k.leakage == pytest.approx(1.0, abs=1e-12)


def test_tmsv_cm_matches_gaussian_up_to_pi_rotation():
    cm = fock.extract_cm(fock.tmsv_ket(0.5, 30)).matrix
    assert np.allclose(PI_ROTATION @ cm @ PI_ROTATION, tmsv_cm(0.5).matrix, atol=1e-9)


# -- beamsplitters ------------------------------------------------------------

def test_hom_dip_exact():
    out = fock.apply_beamsplitter(fock.fock_state([1, 1], 2), 0, 1, 0.5)
    amp = out.amplitudes
    assert abs(amp[1, 1]) < 1e-15
    assert amp[2, 0] == pytest.approx(1 / np.sqrt(2))
    assert amp[0, 2] == pytest.approx(-1 / np.sqrt(2))


def test_c3_single_photon_sign():
    out = fock.apply_beamsplitter(fock.fock_state([1, 0], 1), 0, 1, 0.5, "c3").amplitudes
    assert np.allclose([out[1, 0], out[0, 1]], [1 / np.sqrt(2), -1 / np.sqrt(2)])


@settings(max_examples=30)
@given(st.floats(0.0, 1.0), st.integers(0, 2 ** 31 - 1))
def test_beamsplitter_matches_exponential(t, seed):
    # photon number is conserved, so sectors with n <= d-1 total photons are exact in both
    d = 4
    rng = np.random.default_rng(seed)
    psi = np.zeros((d, d), dtype=complex)
    for m in range(d):
        for n in range(d - m):
            psi[m, n] = rng.normal() + 1j * rng.normal()
    psi /= np.linalg.norm(psi)
    got = fock.apply_beamsplitter(fock.FockKet(psi), 0, 1, t).amplitudes
    ref = (bs_unitary(t, d) @ psi.reshape(-1)).reshape(d, d)
    assert np.allclose(got, ref, atol=1e-12)


def test_c4_inverts_c3():
    psi = fock.tmsv_ket(0.4, 4)
    there = fock.apply_beamsplitter(psi, 0, 1, 0.3, "c3", expand=True)
    back = fock.apply_beamsplitter(there, 0, 1, 0.3, "c4")
    assert np.allclose(back.amplitudes[:5, :5], psi.amplitudes, atol=1e-12)


def test_expand_is_lossless_and_truncation_warns():
    psi = fock.fock_state([2, 2], 2)
    out = fock.apply_beamsplitter(psi, 0, 1, 0.5, expand=True)
    assert out.norm == pytest.approx(1.0) and out.leakage == 0.0
    with pytest.warns(fock.CutoffLeakageWarning):
        cut = fock.apply_beamsplitter(psi, 0, 1, 0.5)
    assert cut.norm ** 2 + cut.leakage == pytest.approx(1.0)


def test_phase_shift():
    psi = fock.FockKet(np.array([1, 1, 1], dtype=complex) / np.sqrt(3))
    out = fock.apply_phase_shift(psi, 0, 0.3).amplitudes
    assert np.allclose(out, np.exp(0.3j * np.arange(3)) / np.sqrt(3))


# -- Kraus channel ------------------------------------------------------------

@given(st.floats(0.01, 1.0), st.floats(0.0, 0.2))
def test_kraus_parameters(eta, eps):
    ch = fock.make_kraus_channel(eta, eps, 6)
    assert ch.tau * ch.gain == pytest.approx(eta, rel=1e-12)
    assert ch.gain == pytest.approx(eta * eps / 2 + 1)


@pytest.mark.parametrize("eta,eps", [(0.3, 0.02), (0.9, 0.2), (1e-3, 0.02), (1.0, 0.0)])
def test_thermal_channel_on_vacuum(eta, eps):
    ch = fock.make_kraus_channel(eta, eps, 6)
    out = fock.apply_channel(fock.vacuum(1, 6), ch, 0)
    assert fock.mean_photon_number(out, 0) == pytest.approx(eta * eps / 2, abs=1e-6)


def test_kraus_completeness_on_low_photon_sector():
    ch = fock.make_kraus_channel(0.4, 0.1, 8)
    ops = ch.operators(9)
    s = sum(op.conj().T @ op for op in ops)
    assert np.allclose(s[:5, :5], np.eye(5), atol=1e-7)


def test_pure_loss_on_single_photon():
    ch = fock.make_kraus_channel(0.3, 0.0, 3)
    out = fock.apply_channel(fock.fock_state([1], 3), ch, 0)
    assert np.allclose(np.diag(out.density_matrix()).real[:2], [0.7, 0.3])


def test_channel_cm_matches_gaussian():
    r, eta, eps = 0.4, 0.5, 0.05
    ch = fock.make_kraus_channel(eta, eps, 12)
    out = fock.apply_channel(fock.tmsv_ket(r, 12), ch, 1)
    cm = PI_ROTATION @ fock.extract_cm(out).matrix @ PI_ROTATION
    assert np.allclose(cm, thermal_loss_cm(tmsv_cm(r), eta, eps).matrix, atol=1e-5)


@pytest.mark.filterwarnings("ignore::cvqkd_relay.fock.CutoffLeakageWarning")
def test_branch_cap_and_pruning():
    ch = fock.make_kraus_channel(0.5, 0.5, 4)
    state = fock.tmsv_ket(0.5, 4)
    with pytest.raises(fock.BranchLimitError):
        fock.apply_channel(state, ch, 1, max_branches=2)
    out = fock.apply_channel(state, ch, 1, max_branches=2, prune=True)
    assert out.n_branches == 2 and out.pruned > 0


@pytest.mark.filterwarnings("ignore::cvqkd_relay.fock.CutoffLeakageWarning")
def test_merge_preserves_density_matrix():
    ch = fock.make_kraus_channel(0.5, 0.1, 4)
    mix = fock.apply_channel(fock.tmsv_ket(0.5, 4), ch, 1)
    merged = fock.merge_branches(mix)
    assert merged.n_branches <= 25
    assert np.allclose(merged.density_matrix(), mix.density_matrix(), atol=1e-13)


# -- measurement and reduction -------------------------------------------------

def test_project_and_herald_probability():
    psi = fock.apply_beamsplitter(fock.fock_state([1, 0], 1), 0, 1, 0.3)
    out, p = fock.project(psi, 1, 0)
    assert p == pytest.approx(0.3)
    assert np.allclose(np.abs(out.amplitudes) ** 2, [0, 1])
    with pytest.raises(fock.HeraldImpossibleError):
        fock.project(fock.fock_state([1, 0], 1), 1, 1)


def test_partial_trace_of_tmsv_is_thermal():
    r = 0.6
    red = fock.partial_trace(fock.tmsv_ket(r, 25), [0])
    n = np.arange(26)
    lam = np.tanh(r) ** 2
    assert np.allclose(np.diag(red.density_matrix()).real, (1 - lam) * lam ** n, atol=1e-12)


def test_restrict():
    k = fock.restrict(fock.tmsv_ket(0.5, 4), 1, 1)
    assert k.dims == (5, 2)


def test_extract_cm_rejects_displaced_state():
    psi = fock.FockKet(np.array([[1, 1], [0, 0]], dtype=complex) / np.sqrt(2))
    with pytest.raises(ValueError):
        fock.extract_cm(psi)


def test_mean_photon_number_tmsv():
    assert fock.mean_photon_number(fock.tmsv_ket(0.5, 30), 1) == pytest.approx(np.sinh(0.5) ** 2, abs=1e-9)


def test_amplifier_vacuum_statistics():
    # a quantum-limited amplifier turns vacuum into a thermal state with G - 1 photons
    g = 1.5
    ch = fock.KrausChannel(eta=1.0, epsilon=2 * (g - 1), tau=1 / g, gain=g, max_loss_index=0, max_gain_index=30)
    out = fock.apply_channel(fock.vacuum(1, 40), ch, 0)
    probs = np.diag(out.density_matrix()).real
    x = (g - 1) / g
    assert np.allclose(probs[:10], (1 - x) * x ** np.arange(10), atol=1e-12)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert math.isclose(out.trace, 1.0, abs_tol=1e-5)
