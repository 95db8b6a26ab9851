import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from cddclock import dressing
from cddclock.dressing import CddParameterSet, artificial_transition_frequency
from cddclock.dynamics import (LabelingWarning, ManifoldField, PropagationConfig, StateVector,
                               StepSizeError, commensurate_period, floquet_ladder,
                               manifold_field, numeric_magic_search, probe_lines, propagate,
                               quasi_energies, simulate_adiabatic_preparation,
                               simulate_rabi_scan, spin_representation, su2_axis_angle,
                               su2_evolve, su2_propagator)
from cddclock.spin import build_spin_operators

SX = np.array([[0, 1], [1, 0]]) / 2
SZ = np.diag([0.5, -0.5])


def small_set(Omega2=1000.0, Delta2_D=0.0):
    """Scaled-down two-stage set (10 kHz first stage) for fast numerics."""
    cdd = CddParameterSet.from_frequencies(
        3.6e-6, 1.0e5, 9000.0, dressing.dressed_splitting(9000.0, 0, 2.00225664), Omega2,
        6.0e4, 9000.0, dressing.dressed_splitting(9000.0, 0, 1.200334), Omega2, laser_Omega=1.0)
    return cdd.with_stage2_detuning("D", Delta2_D) if Delta2_D else cdd


def test_static_field_phase():
    f = 1234.5
    H = lambda t: f * SZ
    psi = propagate(H, StateVector(np.array([1, 1]) / np.sqrt(2)), 1e-3, f_max=f).amplitudes
    ref = np.exp(-2j * np.pi * f * 1e-3 * np.array([0.5, -0.5])) / np.sqrt(2)
    np.testing.assert_allclose(psi, ref, atol=1e-10)


def test_resonant_pi_pulse():
    # rotating-frame coupling g*Omega/2 flips the spin after 1/(g*Omega)
    g, Omega, w0 = 2.0, 1000.0, 1.0e5
    fld = ManifoldField(g=g, omega0=w0, Omega1=Omega, omega1=w0)
    psi = su2_evolve(fld, np.array([1, 0], complex), 1 / (g * Omega))
    assert abs(psi[1]) ** 2 > 1 - 1e-3


@pytest.mark.parametrize("method", ["midpoint", "cf4"])
def test_propagator_is_special_unitary(method):
    fld = manifold_field(small_set(), "S")
    U = su2_propagator(fld, 3.7e-4, cfg=PropagationConfig(method=method))
    np.testing.assert_allclose(U.conj().T @ U, np.eye(2), atol=1e-10)
    assert np.linalg.det(U) == pytest.approx(1.0, abs=1e-10)


def test_frames_agree():
    cdd = small_set()
    lab = manifold_field(cdd, "S", frame="lab")
    rot = manifold_field(cdd, "S", frame="first-rotating")
    T = 2.3e-4
    psi0 = np.array([0.6, 0.8], complex)
    a = su2_evolve(lab, psi0, T)
    b = su2_evolve(rot, psi0, T)
    b = expm(-2j * np.pi * lab.omega1 * T * SZ) @ b
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_su2_matches_dense_propagation():
    fld = manifold_field(small_set(), "D")
    T = 1e-4
    ops = build_spin_operators(2.5)

    def H(t):
        bx, by, bz = fld(t)
        return bx * ops.jx + by * ops.jy + bz * ops.jz

    psi0 = StateVector.basis("D", 1.5).amplitudes[2:]
    dense = propagate(H, StateVector(psi0), T, f_max=fld.f_max).amplitudes
    U = su2_propagator(fld, T)
    np.testing.assert_allclose(spin_representation(U, 2.5) @ psi0, dense, atol=1e-8)


def test_step_size_limit():
    with pytest.raises(StepSizeError):
        PropagationConfig(dt=1e-3).step(1e3)
    assert PropagationConfig().step(1e3) == pytest.approx(1e-5)
    with pytest.raises(StepSizeError):
        su2_propagator(manifold_field(small_set(), "S"), 1e-4, cfg=PropagationConfig(dt=1e-6))


def test_invalid_method():
    with pytest.raises(ValueError):
        PropagationConfig(method="rk4")


def test_commensurate_period_exact_ratio():
    p = commensurate_period(1.0e6, 1.0e6 * 3 / 7)
    assert (p.n1, p.n2) == (7, 3)
    assert p.T == pytest.approx(7e-6)
    assert abs(p.rounding) < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.floats(1e5, 1e7), st.floats(1e3, 1e5))
def test_commensurate_period_properties(w1, w2):
    p = commensurate_period(w1, w2, tol=0.01, T_max=10e-3)
    assert p.T <= 10e-3 + 1e-15
    assert p.T * w1 == pytest.approx(p.n1)
    assert p.T * p.omega2 == pytest.approx(p.n2)


def test_axis_angle_roundtrip():
    n = np.array([1.0, 2.0, 2.0]) / 3
    U = expm(-0.5j * 1.1 * (n[0] * 2 * SX + n[1] * np.array([[0, -1j], [1j, 0]]) + n[2] * 2 * SZ))
    phi, m = su2_axis_angle(U)
    assert phi == pytest.approx(1.1)
    np.testing.assert_allclose(m, n, atol=1e-12)


def test_single_stage_ladder_matches_rwa():
    cdd = small_set(Omega2=0.0)
    lad = floquet_ladder(cdd, "S")
    assert lad.period.n1 == 1
    # Bloch-Siegert shift (c/w)^2 scale
    assert lad.spacing == pytest.approx(cdd.omegabar0("S"), rel=1e-3)
    assert lad.reliable


def test_two_stage_ladder_matches_rwa():
    cdd = small_set()
    spec = quasi_energies(cdd)
    for lbl in ("S", "D"):
        assert spec.gaps[lbl] == pytest.approx(cdd.omegabar1(lbl), rel=0.01)
        assert spec.energies[(lbl, 0.5)] == pytest.approx(0.5 * spec.gaps[lbl])
    assert spec.reliable


def test_strong_mixing_warns():
    cdd = small_set(Omega2=0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error", LabelingWarning)
        floquet_ladder(cdd, "S")
    # a large field offset tilts the dressing axis far from the resonant label
    with pytest.warns(LabelingWarning):
        lad = floquet_ladder(cdd, "S", dB_nT=-5e4)
    assert not lad.reliable


def test_magic_search_rejects_zero_gradient():
    with pytest.raises(ValueError, match="gradient"):
        numeric_magic_search(small_set(), 0.0)


def test_magic_search_finds_sign_change():
    cdd = small_set(Delta2_D=-100.0)
    root = numeric_magic_search(cdd, 1e7, xtol=0.5)
    rwa = -dressing.magic_detuning(1000.0, cdd.g_D)
    assert root == pytest.approx(rwa, rel=0.1)
    from cddclock.dynamics import gradient_sensitivity
    lo = gradient_sensitivity(cdd.with_stage2_detuning("D", root - 20))
    hi = gradient_sensitivity(cdd.with_stage2_detuning("D", root + 20))
    assert lo * hi < 0


def test_rabi_scan_line_at_transition(resonant):
    f = artificial_transition_frequency(resonant)
    lines = probe_lines(resonant)
    c = dict((round(x - f, 3), s) for x, s in lines)[0.0]
    t_pi = 1 / (2 * resonant.laser_Omega * c)
    grid = f + np.linspace(-0.5, 0.5, 201)
    p = simulate_rabi_scan(resonant, grid, t_pi)
    assert grid[np.argmax(p)] == pytest.approx(f, abs=0.01)
    assert p.max() > 0.99


def test_probe_hierarchy_enforced(resonant):
    with pytest.raises(ValueError, match="laser_Omega"):
        dressing.replace(resonant, laser_Omega=1000.0)


@pytest.mark.slow
def test_preparation_sign_flip_selects_other_state(resonant):
    from cddclock.waveform import program_from_set
    up = program_from_set(resonant, "S", sweep1=(-150e3, 500e-6), sweep2=(80e3, 7e-3))
    down = program_from_set(resonant, "S", sweep1=(-150e3, 500e-6), sweep2=(-80e3, 7e-3))
    p_up = simulate_adiabatic_preparation(up, resonant)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        p_down = simulate_adiabatic_preparation(down, resonant)
    assert p_up[0.5] > 0.8
    assert p_down[-0.5] > 0.8


@pytest.mark.slow
def test_fast_sweep_is_diabatic(resonant):
    from cddclock.waveform import program_from_set
    fast = program_from_set(resonant, "S", sweep1=(-150e3, 5e-6), sweep2=(80e3, 70e-6))
    with pytest.warns(RuntimeWarning, match="non-adiabatic"):
        pops = simulate_adiabatic_preparation(fast, resonant)
    assert pops[0.5] < 0.5
