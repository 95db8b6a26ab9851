import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cddclock.clocksim import (DecayModel, DressedResponse, NoiseModel, ServoConfig,
                               fit_decay, fit_white_fm, overlapping_allan, per_ion_line_scan, qpn_instability,
                               quadratic_zeeman_offset, rabi_flop_probability,
                               random_walk, response_from_analytic, run_clock_servo,
                               sample_noise, synthetic_flops)
from cddclock.crystal import (TrapConfig, axial_field_gradient, default_trap,
                              equilibrium_positions, inhomogeneity_fit)


def test_flop_probability_limits():
    m = DecayModel()
    assert rabi_flop_probability(0.0, m) == 0.0
    assert rabi_flop_probability(100.0, m) == pytest.approx(0.5, abs=1e-12)


def test_flop_probability_scalar_oracle():
    m = DecayModel(Gamma=1.168, gamma=0.29, Omega_L=50.0)  # first pi time at 10 ms
    t = 0.01
    ref = 0.5 * (1 + math.exp(-t / 1.168) * math.exp(-t * t / (2 * 0.29**2)))
    assert rabi_flop_probability(t, m) == pytest.approx(ref, rel=1e-14)
    assert ref == pytest.approx(0.995443, abs=1e-6)


@given(st.floats(0, 50), st.floats(0.01, 5), st.floats(0.1, 100))
def test_flop_probability_bounded(t, gamma, om):
    p = rabi_flop_probability(t, DecayModel(gamma=gamma, Omega_L=om))
    assert 0 <= p <= 1


def test_decay_model_validation():
    with pytest.raises(ValueError):
        DecayModel(gamma=0.0)


def test_fit_decay_noiseless_round_trip():
    m = DecayModel(gamma=0.29, Omega_L=10.0)
    t = np.linspace(0, 1.0, 201)
    fit = fit_decay(t, rabi_flop_probability(t, m))
    assert fit.model.gamma == pytest.approx(0.29, rel=1e-6)
    assert fit.model.Omega_L == pytest.approx(10.0, rel=1e-6)


def test_fit_decay_binomial_noise():
    m = DecayModel(gamma=0.29, Omega_L=10.0)
    t = np.linspace(0, 1.0, 101)
    fit = fit_decay(t, synthetic_flops(t, m, 200, seed=3))
    assert fit.model.gamma == pytest.approx(0.29, rel=0.10)


def test_fit_decay_pure_exponential_limit():
    m = DecayModel(gamma=1e6, Omega_L=10.0)
    t = np.linspace(0, 1.0, 201)
    fit = fit_decay(t, rabi_flop_probability(t, m))
    assert abs(fit.inv_gamma2) <= 3 * fit.inv_gamma2_err + 1e-9


def test_fit_decay_needs_points():
    with pytest.raises(ValueError):
        fit_decay(np.linspace(0, 1, 5), np.zeros(5))


def test_synthetic_flops_deterministic():
    t = np.linspace(0, 1, 50)
    a = synthetic_flops(t, DecayModel(), 100, seed=1)
    np.testing.assert_array_equal(a, synthetic_flops(t, DecayModel(), 100, seed=1))


def test_quiet_noise_is_zero():
    dB, amp = sample_noise(NoiseModel.quiet(), np.linspace(0, 10, 101), 3e-6)
    assert not dB.any() and not amp.any()


def test_single_harmonic_example():
    m = NoiseModel(mains_harmonics=((50.0, 10.0, 0.0),), slow_drift=0.0, drive_amp_noise=0.0)
    dB, _ = sample_noise(m, 0.005)
    assert float(dB) == pytest.approx(10.0, rel=1e-12)


def test_random_walk_variance_ensemble():
    m = NoiseModel(mains_harmonics=(), slow_drift=5.0, drive_amp_noise=0.0)
    vals = [sample_noise(NoiseModel(**{**m.__dict__, "seed": s}), 10.0)[0] for s in range(100)]
    var = np.var(vals)
    assert 25 / 3 < var < 25 * 3


def test_random_walk_deterministic_and_continuous():
    t = np.array([0.0, 0.005, 12.3456, 17.0])
    np.testing.assert_array_equal(random_walk(4, 0, t), random_walk(4, 0, t))
    assert random_walk(4, 0, 0.0) == 0.0
    # block boundary at 10 s: no jump
    a, b = random_walk(4, 0, np.array([10.0 - 1e-9, 10.0 + 1e-9]))
    assert abs(a - b) < 1e-6
    with pytest.raises(ValueError):
        random_walk(0, 0, -1.0)


def test_gradient_profile():
    m = NoiseModel(mains_harmonics=(), slow_drift=0.0, drive_amp_noise=0.0, b_gradient=(0.2, 0.01))
    dB, _ = sample_noise(m, 0.0, np.array([-10e-6, 0.0, 10e-6]))
    np.testing.assert_allclose(dB, [-2 + 1, 0, 2 + 1], atol=1e-12)


def test_amplitude_noise_bounded():
    m = NoiseModel(mains_harmonics=(), slow_drift=0.0, drive_amp_noise=6e-5)
    _, amp = sample_noise(m, np.linspace(0, 500, 5001))
    assert np.max(np.abs(amp)) <= 6e-5
    assert np.std(amp) > 0


def test_quadratic_zeeman():
    assert quadratic_zeeman_offset(357e-6) == pytest.approx(1.37)
    assert quadratic_zeeman_offset(0.0) == 0.0
    assert quadratic_zeeman_offset(714e-6) == pytest.approx(5.48)


# -- Allan deviation -------------------------------------------------------

def direct_oadev(y, m):
    vals = []
    for i in range(len(y) - 2 * m + 1):
        vals.append((np.mean(y[i + m:i + 2 * m]) - np.mean(y[i:i + m])) ** 2)
    return math.sqrt(0.5 * np.mean(vals))


def test_allan_constant_record():
    taus, adev, _, _ = overlapping_allan(np.full(100, 3.2e-15), 1.0)
    np.testing.assert_allclose(adev, 0.0, atol=1e-30)


def test_allan_alternating_record():
    x = 2e-15
    taus, adev, _, _ = overlapping_allan(np.array([x, -x, x, -x]), 1.0, taus=[1.0])
    assert adev[0] == pytest.approx(math.sqrt(2) * x, rel=1e-12)


def test_allan_matches_direct_loop():
    y = np.random.default_rng(1).standard_normal(300)
    taus, adev, _, _ = overlapping_allan(y, 0.5, taus=[0.5, 1.5, 10.0])
    for tau, a in zip(taus, adev):
        assert a == pytest.approx(direct_oadev(y, int(round(tau / 0.5))), rel=1e-10)


def test_allan_skips_infeasible():
    taus, _, _, skipped = overlapping_allan(np.zeros(10), 1.0, taus=[1.0, 4.0])
    assert list(taus) == [1.0] and skipped == [4.0]


def test_allan_white_fm_slope():
    sig = 3e-15
    slopes, amps = [], []
    for seed in range(100):
        y = sig * np.random.default_rng(seed).standard_normal(4000)
        taus, adev, _, _ = overlapping_allan(y, 1.0)
        s, s1 = fit_white_fm(taus, adev, 1, 100)
        slopes.append(s)
        amps.append(s1)
    assert np.mean(slopes) == pytest.approx(-0.5, rel=0.05)
    assert np.mean(amps) == pytest.approx(sig, rel=0.05)


def test_allan_linear_drift_scales_with_tau():
    y = 1e-16 * np.arange(1000.0)
    taus, adev, _, _ = overlapping_allan(y, 1.0, taus=[2.0, 20.0, 200.0])
    np.testing.assert_allclose(adev / taus, 1e-16 / math.sqrt(2), rtol=1e-9)


# -- line scans ------------------------------------------------------------

def _scan_setup(cdd, noise, shift=0.0):
    trap = default_trap(5)
    crystal = equilibrium_positions(trap)
    resp = response_from_analytic(cdd)
    resp = DressedResponse(resp.center + shift, resp.linear, resp.quadratic,
                           resp.qps_per_gradient, resp.amplitude)
    truth = resp.frequency(0.0, axial_field_gradient(crystal, trap))
    grid = np.arange(truth.min() - 15, truth.max() + 15, 0.25)
    return resp, crystal, trap, grid


def test_line_scan_quiet_no_qps(resonant):
    resp = DressedResponse(123.0, 0.0, 0.0, 0.0)
    trap = default_trap(5)
    crystal = equilibrium_positions(trap)
    scan = per_ion_line_scan(resp, crystal, trap, NoiseModel.quiet(), np.arange(103, 143, 0.25))
    np.testing.assert_allclose(scan.centers, 123.0, atol=4 * scan.center_errors.max() + 0.05)
    assert not scan.flags


def test_line_scan_recovers_qps_curvature(resonant):
    resp, crystal, trap, grid = _scan_setup(resonant, NoiseModel.quiet())
    scan = per_ion_line_scan(resp, crystal, trap, NoiseModel.quiet(), grid)
    _, q_fit, _ = inhomogeneity_fit(crystal.positions, scan.centers)
    _, q_in, _ = inhomogeneity_fit(crystal.positions,
                                   resp.qps_per_gradient * axial_field_gradient(crystal, trap))
    assert q_fit == pytest.approx(q_in, rel=0.05)


def test_line_scan_translation_covariant(resonant):
    a = per_ion_line_scan(*_scan_setup(resonant, NoiseModel.quiet())[:3], NoiseModel.quiet(),
                          _scan_setup(resonant, NoiseModel.quiet())[3])
    r, c, t, g = _scan_setup(resonant, NoiseModel.quiet(), shift=37.5)
    b = per_ion_line_scan(r, c, t, NoiseModel.quiet(), g)
    np.testing.assert_allclose(b.centers - a.centers, 37.5, atol=1e-6)


def test_line_scan_magic_linear_gradient(magic):
    noise = NoiseModel(mains_harmonics=(), slow_drift=0.0, drive_amp_noise=0.0,
                       b_gradient=(2.0, 0.0))
    resp, crystal, trap, _ = _scan_setup(magic, noise)
    # the magic set keeps a linear field response from the first-stage Bloch-Siegert shift
    resp = DressedResponse(resp.center, 0.5, 0.0, resp.qps_per_gradient)
    truth = resp.frequency(noise.b_gradient[0] * crystal.positions * 1e6,
                           axial_field_gradient(crystal, trap))
    grid = np.arange(truth.min() - 15, truth.max() + 15, 0.25)
    scan = per_ion_line_scan(resp, crystal, trap, noise, grid)
    lin, quad, _ = inhomogeneity_fit(crystal.positions, scan.centers)
    zmax = crystal.positions.max() * 1e6
    assert abs(lin) * zmax > 5 * abs(quad) * zmax**2


def test_line_scan_shot_floor():
    trap = default_trap(5)
    with pytest.raises(ValueError):
        per_ion_line_scan(DressedResponse(0, 0, 0, 0), equilibrium_positions(trap), trap,
                          NoiseModel.quiet(), np.arange(-5, 5, 0.5), shots=10)


# -- servo -----------------------------------------------------------------

def _single_ion():
    trap = TrapConfig(omega_z=default_trap().omega_z, N=1)
    return equilibrium_positions(trap), trap


def test_servo_quiet_has_no_bias():
    crystal, trap = _single_ion()
    run = run_clock_servo(DressedResponse(0, 0, 0, 0), crystal, trap, NoiseModel.quiet(),
                          ServoConfig(), 600.0)
    assert not run.unlocks
    np.testing.assert_array_equal(run.truth, 0.0)
    sem = np.std(run.corrections) / math.sqrt(run.corrections.size / 10)
    assert abs(np.mean(run.corrections)) < 4 * sem


def test_servo_matches_qpn_oracle():
    crystal, trap = _single_ion()
    sv = ServoConfig()
    sig = []
    for seed in range(3):
        run = run_clock_servo(DressedResponse(0, 0, 0, 0), crystal, trap, NoiseModel.quiet(seed),
                              sv, 3000.0)
        taus, adev, _, _ = overlapping_allan(run.fractional(0), run.tau0)
        sig.append(fit_white_fm(taus, adev, 10, 300)[1])
    assert np.mean(sig) == pytest.approx(qpn_instability(sv), rel=0.15)


def test_servo_offsets_unbiased():
    trap = default_trap(5)
    crystal = equilibrium_positions(trap)
    offsets = np.array([-3.0, 0.0, 1.5, 4.0, 7.0])
    run = run_clock_servo(DressedResponse(0, 0, 0, 0), crystal, trap, NoiseModel.quiet(),
                          ServoConfig(), 1200.0, offsets=offsets)
    err = run.corrections[:, 100:].mean(axis=1) - offsets
    sem = run.corrections[:, 100:].std(axis=1) / math.sqrt(run.corrections.shape[1] / 10)
    assert np.all(np.abs(err) < 4 * sem)


def test_servo_deterministic():
    crystal, trap = _single_ion()
    a = run_clock_servo(DressedResponse(0, 0, 0, 0), crystal, trap, NoiseModel(), ServoConfig(),
                        60.0, seed=5)
    b = run_clock_servo(DressedResponse(0, 0, 0, 0), crystal, trap, NoiseModel(), ServoConfig(),
                        60.0, seed=5)
    np.testing.assert_array_equal(a.corrections, b.corrections)


def test_servo_validation():
    crystal, trap = _single_ion()
    with pytest.raises(ValueError):
        run_clock_servo(DressedResponse(0, 0, 0, 0), crystal, trap, NoiseModel.quiet(),
                        ServoConfig(), 1.0)
    with pytest.raises(ValueError):
        ServoConfig(probe_time=1.0, cycle_time=0.5)
