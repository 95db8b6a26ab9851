import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from cddclock.waveform import (CoilRangeError, SampledWaveform, SegmentSpec,
                               TransferFunctionModel, WaveformProgram, boundary_phase_mismatch,
                               export_samples, forward_filter, precompensate, program_from_set,
                               q_to_pole, read_samples, stitch, synth_first_sweep, synth_hold1,
                               synth_hold2, tone_fit, transfer_eval)

TAU = 2 * np.pi
W1 = TAU * 1.0e6
W2 = TAU * 5.0e4


def test_chirp_endpoint_matches_quadrature():
    seg = SegmentSpec("sweep1", 1.0, W1, 2e-5, omega_init=W1 - TAU * 1.5e5, t_sw=2e-5)
    (_, ph, w), = seg.tones(np.array([seg.t_sw]))
    assert w[0] == pytest.approx(W1, rel=1e-14)
    ref, _ = quad(lambda t: seg.tones(np.array([t]))[0][2][0], 0, seg.t_sw, epsabs=1e-10)
    assert ph[0] == pytest.approx(ref, rel=1e-12)


def test_sweep_envelope_peaks_at_end():
    seg = SegmentSpec("sweep1", 2.0, W1, 1e-5, omega_init=W1 * 0.9, t_sw=1e-5)
    amp = seg.tones(np.array([0.0, 1e-5]))[0][0]
    assert amp[1] == pytest.approx(1.0)
    assert amp[0] == pytest.approx(np.exp(-9.0))


def test_sweep_range_invariant():
    with pytest.raises(ValueError, match="sweep range"):
        SegmentSpec("sweep1", 1.0, W1, 1e-5, omega_init=0.5 * W1, t_sw=1e-5)


def test_hold1_rms():
    wf = synth_hold1(SegmentSpec("hold1", 3.0, W1, 1e-4), 2.0e7)
    assert np.sqrt(np.mean(wf.samples**2)) == pytest.approx(1.5 / np.sqrt(2), rel=1e-9)


def test_hold2_has_three_tones():
    rate, T = 1.6e7, 2e-4  # integer number of cycles for all tones
    wf = synth_hold2(SegmentSpec("hold2", 1.0, W1, T, A2=0.4, omega2=W2), rate)
    spec = np.abs(np.fft.rfft(wf.samples)) / (len(wf.samples) / 2)
    f = np.fft.rfftfreq(len(wf.samples), 1 / rate)
    peaks = {fi: spec[np.argmin(abs(f - fi))] for fi in (1e6 - 5e4, 1e6, 1e6 + 5e4)}
    assert peaks[1e6] == pytest.approx(0.5, rel=1e-9)
    assert peaks[1e6 + 5e4] == pytest.approx(0.1, rel=1e-9)
    assert peaks[1e6 - 5e4] == pytest.approx(0.1, rel=1e-9)
    rest = np.delete(spec, [np.argmin(abs(f - fi)) for fi in peaks])
    assert 20 * np.log10(rest.max() / 0.5) < -80


def test_hold2_matches_two_stage_drive_form():
    # with both tone phases at pi/2 the signal is cos(w1 t) - (A2/A1) sin(w1 t) cos(w2 t), times A1/2
    seg = SegmentSpec("hold2", 1.0, W1, 1e-4, A2=0.4, omega2=W2, phi1=np.pi / 2, phi2=np.pi / 2)
    t = np.linspace(0, 1e-4, 1001)
    y = WaveformProgram((seg,)).signal(t)
    ref = 0.5 * (np.cos(W1 * t) - 0.4 * np.sin(W1 * t) * np.cos(W2 * t))
    np.testing.assert_allclose(y, ref, atol=1e-12)


def test_zero_second_amplitude_reduces_to_hold1():
    t = np.linspace(0, 1e-4, 777)
    a = WaveformProgram((SegmentSpec("hold2", 1.0, W1, 1e-4, A2=0.0, omega2=W2),)).signal(t)
    b = WaveformProgram((SegmentSpec("hold1", 1.0, W1, 1e-4),)).signal(t)
    np.testing.assert_allclose(a, b, atol=1e-15)


@given(st.floats(1e3, 1e8))
def test_transfer_conjugate_symmetry(f):
    m = TransferFunctionModel.resonant(1e7, 8.59)
    assert transfer_eval(m, -f) == pytest.approx(np.conj(transfer_eval(m, f)), rel=1e-12)


def test_transfer_high_frequency_limit_and_normalization():
    m = TransferFunctionModel.resonant(1e7, 15.95)
    assert abs(transfer_eval(m, 1e7)) == pytest.approx(1.0, rel=1e-12)
    assert abs(transfer_eval(m, 1e13)) == pytest.approx(m.gain, rel=1e-4)


def test_q_to_pole():
    pr, pi = q_to_pole(10002089.0, 8.59)
    assert pr == pytest.approx(-3.657e6, rel=1e-3)
    m = TransferFunctionModel(1.0, (-1.0, 0.0), (pr, pi))
    assert m.Q == pytest.approx(8.59)
    assert m.f0 == pytest.approx(10002089.0)
    with pytest.raises(ValueError):
        q_to_pole(1e6, 0.4)
    with pytest.raises(ValueError):
        TransferFunctionModel(1.0, (0.0, 0.0), (1.0, 1.0))


def test_precompensate_identity_and_gain():
    seg = SegmentSpec("hold1", 1.0, W1, 1e-5)
    t = np.linspace(0, 1e-5, 301)
    base = WaveformProgram((seg,)).signal(t)
    ident = precompensate(WaveformProgram((seg,)), TransferFunctionModel.identity()).signal(t)
    np.testing.assert_allclose(ident, base, atol=1e-12)
    half = TransferFunctionModel(0.5, (-1.0, 1.0), (-1.0, 1.0))
    doubled = precompensate(WaveformProgram((seg,)), half).signal(t)
    np.testing.assert_allclose(doubled, 2 * base, atol=1e-12)


def test_weak_coil_response_rejected():
    m = TransferFunctionModel.resonant(1e6, 8.59)
    with pytest.raises(CoilRangeError):
        precompensate(WaveformProgram((SegmentSpec("hold1", 1.0, 10 * W1, 1e-5),)), m)


def test_precompensated_round_trip():
    m = TransferFunctionModel.resonant(1e6, 8.59)
    seg = SegmentSpec("hold2", 1.0, W1, 1e-3, A2=0.3, omega2=W2)
    rate = 2.0e7
    pre = precompensate(WaveformProgram((seg,)), m).sample(rate).samples
    out = forward_filter(pre, rate, m)
    skip = int(2e-4 * rate)  # settle the filter transient
    freqs = [1e6, 1.05e6, 0.95e6]
    got_a, got_p = tone_fit(out[skip:], rate, freqs, t0=skip / rate)
    ref_a, ref_p = tone_fit(WaveformProgram((seg,)).sample(rate).samples[skip:], rate, freqs,
                            t0=skip / rate)
    np.testing.assert_allclose(got_a, ref_a, rtol=0.01)
    assert np.max(np.abs(np.angle(np.exp(1j * (got_p - ref_p))))) < np.deg2rad(1)


def test_stitched_program_is_phase_continuous(resonant):
    prog = program_from_set(resonant, "S", sweep1=(-150e3, 500e-6), sweep2=(80e3, 7e-3))
    assert [s.kind for s in prog.segments] == ["sweep1", "hold1", "sweep2", "hold2"]
    assert boundary_phase_mismatch(prog) < 1e-9


def test_stitch_order_enforced():
    a = SegmentSpec("hold1", 1.0, W1, 1e-5)
    b = SegmentSpec("hold2", 1.0, W1, 1e-5, A2=0.1, omega2=W2)
    with pytest.raises(ValueError):
        stitch([b, a])
    with pytest.raises(ValueError):
        stitch([a, a])
    # sweeps are optional: a hold-only program is valid
    assert [s.kind for s in stitch([a, b]).segments] == ["hold1", "hold2"]


def test_sweep_sampling_single_segment():
    wf = synth_first_sweep(SegmentSpec("sweep1", 1.0, W1, 1e-5, omega_init=0.9 * W1, t_sw=1e-5),
                           1e8)
    assert len(wf.samples) == 1000
    with pytest.raises(ValueError):
        synth_hold1(SegmentSpec("hold2", 1.0, W1, 1e-5, A2=0.1, omega2=W2), 1e8)


@pytest.mark.parametrize("fmt", ["csv", "raw"])
@pytest.mark.parametrize("n", [0, 3, 50])
def test_export_round_trip(tmp_path, fmt, n):
    data = np.sin(np.arange(n) * 0.37)
    wf = SampledWaveform(1e6, data)
    path = export_samples(wf, tmp_path / f"w.{fmt}", fmt)
    back = read_samples(path, fmt, sample_rate=1e6)
    assert back.sample_rate == 1e6
    tol = 0 if fmt == "csv" else 1e-7
    np.testing.assert_allclose(back.samples, data, atol=tol)


def test_export_csv_layout(tmp_path):
    path = export_samples(SampledWaveform(2.5e7, np.array([0.0, 0.5, -1.0])), tmp_path / "w.csv")
    assert path.read_text().splitlines() == [
        "# sample_rate_hz=25000000.0", "index,value", "0,0.0", "1,0.5", "2,-1.0"]
