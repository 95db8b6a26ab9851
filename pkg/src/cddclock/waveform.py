"""Coil drive programs: chirped preparation sweeps, steady holds, coil response, export.

Every segment is represented as a short list of tones, each with an
amplitude envelope, an accumulated phase and an instantaneous frequency.
Synthesis sums ``amp * sin(phase)``; pre-compensation multiplies each tone
by ``1/H(f)`` evaluated at its instantaneous frequency.

Segment frequencies are angular (rad/s) and each segment uses local time
starting at 0.
"""

from dataclasses import dataclass, field, replace
import csv
import math
from pathlib import Path

import numpy as np

KINDS = ("sweep1", "hold1", "sweep2", "hold2")
MAX_CORRECTION = 100.0


class CoilRangeError(ValueError):
    """A tone falls where the coil response is too weak to pre-compensate."""


@dataclass(frozen=True)
class SegmentSpec:
    kind: str
    A1: float
    omega1: float
    duration: float
    A2: float = 0.0
    omega2: float = 0.0
    omega_init: float | None = None  # sweeps: initial angular frequency of the swept tone
    t_sw: float | None = None
    sigma: float | None = None
    phi1: float = 0.0
    phi2: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if self.kind.startswith("sweep"):
            if self.t_sw is None or self.omega_init is None:
                raise ValueError("sweeps need t_sw and omega_init")
            if self.sigma is not None and self.sigma <= 0:
                raise ValueError("sigma must be positive")
            target = self.omega1 if self.kind == "sweep1" else self.omega2
            if abs(target - self.omega_init) >= 0.2 * self.omega1:
                raise ValueError("sweep range must be small against the first-stage frequency")

    @property
    def edge(self):
        return self.sigma if self.sigma is not None else self.t_sw / 3.0

    def _chirp(self, t, w_end):
        w0 = self.omega_init
        rate = (w_end - w0) / (2 * self.t_sw)
        return w0 * t + rate * t * t, w0 + 2 * rate * t

    def _gauss(self, t):
        return np.exp(-((t - self.t_sw) ** 2) / self.edge**2)

    def tones(self, t):
        """List of (amplitude, phase rad, angular frequency) arrays at local times t."""
        t = np.asarray(t, dtype=float)
        one = np.ones_like(t)
        if self.kind == "sweep1":
            ph, w = self._chirp(t, self.omega1)
            return [(0.5 * self.A1 * self._gauss(t), ph, w)]
        carrier = (0.5 * self.A1 * one, self.omega1 * t + self.phi1, self.omega1 * one)
        if self.kind == "hold1":
            return [carrier]
        if self.kind == "sweep2":
            env = 0.25 * self.A2 * self._gauss(t)
            slow, w2 = self._chirp(t, self.omega2)
            slow = slow + self.phi2
        else:
            env = 0.25 * self.A2 * one
            slow, w2 = self.omega2 * t + self.phi2, self.omega2 * one
        fast = self.omega1 * t + self.phi1 + 0.5 * np.pi
        # sin(fast) sin(slow) = 1/2 [sin(fast + slow - pi/2) - sin(fast - slow - pi/2)]
        return [carrier,
                (env, fast + slow - 0.5 * np.pi, self.omega1 + w2),
                (-env, fast - slow - 0.5 * np.pi, self.omega1 - w2)]

    def end_phases(self):
        """Accumulated (fast, slow) tone phases at the end of the segment."""
        T = self.duration
        if self.kind == "sweep1":
            return float(self._chirp(T, self.omega1)[0]), self.phi2
        fast = self.omega1 * T + self.phi1
        if self.kind == "sweep2":
            slow = float(self._chirp(T, self.omega2)[0]) + self.phi2
        elif self.kind == "hold2":
            slow = self.omega2 * T + self.phi2
        else:
            slow = self.phi2
        return fast, slow

    def max_frequency(self):
        w = [abs(self.omega1)]
        if self.kind == "sweep1":
            w.append(abs(self.omega_init))
        if self.kind in ("sweep2", "hold2"):
            w2 = max(abs(self.omega2), abs(self.omega_init or 0.0))
            w.append(abs(self.omega1) + w2)
        return max(w)


@dataclass(frozen=True)
class TransferFunctionModel:
    """H(s) = gain (s - z)(s - conj z) / ((s - p)(s - conj p)), s = 2 pi i f."""

    gain: float
    zero: tuple
    pole: tuple

    def __post_init__(self):
        if not self.pole[0] < 0:
            raise ValueError("unstable pole: p_r must be negative")

    @property
    def f0(self):
        return math.hypot(*self.pole) / (2 * np.pi)

    @property
    def Q(self):
        return math.hypot(*self.pole) / (2 * abs(self.pole[0]))

    @classmethod
    def resonant(cls, f0, Q, zero=None, normalize=True):
        """Coil model from resonance and quality factor; default zeros are a
        double real zero at -10 * 2 pi f0 and the gain makes |H(f0)| = 1."""
        pole = q_to_pole(f0, Q)
        zero = zero if zero is not None else (-10 * 2 * np.pi * f0, 0.0)
        model = cls(1.0, zero, pole)
        if normalize:
            model = replace(model, gain=1.0 / abs(transfer_eval(model, f0)))
        return model

    @classmethod
    def identity(cls):
        return cls(1.0, (-1.0, 1.0), (-1.0, 1.0))


def q_to_pole(f0, Q):
    if Q <= 0.5:
        raise ValueError("Q must exceed 0.5 for a complex pole pair")
    w0 = 2 * np.pi * f0
    return (-w0 / (2 * Q), w0 * math.sqrt(1 - 1 / (4 * Q * Q)))


def transfer_eval(model, f):
    s = 2j * np.pi * np.asarray(f, dtype=float)
    zr, zi = model.zero
    pr, pi = model.pole
    den = (s - pr + 1j * pi) * (s - pr - 1j * pi)
    if np.any(den == 0):
        raise ZeroDivisionError("evaluation at a pole")
    return model.gain * (s - zr + 1j * zi) * (s - zr - 1j * zi) / den


@dataclass(frozen=True)
class WaveformProgram:
    """Ordered segments for one coil plus the amplitude calibration.

    ``omega_per_amplitude`` maps the signal y(t) onto the drive amplitude in
    the coupling convention of :func:`cddclock.spin.drive_field` (Hz).
    ``model`` is set by :func:`precompensate`.
    """

    segments: tuple
    omega_per_amplitude: float = 1.0
    model: TransferFunctionModel | None = None
    grid_points: int = 64

    @property
    def starts(self):
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    @property
    def duration(self):
        return float(sum(s.duration for s in self.segments))

    def max_frequency_hz(self):
        return max(s.max_frequency() for s in self.segments) / (2 * np.pi)

    def _corr(self, seg, w):
        if self.model is None:
            return None
        f = w / (2 * np.pi)
        if seg.kind.startswith("sweep"):
            lo, hi = float(np.min(f)), float(np.max(f))
            if hi - lo > 0:
                grid = np.linspace(lo, hi, self.grid_points)
                c = 1.0 / transfer_eval(self.model, grid)
                _check(c, grid)
                mag = np.interp(f, grid, np.abs(c))
                ph = np.interp(f, grid, np.unwrap(np.angle(c)))
                return mag, ph
        c = 1.0 / transfer_eval(self.model, f)
        _check(c, f)
        return np.abs(c), np.angle(c)

    def segment_signal(self, i, t_local):
        seg = self.segments[i]
        y = 0.0
        for amp, ph, w in seg.tones(t_local):
            corr = self._corr(seg, w)
            if corr is None:
                y = y + amp * np.sin(ph)
            else:
                y = y + amp * corr[0] * np.sin(ph + corr[1])
        return y

    def signal(self, t):
        """Coil signal y(t) (amplitude units) on global time."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        starts = self.starts
        idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(self.segments) - 1)
        for i in range(len(self.segments)):
            mask = idx == i
            if np.any(mask):
                out[mask] = self.segment_signal(i, t[mask] - starts[i])
        return out

    def field(self, t):
        """Drive amplitude (Hz, before the g-factor) seen by the ion."""
        return self.omega_per_amplitude * self.signal(t)

    def sample(self, sample_rate):
        n = int(round(self.duration * sample_rate))
        t = np.arange(n) / sample_rate
        bounds = [int(round(s * sample_rate)) for s in self.starts[1:-1]]
        return SampledWaveform(sample_rate, self.signal(t), bounds)


def _check(c, f):
    bad = np.abs(c) > MAX_CORRECTION
    if np.any(bad):
        raise CoilRangeError(
            f"coil cannot drive this tone: correction {np.max(np.abs(c)):.1f} "
            f"at {np.asarray(f)[bad].flat[0]:.6g} Hz exceeds {MAX_CORRECTION:g}")


@dataclass(frozen=True)
class SampledWaveform:
    sample_rate: float
    samples: np.ndarray
    boundaries: list = field(default_factory=list)


def _single(kind, spec):
    if spec.kind != kind:
        raise ValueError(f"expected a {kind} segment, got {spec.kind}")
    return WaveformProgram((spec,))


def _sampled(spec, sample_rate):
    return WaveformProgram((spec,)).sample(sample_rate)


def synth_first_sweep(spec, sample_rate):
    _single("sweep1", spec)
    return _sampled(spec, sample_rate)


def synth_hold1(spec, sample_rate):
    _single("hold1", spec)
    return _sampled(spec, sample_rate)


def synth_second_sweep(spec, sample_rate):
    _single("sweep2", spec)
    return _sampled(spec, sample_rate)


def synth_hold2(spec, sample_rate):
    _single("hold2", spec)
    return _sampled(spec, sample_rate)


def stitch(segments, omega_per_amplitude=1.0):
    """Chain segments (in sweep1, hold1, sweep2, hold2 order; sweeps optional) with
    continuous tone phases.

    The first segment keeps its own phases; every later segment gets its
    phases from the accumulated phases of the one before it.
    """
    segments = list(segments)
    order = [KINDS.index(s.kind) for s in segments]
    if order != sorted(order) or len(set(order)) != len(order):
        raise ValueError("segments must follow sweep1 -> hold1 -> sweep2 -> hold2")
    out = [segments[0]]
    for seg in segments[1:]:
        fast, slow = out[-1].end_phases()
        out.append(replace(seg, phi1=float(np.mod(fast, 2 * np.pi)),
                           phi2=float(np.mod(slow, 2 * np.pi))))
    return WaveformProgram(tuple(out), omega_per_amplitude)


def boundary_phase_mismatch(program):
    """Largest tone phase jump (rad) across segment boundaries.

    Compares the phases of matching tones at the end of one segment and the
    start of the next (the carrier, and the sidebands when both carry them).
    """
    worst = 0.0
    for a, b in zip(program.segments, program.segments[1:]):
        ta = a.tones(np.array([a.duration]))
        tb = b.tones(np.array([0.0]))
        for (_, pa, _), (_, pb, _) in zip(ta, tb):
            worst = max(worst, abs(float(_wrap(pb[0] - pa[0]))))
    return worst


def _wrap(x):
    return (x + np.pi) % (2 * np.pi) - np.pi


def precompensate(program, model):
    """Per-tone inverse of the coil response (checked for every tone)."""
    out = replace(program, model=model)
    for i, seg in enumerate(out.segments):
        t = np.linspace(0, seg.duration, 257)
        for _, _, w in seg.tones(t):
            out._corr(seg, w)
    return out


def forward_filter(samples, sample_rate, model):
    """Time-domain response of the coil model to a sampled signal."""
    from scipy import signal

    zr, zi = model.zero
    pr, pi = model.pole
    num = model.gain * np.real(np.poly([zr - 1j * zi, zr + 1j * zi]))
    den = np.real(np.poly([pr - 1j * pi, pr + 1j * pi]))
    t = np.arange(len(samples)) / sample_rate
    _, y, _ = signal.lsim((num, den), samples, t)
    return y


def tone_fit(samples, sample_rate, freqs, t0=0.0):
    """Least-squares amplitude and phase (y = a sin(2 pi f t + phi)) at known frequencies."""
    t = t0 + np.arange(len(samples)) / sample_rate
    cols = []
    for f in freqs:
        cols += [np.sin(2 * np.pi * f * t), np.cos(2 * np.pi * f * t)]
    coef, *_ = np.linalg.lstsq(np.stack(cols, axis=1), samples, rcond=None)
    s, c = coef[0::2], coef[1::2]
    return np.hypot(s, c), np.arctan2(c, s)


def export_samples(wf, path, fmt="csv"):
    """Write samples as CSV (``# sample_rate_hz=...`` then ``index,value``) or raw
    little-endian float32."""
    path = Path(path)
    try:
        if fmt == "csv":
            with path.open("w", newline="") as fh:
                fh.write(f"# sample_rate_hz={wf.sample_rate!r}\n")
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["index", "value"])
                for i, v in enumerate(np.asarray(wf.samples, dtype=float)):
                    w.writerow([i, repr(float(v))])
        elif fmt == "raw":
            np.asarray(wf.samples, dtype="<f4").tofile(path)
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write waveform to {path}: {exc}") from exc
    return path


def read_samples(path, fmt="csv", sample_rate=None):
    path = Path(path)
    if fmt == "raw":
        return SampledWaveform(sample_rate, np.fromfile(path, dtype="<f4").astype(float))
    with path.open() as fh:
        rate = float(fh.readline().split("=", 1)[1])
        rows = list(csv.reader(fh))[1:]
    return SampledWaveform(rate, np.array([float(r[1]) for r in rows]))


def program_from_set(cdd, label, hold1=100e-6, hold2=1e-3, sweep1=(None, None),
                     sweep2=(None, None), A1=1.0, sigma=None):
    """Stitched preparation program for one coil.

    ``sweep1``/``sweep2`` are (Delta_omega_sw Hz, t_sw s) pairs with
    Delta_omega_sw = omega - omega_init; a None sweep is left out. The second
    stage amplitude is fixed by the common amplitude calibration.
    """
    s1, s2 = cdd.stages(label)
    tau = 2 * np.pi
    A2 = A1 * s2.Omega / s1.Omega
    segs = []
    if sweep1[0] is not None:
        segs.append(SegmentSpec("sweep1", A1, tau * s1.omega, sweep1[1],
                                omega_init=tau * (s1.omega - sweep1[0]), t_sw=sweep1[1],
                                sigma=sigma))
    segs.append(SegmentSpec("hold1", A1, tau * s1.omega, hold1))
    if s2.active:
        if sweep2[0] is not None:
            segs.append(SegmentSpec("sweep2", A1, tau * s1.omega, sweep2[1], A2=A2,
                                    omega2=tau * s2.omega,
                                    omega_init=tau * (s2.omega - sweep2[0]), t_sw=sweep2[1],
                                    sigma=sigma))
        segs.append(SegmentSpec("hold2", A1, tau * s1.omega, hold2, A2=A2,
                                omega2=tau * s2.omega))
    return stitch(segs, omega_per_amplitude=2 * s1.Omega / A1)
