"""Clock-timescale simulation on dressed-basis effective frequencies.

The lab-frame spin dynamics is replaced by a :class:`DressedResponse`: the
target transition offset and its linear/quadratic field response,
quadrupole response and drive-amplitude response. Noise is sampled
deterministically from (seed, time, position) so that reruns are
bit-identical.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math
import warnings

import numpy as np
from scipy import optimize

from . import dressing
from .constants import CLOCK_FREQUENCY, CONSTANTS, D52_LIFETIME
from .spin import THETA_D52, quadrupole_unit

RW_STEP = 0.01  # s, grid of the random-walk streams
RW_BLOCK = 1000  # steps per independently seeded block


# --------------------------------------------------------------------------
# noise

@dataclass(frozen=True)
class NoiseModel:
    """Magnetic and drive-amplitude noise.

    ``slow_drift`` is the rms random-walk excursion (nT) accumulated over
    10 s; ``b_gradient`` is (nT/um, nT/um^2) about the trap center;
    ``drive_amp_noise`` bounds the fractional amplitude wander.
    """

    mains_harmonics: tuple = ((50.0, 3.0, 0.0), (100.0, 1.2, 1.1), (150.0, 0.6, 2.3))
    slow_drift: float = 5.0
    b_gradient: tuple = (0.0, 0.0)
    b_offset: float = 0.0
    drive_amp_noise: float = 6e-5
    amp_wander_rate: float = 0.5  # rad/sqrt(s) of the phase driving the bounded wander
    seed: int = 0

    def __post_init__(self):
        if any(a < 0 for _, a, _ in self.mains_harmonics):
            raise ValueError("harmonic amplitudes must be >= 0")
        if self.slow_drift < 0 or self.drive_amp_noise < 0 or self.amp_wander_rate < 0:
            raise ValueError("noise amplitudes must be >= 0")

    @classmethod
    def quiet(cls, seed=0):
        return cls(mains_harmonics=(), slow_drift=0.0, drive_amp_noise=0.0, seed=seed)


@lru_cache(maxsize=4096)
def _rw_block(seed, stream, block):
    rng = np.random.default_rng([seed, stream, block])
    return np.cumsum(rng.standard_normal(RW_BLOCK))


@lru_cache(maxsize=4096)
def _rw_offset(seed, stream, block):
    if block == 0:
        return 0.0
    return _rw_offset(seed, stream, block - 1) + float(_rw_block(seed, stream, block - 1)[-1])


def random_walk(seed, stream, t):
    """Unit-rate (variance 1 per second) random walk, W(0)=0, linear between grid points."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("times must be >= 0")
    x = t / RW_STEP
    k = np.floor(x).astype(np.int64)
    frac = x - k

    def value(idx):
        blk, pos = np.divmod(idx, RW_BLOCK)
        out = np.empty(idx.shape)
        for b in np.unique(blk):
            sel = blk == b
            base = _rw_offset(seed, stream, int(b))
            walk = np.concatenate([[0.0], _rw_block(seed, stream, int(b))])
            out[sel] = base + walk[pos[sel]]
        return out * math.sqrt(RW_STEP)

    return value(k) * (1 - frac) + value(k + 1) * frac


def sample_noise(model, t, z=0.0):
    """(deltaB nT, deltaOmega/Omega) at times t (s) and axial positions z (m)."""
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    dB = np.zeros(np.broadcast(t, z).shape)
    for f, a, ph in model.mains_harmonics:
        dB = dB + a * np.sin(2 * np.pi * f * t + ph)
    if model.slow_drift:
        dB = dB + model.slow_drift / math.sqrt(10.0) * random_walk(model.seed, 0, t)
    zu = z * 1e6
    lin, quad = model.b_gradient
    dB = dB + model.b_offset + lin * zu + quad * zu**2
    if model.drive_amp_noise:
        amp = model.drive_amp_noise * np.sin(model.amp_wander_rate * random_walk(model.seed, 1, t))
        amp = np.broadcast_to(amp, dB.shape).copy()
    else:
        amp = np.zeros_like(dB)
    return dB, amp


def mains_broadening(model, sensitivity):
    """Peak-to-peak excursion (Hz) of a line with the given Hz/nT sensitivity under mains."""
    t = np.linspace(0, 0.02, 4001)
    dB = sum(a * np.sin(2 * np.pi * f * t + ph) for f, a, ph in model.mains_harmonics)
    return float(np.ptp(dB) * abs(sensitivity)) if model.mains_harmonics else 0.0


# --------------------------------------------------------------------------
# dressed response

@dataclass(frozen=True)
class DressedResponse:
    """Target-transition offset model: f = center + linear*dB + quadratic*dB^2
    + qps_per_gradient*grad + amplitude*dOmega/Omega (Hz, nT, V/m^2)."""

    center: float
    linear: float
    quadratic: float
    qps_per_gradient: float
    amplitude: float = 0.0

    def frequency(self, dB, grad=0.0, amp=0.0):
        return (self.center + self.linear * dB + self.quadratic * dB**2
                + self.qps_per_gradient * grad + self.amplitude * amp)


def bare_qps_per_gradient(m_D, theta_Q=THETA_D52, J=2.5):
    return quadrupole_unit(theta_Q, 1.0) * (J * (J + 1) - 3 * m_D**2)


def response_from_analytic(cdd, theta_Q=THETA_D52):
    lin, quad = dressing.rwa_field_response(cdd)
    ang = dressing.mixing_angles(cdd)
    n = cdd.n_stages("D")
    m_top = cdd.target.for_manifold("D")[n]
    rel = dressing.qps_relative_to_bare(ang.c1_D, ang.c2_D) if n == 2 else (
        0.5 * (3 * ang.c1_D**2 - 1) if n == 1 else 1.0)
    return DressedResponse(
        center=dressing.artificial_transition_frequency(cdd),
        linear=lin, quadratic=quad,
        qps_per_gradient=rel * bare_qps_per_gradient(m_top, theta_Q),
        amplitude=dressing.amplitude_sensitivity(cdd))


def response_from_numeric(cdd, cfg=None, theta_Q=THETA_D52, dB_span=100.0):
    """Response with field and quadrupole terms from the Floquet numerics."""
    from . import dynamics

    cfg = cfg or dynamics.PropagationConfig()
    fs = dynamics.magnetic_sensitivity_numeric(cdd, np.linspace(-dB_span, dB_span, 9), cfg)
    return DressedResponse(
        center=dynamics.transition_frequency_numeric(cdd, 0.0, cfg),
        linear=fs.linear, quadratic=fs.quadratic,
        qps_per_gradient=dynamics.gradient_sensitivity(cdd, theta_Q, cfg),
        amplitude=dressing.amplitude_sensitivity(cdd))


def bare_response(m_S=-0.5, m_D=-1.5, theta_Q=THETA_D52, g_S=None, g_D=None,
                  constants=CONSTANTS):
    from .spin import G_D, G_S

    g_S = G_S if g_S is None else g_S
    g_D = G_D if g_D is None else g_D
    return DressedResponse(0.0, constants.mu_B_over_h_per_nT * (g_D * m_D - g_S * m_S), 0.0,
                           bare_qps_per_gradient(m_D, theta_Q))


def quadratic_zeeman_offset(B0, k=None):
    """k*B0^2 (Hz); default k puts 1.37 Hz at 357 uT."""
    if B0 < 0:
        raise ValueError("B0 must be >= 0")
    k = 1.37 / (357e-6) ** 2 if k is None else k
    return k * B0 * B0


# --------------------------------------------------------------------------
# Rabi flops and decay fits

@dataclass(frozen=True)
class DecayModel:
    Gamma: float = D52_LIFETIME
    gamma: float = 0.29
    Omega_L: float = 10.0

    def __post_init__(self):
        if min(self.Gamma, self.gamma, self.Omega_L) <= 0:
            raise ValueError("decay parameters must be positive")


def rabi_flop_probability(t, model):
    t = np.asarray(t, dtype=float)
    env = np.exp(-t / model.Gamma) * np.exp(-t * t / (2 * model.gamma**2))
    return 0.5 * (1 - np.cos(2 * np.pi * model.Omega_L * t) * env)


@dataclass(frozen=True)
class DecayFit:
    model: DecayModel
    Omega_L_err: float
    gamma_err: float
    inv_gamma2: float
    inv_gamma2_err: float
    residual: float


def fit_decay(times, probabilities, Gamma=D52_LIFETIME, Omega_L0=None, gamma0=0.3, sigma=None):
    """Least squares over (Omega_L, 1/gamma^2) with Gamma fixed.

    Fitting u = 1/gamma^2 keeps the pure-exponential limit (u = 0) inside the
    parameter space; gamma and its error follow by propagation.
    """
    t = np.asarray(times, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    if t.size < 20:
        raise ValueError("need >= 20 points")
    if Omega_L0 is None:
        # dominant oscillation frequency from a periodogram on a fine grid
        f = np.linspace(0.2, 0.5 * (t.size - 1) / np.ptp(t), 4000)
        pw = np.abs(np.exp(-2j * np.pi * f[:, None] * t[None, :]) @ (p - p.mean()))
        Omega_L0 = float(f[np.argmax(pw)])

    def model(tt, Om, u):
        env = np.exp(-tt / Gamma) * np.exp(-0.5 * u * tt * tt)
        return 0.5 * (1 - np.cos(2 * np.pi * Om * tt) * env)

    try:
        popt, pcov = optimize.curve_fit(model, t, p, p0=[Omega_L0, 1 / gamma0**2], sigma=sigma,
                                        absolute_sigma=sigma is not None,
                                        bounds=([0, -np.inf], [np.inf, np.inf]), maxfev=20000)
    except RuntimeError as exc:
        raise RuntimeError(f"decay fit did not converge: {exc}") from exc
    resid = float(np.sqrt(np.mean((model(t, *popt) - p) ** 2)))
    Om, u = popt
    err = np.sqrt(np.diag(pcov))
    gamma = 1 / math.sqrt(u) if u > 0 else math.inf
    gamma_err = 0.5 * err[1] * u**-1.5 if u > 0 else math.inf
    return DecayFit(DecayModel(Gamma, gamma if u > 0 else 1e300, Om), float(err[0]),
                    float(gamma_err), float(u), float(err[1]), resid)


def synthetic_flops(times, model, shots, seed):
    rng = np.random.default_rng(seed)
    return rng.binomial(shots, rabi_flop_probability(times, model)) / shots


# --------------------------------------------------------------------------
# spectroscopy

def rabi_lineshape(detuning, probe_time):
    """Excitation for a probe pulse with pulse area pi: Omega = 1/(2 t)."""
    from .dynamics import rabi_lineshape as _rabi

    return _rabi(detuning, 0.5 / probe_time, probe_time)


def _window_average(response, noise, t0, T, z, grad, samples=512):
    t = t0 + (np.arange(samples) + 0.5) * (T / samples)
    dB, amp = sample_noise(noise, t[:, None], np.asarray(z)[None, :])
    f = response.frequency(dB, np.asarray(grad)[None, :], amp)
    return f.mean(axis=0)


@dataclass
class LineScan:
    detunings: np.ndarray
    excitation: np.ndarray  # ions x detunings
    centers: np.ndarray
    center_errors: np.ndarray
    flags: list
    truth: np.ndarray


def per_ion_line_scan(response, crystal, trap, noise, detunings, shots=100, probe_time=0.1,
                      cycle_time=0.3, seed=0):
    """Scan the probe across the line for every ion and fit the centres.

    ``response`` supplies the per-ion line position (QPS via the crystal's
    gradients, field noise and B(z) profile via ``noise``). The probe sweeps
    the grid once, taking ``shots`` single-shot readouts per point.
    """
    from .crystal import axial_field_gradient

    if shots < 50:
        raise ValueError("shots must be >= 50")
    det = np.asarray(detunings, dtype=float)
    z = np.asarray(crystal.positions)
    grad = axial_field_gradient(crystal, trap)
    rng = np.random.default_rng([seed, 7])
    exc = np.zeros((z.size, det.size))
    for j, d in enumerate(det):
        t0 = j * shots * cycle_time
        # average the line position over the time spent on this point
        f = np.mean([_window_average(response, noise, t0 + s * cycle_time, probe_time, z, grad, 32)
                     for s in range(0, shots, max(1, shots // 8))], axis=0)
        p = rabi_lineshape(d - f, probe_time)
        exc[:, j] = rng.binomial(shots, p) / shots
    zu = z * 1e6
    static_dB = noise.b_offset + noise.b_gradient[0] * zu + noise.b_gradient[1] * zu**2
    truth = response.frequency(static_dB, grad)
    centers = np.zeros(z.size)
    errs = np.zeros(z.size)
    flags = []
    for i in range(z.size):
        c, e, ok = _fit_center(det, exc[i], probe_time)
        centers[i], errs[i] = c, e
        if not ok:
            flags.append(i)
    return LineScan(det, exc, centers, errs, flags, truth)


def _fit_center(det, p, probe_time):
    i0 = int(np.argmax(p))

    def model(d, c, a):
        return a * rabi_lineshape(d - c, probe_time)

    try:
        popt, pcov = optimize.curve_fit(model, det, p, p0=[det[i0], max(p[i0], 0.1)], maxfev=5000)
        return float(popt[0]), float(np.sqrt(pcov[0, 0])), bool(np.isfinite(pcov[0, 0]))
    except RuntimeError:
        return float(det[i0]), math.inf, False


# --------------------------------------------------------------------------
# servo

@dataclass(frozen=True)
class ServoConfig:
    probe_time: float = 0.1
    cycle_time: float = 0.3
    gain: float = 0.5
    half_width: float | None = None
    readout: str = "camera"

    def __post_init__(self):
        if self.probe_time > self.cycle_time:
            raise ValueError("probe_time must not exceed cycle_time")
        if self.readout not in ("camera", "pmt"):
            raise ValueError("readout must be camera or pmt")
        if not 0 < self.gain <= 1:
            raise ValueError("gain must be in (0, 1]")

    @property
    def h(self):
        return self.half_width if self.half_width is not None else 0.4 / self.probe_time

    @property
    def dead_time(self):
        return 10e-3 if self.readout == "camera" else 100e-6


def lineshape_slope(h, probe_time, eps=1e-6):
    return (rabi_lineshape(h + eps, probe_time) - rabi_lineshape(h - eps, probe_time)) / (2 * eps)


def qpn_instability(servo, n_ions=1, nu0=CLOCK_FREQUENCY):
    """Two-point projection-noise limit sigma_y(1 s) for n uncorrelated ions averaged."""
    h = servo.h
    p = rabi_lineshape(h, servo.probe_time)
    slope = abs(lineshape_slope(h, servo.probe_time))
    return math.sqrt(p * (1 - p) * servo.cycle_time) / (slope * nu0) / math.sqrt(n_ions)


@dataclass
class ClockRun:
    """Servo corrections per ion, one entry per completed two-point pair.

    ``corrections`` are laser-frequency offsets (Hz) from the nominal line;
    ``truth`` holds the mean line position seen during each pair.
    """

    times: np.ndarray
    corrections: np.ndarray  # ions x pairs
    truth: np.ndarray
    seed: int
    nu0: float = CLOCK_FREQUENCY
    unlocks: list = field(default_factory=list)

    def __post_init__(self):
        if self.corrections.shape[-1] != self.times.size:
            raise ValueError("record length mismatch")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("timestamps must increase")

    @property
    def tau0(self):
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def fractional(self, ion=None):
        rec = self.corrections.mean(axis=0) if ion is None else self.corrections[ion]
        return rec / self.nu0


def run_clock_servo(response, crystal, trap, noise, servo, duration, offsets=None, seed=None,
                    initial=None):
    """Two-point Rabi servo on every ion (independent laser-frequency estimate per ion).

    Each pair probes at +h then -h about the current estimate; the error
    (x+ - x-)/(2 |p'(h)|) is fed back with integrator gain ``servo.gain``.
    ``offsets`` adds static per-ion line offsets (Hz).
    """
    from .crystal import axial_field_gradient

    if duration < 100 * servo.cycle_time:
        raise ValueError("duration must cover at least 100 cycles")
    seed = noise.seed if seed is None else seed
    z = np.asarray(crystal.positions)
    n = z.size
    grad = axial_field_gradient(crystal, trap)
    off = np.zeros(n) if offsets is None else np.asarray(offsets, dtype=float)
    h = servo.h
    slope = abs(lineshape_slope(h, servo.probe_time))
    n_pairs = int(duration // (2 * servo.cycle_time))
    rng = np.random.default_rng([seed, 11])
    nu = np.zeros(n) if initial is None else np.asarray(initial, dtype=float).copy()
    # start on the static line position unless told otherwise
    if initial is None:
        nu = response.frequency(0.0, grad, 0.0) + off
    out = np.zeros((n, n_pairs))
    truth = np.zeros((n, n_pairs))
    times = np.zeros(n_pairs)
    unlocks = []
    locked = np.ones(n, dtype=bool)
    for k in range(n_pairs):
        x = []
        f_seen = []
        for s, side in enumerate((1.0, -1.0)):
            t0 = (2 * k + s) * servo.cycle_time
            f = _window_average(response, noise, t0, servo.probe_time, z, grad, 64) + off
            f_seen.append(f)
            p = rabi_lineshape(nu + side * h - f, servo.probe_time)
            if servo.readout == "camera":
                x.append(rng.random(n) < p)
            else:
                x.append(np.full(n, rng.random() < p.mean()))
        err = (x[0].astype(float) - x[1].astype(float)) / (2 * slope)
        nu = nu + servo.gain * err
        truth[:, k] = 0.5 * (f_seen[0] + f_seen[1])
        out[:, k] = nu
        times[k] = (2 * k + 2) * servo.cycle_time
        lost = locked & (np.abs(nu - truth[:, k]) > 2.5 / servo.probe_time)
        for i in np.flatnonzero(lost):
            unlocks.append((int(i), k))
            warnings.warn(f"servo unlock on ion {i} at pair {k}", RuntimeWarning, stacklevel=2)
        locked &= ~lost
    return ClockRun(times, out, truth, seed, unlocks=unlocks)


# --------------------------------------------------------------------------
# Allan statistics

def overlapping_allan(y, tau0, taus=None):
    """Overlapping Allan deviation of fractional-frequency samples y at spacing tau0.

    Returns (taus, adev, err, skipped) where ``err`` = adev/sqrt(N - 2m + 1)
    and infeasible taus (fewer than 3 samples per tau) are listed in
    ``skipped``.
    """
    y = np.asarray(y, dtype=float)
    N = y.size
    if taus is None:
        m_list = np.unique(np.floor(np.logspace(0, math.log10(max(1, N // 3)), 20)).astype(int))
    else:
        m_list = np.round(np.asarray(taus, dtype=float) / tau0).astype(int)
    # the deviation ignores a constant offset; removing it keeps constant records exactly 0
    x = np.concatenate([[0.0], np.cumsum(y - y[0] if N else y)]) * tau0
    out_t, out_a, out_e, skipped = [], [], [], []
    for m in m_list:
        if m < 1 or N < 3 * m:
            skipped.append(m * tau0)
            continue
        d = x[2 * m:] - 2 * x[m:-m] + x[:-2 * m]
        avar = np.sum(d * d) / (2 * (m * tau0) ** 2 * d.size)
        out_t.append(m * tau0)
        out_a.append(math.sqrt(avar))
        out_e.append(math.sqrt(avar) / math.sqrt(d.size))
    return np.array(out_t), np.array(out_a), np.array(out_e), skipped


def fit_white_fm(taus, adev, tau_min=None, tau_max=None):
    """Least-squares (log-log) slope and sigma at 1 s over a tau range."""
    taus = np.asarray(taus)
    sel = np.ones(taus.size, dtype=bool)
    if tau_min is not None:
        sel &= taus >= tau_min
    if tau_max is not None:
        sel &= taus <= tau_max
    slope, icept = np.polyfit(np.log(taus[sel]), np.log(np.asarray(adev)[sel]), 1)
    sig1 = float(np.exp(np.mean(np.log(np.asarray(adev)[sel]) + 0.5 * np.log(taus[sel]))))
    return float(slope), sig1
