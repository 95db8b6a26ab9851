"""Brute-force lab-frame propagation and Floquet analysis of the driven manifolds.

Every drive term acting on a Zeeman manifold is a linear combination of
Jx, Jy, Jz, so a manifold propagator is the spin-J image of a 2x2 SU(2)
propagator. The hot loop is therefore a long ordered product of SU(2)
exponentials (see :mod:`cddclock.kernels`); spin-5/2 results are obtained
through :func:`spin_representation`.

Quasi-energies follow from the one-period propagator of a commensurate
period ``T = n1/omega1`` with ``omega2`` rounded to ``n2/T``. For a dressed
state with quantum numbers (m0, m1, m2) the one-period eigenphase is
``-2 pi T (m0 omega1 + m1 omega2 + m2 lambda)``; the ladder spacing
``lambda`` is known modulo 2/T and is unwrapped against the rotating-wave
prediction.
"""

from dataclasses import dataclass, field, replace
from fractions import Fraction
import logging
import math
import warnings

import numpy as np
from scipy import optimize
from scipy.linalg import expm

from . import dressing, kernels
from .constants import CONSTANTS
from .spin import THETA_D52, build_spin_operators, quadrupole_unit

log = logging.getLogger(__name__)

_GAUSS = (0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6)
_CF4 = ((3 - 2 * math.sqrt(3)) / 12, (3 + 2 * math.sqrt(3)) / 12)
_CHUNK = 1 << 18


class StepSizeError(ValueError):
    pass


class LabelingWarning(UserWarning):
    """Strong mixing: overlap with the analytic dressed state is below 0.6."""


@dataclass
class StateVector:
    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)

    @property
    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    @classmethod
    def basis(cls, label, m, time=0.0):
        """Joint 8-component basis: S(m=+1/2, -1/2) then D(m=5/2 ... -5/2)."""
        psi = np.zeros(8, dtype=complex)
        psi[joint_index(label, m)] = 1.0
        return cls(psi, time)


def joint_index(label, m):
    if label == "S":
        return int(round(0.5 - m))
    return 2 + int(round(2.5 - m))


@dataclass(frozen=True)
class PropagationConfig:
    dt: float | None = None
    method: str = "cf4"
    frame: str = "lab"
    steps_per_cycle: int = 100
    min_steps_per_cycle: int = 50

    def __post_init__(self):
        if self.method not in ("midpoint", "cf4"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.frame not in ("lab", "first-rotating"):
            raise ValueError(f"unknown frame {self.frame!r}")

    def step(self, f_max):
        dt = self.dt if self.dt is not None else 1.0 / (self.steps_per_cycle * f_max)
        if dt * f_max * self.min_steps_per_cycle > 1 + 1e-12:
            raise StepSizeError(
                f"dt={dt:.3e} s exceeds 1/({self.min_steps_per_cycle} f_max) "
                f"with f_max={f_max:.6g} Hz")
        return dt


# --------------------------------------------------------------------------
# generic dense propagation (small systems, validation)

def propagate(H_of_t, psi0, T, cfg=PropagationConfig(), f_max=None):
    """Propagate ``psi0`` (StateVector) for a time T under ``H_of_t`` (Hz, H/h).

    ``f_max`` is the largest frequency in the Hamiltonian; if omitted it is
    estimated from the eigenvalue spread of H at a few sample times.
    """
    psi = np.array(psi0.amplitudes, dtype=complex)
    t0 = psi0.time
    if T <= 0:
        return StateVector(psi, t0)
    if f_max is None:
        samples = [H_of_t(t0 + x * T) for x in (0.0, 0.25, 0.5, 0.75)]
        f_max = max(np.ptp(np.linalg.eigvalsh(h)) for h in samples)
    if f_max == 0:
        return StateVector(psi, t0 + T)
    dt = cfg.step(f_max)
    n = max(1, int(math.ceil(T / dt)))
    dt = T / n
    for k in range(n):
        t = t0 + k * dt
        if cfg.method == "midpoint":
            psi = expm(-2j * np.pi * dt * H_of_t(t + 0.5 * dt)) @ psi
        else:
            h1, h2 = H_of_t(t + _GAUSS[0] * dt), H_of_t(t + _GAUSS[1] * dt)
            psi = expm(-2j * np.pi * dt * (_CF4[1] * h1 + _CF4[0] * h2)) @ psi
            psi = expm(-2j * np.pi * dt * (_CF4[0] * h1 + _CF4[1] * h2)) @ psi
    return StateVector(psi, t0 + T)


# --------------------------------------------------------------------------
# SU(2) fast path

@dataclass(frozen=True)
class ManifoldField:
    """Field coefficients (Hz) of Jx, Jy, Jz for one manifold under the CDD drives.

    ``frame='first-rotating'`` removes ``omega1*Jz`` exactly (no RWA).
    """

    g: float
    omega0: float
    Omega1: float
    omega1: float
    Omega2: float = 0.0
    omega2: float = 0.0
    frame: str = "lab"
    # (g_other/g-weighted) drives of the other coil: list of (Omega1, omega1, Omega2, omega2)
    cross: tuple = ()

    @property
    def f_max(self):
        freqs = [abs(self.omega0), self.omega1 + self.omega2]
        freqs += [w1 + w2 for _, w1, _, w2 in self.cross]
        if self.frame == "first-rotating":
            freqs.append(2 * self.omega1 + self.omega2)
        return max(freqs)

    def drive(self, t):
        a = 2 * np.pi * self.omega1 * t
        out = self.g * self.Omega1 * np.cos(a)
        if self.Omega2:
            out = out - self.g * self.Omega2 * np.sin(a) * np.cos(2 * np.pi * self.omega2 * t)
        for O1, w1, O2, w2 in self.cross:
            a2 = 2 * np.pi * w1 * t
            out = out + self.g * (O1 * np.cos(a2) - O2 * np.sin(a2) * np.cos(2 * np.pi * w2 * t))
        return out

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        b = self.drive(t)
        if self.frame == "lab":
            return b, np.zeros_like(t), np.full_like(t, self.omega0)
        a = 2 * np.pi * self.omega1 * t
        return b * np.cos(a), -b * np.sin(a), np.full_like(t, self.omega0 - self.omega1)


def manifold_field(cdd, label, dB_nT=0.0, frame="lab", cross_coupling=False,
                   omega2=None, constants=CONSTANTS):
    """SU(2) field of one manifold for a parameter set (optionally with a field offset)."""
    s1, s2 = cdd.stages(label)
    g = cdd.g(label)
    other = "D" if label == "S" else "S"
    cross = ()
    if cross_coupling:
        o1, o2 = cdd.stages(other)
        cross = ((o1.Omega, o1.omega, o2.Omega, o2.omega),)
    return ManifoldField(
        g=g,
        omega0=cdd.omega0(label) + g * constants.mu_B_over_h_per_nT * dB_nT,
        Omega1=s1.Omega, omega1=s1.omega,
        Omega2=s2.Omega, omega2=s2.omega if omega2 is None else omega2,
        frame=frame, cross=cross)


def _step_vectors(fieldfn, t0, dt, n, method):
    """Rotation vectors (radians) for n steps starting at t0, in application order."""
    t = t0 + dt * np.arange(n)
    if method == "midpoint":
        bx, by, bz = fieldfn(t + 0.5 * dt)
        s = 2 * np.pi * dt
        return s * bx, s * by, s * bz
    x1, y1, z1 = fieldfn(t + _GAUSS[0] * dt)
    x2, y2, z2 = fieldfn(t + _GAUSS[1] * dt)
    s = 2 * np.pi * dt
    a, b = _CF4
    vx = np.empty(2 * n)
    vy = np.empty(2 * n)
    vz = np.empty(2 * n)
    # first exponential uses (b*H1 + a*H2), second (a*H1 + b*H2)
    vx[0::2], vx[1::2] = s * (b * x1 + a * x2), s * (a * x1 + b * x2)
    vy[0::2], vy[1::2] = s * (b * y1 + a * y2), s * (a * y1 + b * y2)
    vz[0::2], vz[1::2] = s * (b * z1 + a * z2), s * (a * z1 + b * z2)
    return vx, vy, vz


def _plan(T, fieldfn, cfg, f_max=None):
    f_max = f_max or fieldfn.f_max
    dt = cfg.step(f_max)
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    return T / n, n


def su2_propagator(fieldfn, T, t0=0.0, cfg=PropagationConfig(), f_max=None):
    """2x2 propagator U(t0+T, t0) of the field ``fieldfn``."""
    dt, n = _plan(T, fieldfn, cfg, f_max)
    U = np.eye(2, dtype=complex)
    for k in range(0, n, _CHUNK):
        m = min(_CHUNK, n - k)
        U = kernels.su2_chain(*_step_vectors(fieldfn, t0 + k * dt, dt, m, cfg.method), U)
    return U


def su2_evolve(fieldfn, psi, T, t0=0.0, cfg=PropagationConfig(), f_max=None, p2=False):
    """Propagate a spinor; with ``p2`` also return the time average of P2(<sigma_z>)."""
    dt, n = _plan(T, fieldfn, cfg, f_max)
    stride = 1 if cfg.method == "midpoint" else 2
    psi = np.asarray(psi, dtype=complex)
    acc = 0.0
    cnt = 0
    for k in range(0, n, _CHUNK):
        m = min(_CHUNK, n - k)
        vecs = _step_vectors(fieldfn, t0 + k * dt, dt, m, cfg.method)
        if p2:
            psi, a, c = kernels.su2_track_p2(*vecs, psi, stride)
            acc += a
            cnt += c
        else:
            psi = kernels.su2_chain(*vecs) @ psi
    return (psi, acc / cnt) if p2 else psi


def su2_axis_angle(U):
    """(phi, n) with U = exp(-i phi n.sigma/2), phi in [0, 2 pi]; global phase removed."""
    U = U / np.sqrt(np.linalg.det(U))
    c = np.real(np.trace(U)) / 2
    sn = np.array([np.real(0.5j * np.trace(s @ U)) for s in _PAULI])
    s = np.linalg.norm(sn)
    phi = 2 * math.atan2(s, c)
    n = sn / s if s > 0 else np.array([0.0, 0.0, 1.0])
    return phi, n


_PAULI = (np.array([[0, 1], [1, 0]], complex), np.array([[0, -1j], [1j, 0]]),
          np.array([[1, 0], [0, -1]], complex))


def spin_representation(U, J):
    """Spin-J image of an SU(2) matrix (basis m = J..-J)."""
    phi, n = su2_axis_angle(U)
    ops = build_spin_operators(J)
    phase = np.sqrt(np.linalg.det(U))
    # half-integer representations carry the SU(2) global sign
    rep = expm(-1j * phi * (n[0] * ops.jx + n[1] * ops.jy + n[2] * ops.jz))
    return rep * (phase ** (2 * J))


def spinor_along(n):
    """Spin-1/2 state with Bloch vector n."""
    theta = math.acos(np.clip(n[2], -1, 1))
    phi = math.atan2(n[1], n[0])
    return np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)])


# --------------------------------------------------------------------------
# commensurate periods and Floquet ladders

@dataclass(frozen=True)
class Period:
    T: float
    n1: int
    n2: int
    omega2: float
    omega2_requested: float

    @property
    def rounding(self):
        return self.omega2 - self.omega2_requested


def commensurate_period(omega1, omega2=0.0, tol=0.01, T_max=10e-3):
    """Shortest period T = n1/omega1 with omega2 rounded to n2/T within ``tol`` Hz.

    Falls back to the best continued-fraction convergent with T <= T_max.
    """
    if omega2 == 0:
        return Period(1.0 / omega1, 1, 0, 0.0, 0.0)
    x = Fraction(omega2 / omega1)
    best = None
    # walk the convergents of omega2/omega1
    h0, h1, k0, k1 = 0, 1, 1, 0
    rest = x
    while True:
        a = math.floor(rest)
        h0, h1 = h1, a * h1 + h0
        k0, k1 = k1, a * k1 + k0
        if k1 / omega1 > T_max:
            break
        if h1 > 0:
            best = (k1, h1)
            if abs(h1 * omega1 / k1 - omega2) <= tol:
                break
        frac = rest - a
        if frac == 0:
            break
        rest = 1 / frac
    if best is None:
        raise ValueError("T_max too short to resolve omega2")
    n1, n2 = best
    return Period(n1 / omega1, n1, n2, n2 * omega1 / n1, omega2)


@dataclass
class ManifoldLadder:
    label: str
    spacing: float
    guess: float
    period: Period | None
    axis: np.ndarray
    overlap: float
    p2_average: float | None = None
    carrier: float = 0.0  # m-weighted drive frequencies fixed by the frame

    @property
    def reliable(self):
        return self.overlap >= 0.6

    def energy(self, m0, m1, m2, n_stages):
        if n_stages == 0:
            return m0 * self.spacing
        if n_stages == 1:
            return m0 * self._w1 + m1 * self.spacing
        return m0 * self._w1 + m1 * self._w2 + m2 * self.spacing


def floquet_ladder(cdd, label, dB_nT=0.0, cfg=PropagationConfig(), period_tol=0.01,
                   T_max=10e-3, want_p2=False, cross_coupling=False, constants=CONSTANTS):
    """Numeric ladder spacing of the outermost dressing layer of one manifold.

    Returns a :class:`ManifoldLadder`; ``p2_average`` is the period average
    of P2 along the Floquet state's orientation (quadrupole response).
    """
    s1, s2 = cdd.stages(label)
    nst = cdd.n_stages(label)
    g = cdd.g(label)
    if nst == 0:
        w0 = cdd.omega0(label) + g * constants.mu_B_over_h_per_nT * dB_nT
        lad = ManifoldLadder(label, w0, w0, None, np.array([0.0, 0, 1]), 1.0,
                             1.0 if want_p2 else None)
        lad._w1 = lad._w2 = 0.0
        return lad
    period = commensurate_period(s1.omega, s2.omega if nst == 2 else 0.0, period_tol, T_max)
    fieldfn = manifold_field(cdd, label, dB_nT, "lab", cross_coupling,
                             omega2=period.omega2 if nst == 2 else None, constants=constants)
    if nst == 2:
        rounded = cdd.with_stage2_detuning(label, cdd.omegabar0(label) - period.omega2)
        guess = dressing.rwa_ladder_spacings(rounded, label, dB_nT, constants)[1]
        n_ref = dressing.dressing_axes(rounded, label)[1]
        carrier = s1.omega + period.omega2
    else:
        guess = dressing.rwa_ladder_spacings(cdd, label, dB_nT, constants)[0]
        n_ref = dressing.dressing_axes(cdd, label)[0]
        carrier = s1.omega
    U = su2_propagator(fieldfn, period.T, 0.0, cfg)
    phi, n = su2_axis_angle(U)
    if float(n @ n_ref) < 0:
        n, phi = -n, -phi
    overlap = 0.5 * (1 + float(n @ n_ref))
    T = period.T
    raw = phi / (2 * np.pi * T) - carrier
    wrap = 2.0 / T
    spacing = raw + wrap * round((guess - raw) / wrap)
    if overlap < 0.6:
        warnings.warn(f"{label}: strong mixing, labels unreliable (overlap {overlap:.3f})",
                      LabelingWarning, stacklevel=2)
    p2 = None
    if want_p2:
        _, p2 = su2_evolve(fieldfn, spinor_along(n), T, 0.0, cfg, p2=True)
    lad = ManifoldLadder(label, spacing, guess, period, n, overlap, p2, carrier)
    lad._w1 = s1.omega
    lad._w2 = period.omega2
    return lad


@dataclass
class QuasiEnergySpectrum:
    """Dressed ladders of both manifolds.

    ``energies`` maps (label, m) to m*spacing (Hz) in the outermost rotating
    frame; lab quasi-energies add the fixed carrier terms and are only
    defined modulo 1/period.
    """

    energies: dict
    gaps: dict
    periods: dict
    ladders: dict = field(repr=False)

    @property
    def reliable(self):
        return all(l.reliable for l in self.ladders.values())


def quasi_energies(cdd, cfg=PropagationConfig(), dB_nT=0.0, **kw):
    ladders = {lbl: floquet_ladder(cdd, lbl, dB_nT, cfg, **kw) for lbl in ("S", "D")}
    energies = {}
    for lbl, J in (("S", 0.5), ("D", 2.5)):
        for m in np.arange(J, -J - 1, -1):
            energies[(lbl, float(m))] = float(m * ladders[lbl].spacing)
    return QuasiEnergySpectrum(
        energies=energies,
        gaps={lbl: l.spacing for lbl, l in ladders.items()},
        periods={lbl: (l.period.T if l.period else None) for lbl, l in ladders.items()},
        ladders=ladders,
    )


def transition_frequency_numeric(cdd, dB_nT=0.0, cfg=PropagationConfig(), **kw):
    """Target transition offset from the zero-field line using numeric ladders."""
    total = 0.0
    for label, sign in (("S", -1.0), ("D", 1.0)):
        lad = floquet_ladder(cdd, label, dB_nT, cfg, **kw)
        m0, m1, m2 = cdd.target.for_manifold(label)
        total += sign * lad.energy(m0, m1, m2, cdd.n_stages(label))
    return total


@dataclass(frozen=True)
class FieldSensitivity:
    linear: float
    quadratic: float
    residual: float
    flagged: bool
    offsets: np.ndarray


def magnetic_sensitivity_numeric(cdd, dB_grid, cfg=PropagationConfig(), **kw):
    """Degree-2 fit of the numeric transition frequency against a field offset (nT)."""
    grid = np.asarray(dB_grid, dtype=float)
    if grid.size < 5 or not np.allclose(np.sort(grid), -np.sort(grid)[::-1]):
        raise ValueError("need >= 5 grid points symmetric about 0")
    nu = np.array([transition_frequency_numeric(cdd, x, cfg, **kw) for x in grid])
    ref = nu[np.argmin(np.abs(grid))]
    offsets = nu - ref
    c2, c1, c0 = np.polyfit(grid, offsets, 2)
    resid = float(np.max(np.abs(np.polyval([c2, c1, c0], grid) - offsets)))
    span = float(np.ptp(offsets))
    return FieldSensitivity(c1, c2, resid, resid > 0.01 * span if span > 0 else False, offsets)


# --------------------------------------------------------------------------
# quadrupole response and the magic point

def gradient_sensitivity(cdd, theta_Q=THETA_D52, cfg=PropagationConfig(), **kw):
    """First-order shift of the target transition per unit field gradient (Hz per V/m^2)."""
    lad = floquet_ladder(cdd, "D", 0.0, cfg, want_p2=True, **kw)
    J = 2.5
    m_top = cdd.target.for_manifold("D")[cdd.n_stages("D")]
    return quadrupole_unit(theta_Q, 1.0) * (J * (J + 1) - 3 * m_top**2) * lad.p2_average


def numeric_magic_search(cdd, gradient, theta_Q=THETA_D52, cfg=PropagationConfig(), xtol=1.0,
                         **kw):
    """Second-stage D detuning where the transition's gradient derivative crosses zero.

    Secant iteration started from the rotating-wave magic point with the sign
    of the configured detuning.
    """
    if gradient == 0:
        raise ValueError("degenerate search: gradient is zero, the derivative vanishes identically")
    if not cdd.stage2_D.active:
        raise ValueError("second D stage is off")

    def deriv(delta):
        return gradient * gradient_sensitivity(cdd.with_stage2_detuning("D", delta), theta_Q, cfg, **kw)

    sign = -1.0 if cdd.stage2_D.Delta < 0 else 1.0
    guess = sign * dressing.magic_detuning(cdd.stage2_D.Omega, cdd.g_D, stage=2)
    lo, hi = 0.0, 2.0 * guess
    if deriv(lo) * deriv(hi) > 0:
        raise ValueError(f"no zero crossing of the gradient derivative in [{lo:.1f}, {hi:.1f}] Hz")
    sol = optimize.root_scalar(deriv, x0=guess, x1=0.9 * guess, method="secant", xtol=xtol)
    if not sol.converged:
        raise RuntimeError(f"magic search did not converge: {sol.flag}")
    return float(sol.root)


# --------------------------------------------------------------------------
# preparation and probing

def floquet_populations(fieldfn, psi, t0, omega1, omega2, guess, cfg=PropagationConfig(),
                        period_tol=0.01, T_max=10e-3):
    """Overlap of a spinor with the two Floquet states of a steady two-tone drive at t0.

    Returns ``{+0.5: p, -0.5: 1 - p}`` where +1/2 is the state whose ladder
    spacing unwraps to ``+guess``.
    """
    period = commensurate_period(omega1, omega2, period_tol, T_max)
    U = su2_propagator(fieldfn, period.T, t0, cfg)
    phi, n = su2_axis_angle(U)
    carrier = omega1 + period.omega2
    wrap = 2.0 / period.T
    raw = phi / (2 * np.pi * period.T) - carrier
    cand = raw + wrap * round((guess - raw) / wrap)
    alt = -raw + wrap * round((guess + raw) / wrap)
    if abs(alt - guess) < abs(cand - guess):
        n = -n
    p = abs(np.vdot(spinor_along(n), psi)) ** 2
    return {0.5: float(p), -0.5: float(1 - p)}


def simulate_adiabatic_preparation(program, cdd, psi0=None, cfg=PropagationConfig(), label="S",
                                   dB_nT=0.0, constants=CONSTANTS):
    """Propagate a bare state through a coil program and project on the dressed ladder.

    ``program`` is a :class:`cddclock.waveform.WaveformProgram` whose
    ``field(t)`` gives the drive amplitude (Hz, before the g-factor). The final
    segment must be a steady hold. Returns ``{m2: population}``.
    """
    g = cdd.g(label)
    w0 = cdd.omega0(label) + g * constants.mu_B_over_h_per_nT * dB_nT
    s1, s2 = cdd.stages(label)

    class _F:
        f_max = program.max_frequency_hz()

        def __call__(self, t):
            t = np.asarray(t, dtype=float)
            return g * program.field(t), np.zeros_like(t), np.full_like(t, w0)

    fieldfn = _F()
    if psi0 is None:
        psi0 = np.array([0.0, 1.0], dtype=complex)  # m = -1/2
    psi = su2_evolve(fieldfn, psi0, program.duration, 0.0, cfg)
    guess = dressing.rwa_ladder_spacings(cdd, label, dB_nT, constants)[1]
    pops = floquet_populations(fieldfn, psi, program.duration, s1.omega, s2.omega, guess, cfg)
    target = cdd.target.for_manifold(label)[2]
    if pops.get(target, 0.0) < 0.5:
        warnings.warn(f"non-adiabatic preparation: target population {pops.get(target, 0):.3f}",
                      RuntimeWarning, stacklevel=2)
    return pops


def probe_lines(cdd, ladders=None):
    """Probe resonances for the bare pair |S,-1/2> <-> |D,-3/2>.

    Each line is (offset Hz, relative coupling). The S state is the prepared
    target state; every D dressed state and every sideband pair is listed.
    Degenerate lines are merged coherently.
    """
    tgt = cdd.target
    mS = tgt.for_manifold("S")
    nS, nD = cdd.n_stages("S"), cdd.n_stages("D")
    ampS = dressing.sideband_amplitudes(cdd, "S", mS[nS] if nS else mS[0])

    def energy(label, m0, m1, m2, n):
        if ladders is not None:
            return ladders[label].energy(m0, m1, m2, n)
        s1, s2 = cdd.stages(label)
        if n == 0:
            return m0 * cdd.omega0(label)
        if n == 1:
            return m0 * s1.omega + m1 * cdd.omegabar0(label)
        return m0 * s1.omega + m1 * s2.omega + m2 * cdd.omegabar1(label)

    lines = {}
    m0S, m0D = tgt.m0_S, tgt.m0_D
    for (a0, a1), aS in ampS.items():
        if abs(a0 - m0S) > 1e-9 or abs(aS) < 1e-12:
            continue
        eS = energy("S", a0, a1, mS[2] if nS == 2 else a1, nS)
        for mD_top in np.arange(2.5, -3.5, -1) if nD else [m0D]:
            ampD = dressing.sideband_amplitudes(cdd, "D", mD_top)
            for (b0, b1), aD in ampD.items():
                if abs(b0 - m0D) > 1e-9 or abs(aD) < 1e-12:
                    continue
                eD = energy("D", b0, b1, mD_top, nD)
                key = round(eD - eS, 6)
                lines[key] = lines.get(key, 0.0) + np.conj(aS) * aD
    return [(f, abs(c)) for f, c in sorted(lines.items()) if abs(c) > 1e-9]


def rabi_lineshape(detuning, Omega, t):
    """Rabi excitation with resonant Rabi frequency Omega (Hz): sin^2(pi Omega t) on resonance."""
    w = np.sqrt(Omega**2 + np.asarray(detuning, dtype=float) ** 2)
    return np.where(w > 0, Omega**2 / np.where(w > 0, w, 1) ** 2, 0.0) * np.sin(np.pi * w * t) ** 2


def simulate_rabi_scan(cdd, detuning_grid, probe_time, cfg=None, **kw):
    """Excitation probability vs laser detuning (Hz from the zero-field line).

    The laser couples |S,-1/2> <-> |D,-3/2> with strength ``cdd.laser_Omega``;
    each dressed resonance contributes a Rabi line with its sideband-weighted
    coupling. Line positions use numeric Floquet ladders when ``cfg`` is
    given and the rotating-wave ladders otherwise.
    """
    for lbl in ("S", "D"):
        if cdd.n_stages(lbl) and cdd.laser_Omega * 10 > cdd.stage_rabi(lbl):
            raise ValueError("hierarchy violated: laser_Omega must be << dressing couplings")
    ladders = None
    if cfg is not None:
        ladders = {lbl: floquet_ladder(cdd, lbl, 0.0, cfg, **kw) for lbl in ("S", "D")}
    grid = np.asarray(detuning_grid, dtype=float)
    p = np.zeros_like(grid)
    for f, c in probe_lines(cdd, ladders):
        p += rabi_lineshape(grid - f, cdd.laser_Omega * c, probe_time)
    return np.clip(p, 0.0, 1.0)
