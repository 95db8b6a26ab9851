"""Closed-form dressed-state analysis for two-stage continuous decoupling.

Conventions
-----------
All frequencies are ordinary frequencies in Hz. For manifold ``i`` the bare
splitting is ``omega0``; the first drive runs at ``omega1 = omega0 - Delta1``
and produces a ladder with spacing ``sqrt((g*Omega1/2)**2 + Delta1**2)``.
The second drive (``-g*Omega2*sin(w1 t)*cos(w2 t)*Jx``) runs at
``omega2 = omegabar0 - Delta2``. Its carrier is in quadrature with the first
drive, so only half of its amplitude survives the first rotating-wave average:
the effective second-stage coupling is ``g*Omega2/4``.

The doubly dressed state with quantum numbers ``(m0, m1, m2)`` has lab-frame
spectral component ``m0*omega1 + m1*omega2 + m2*omegabar1``. A transition
frequency is quoted relative to the zero-field optical line as
``E_D - E_S``.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy import optimize
from scipy.linalg import expm

from .constants import CONSTANTS
from .spin import G_D, G_S, build_spin_operators

MANIFOLD_J = {"S": 0.5, "D": 2.5}


class NotCompensableError(ValueError):
    """Raised when no second-stage S detuning nulls the linear Zeeman response."""


@dataclass(frozen=True)
class DriveStage:
    omega: float
    Omega: float
    Delta: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.Omega < 0:
            raise ValueError("drive amplitude Omega must be >= 0")

    @property
    def active(self):
        return self.Omega > 0


@dataclass(frozen=True)
class TargetTransition:
    m0_S: float = -0.5
    m1_S: float = 0.5
    m2_S: float = 0.5
    m0_D: float = -1.5
    m1_D: float = 0.5
    m2_D: float = 0.5

    def for_manifold(self, label):
        if label == "S":
            return self.m0_S, self.m1_S, self.m2_S
        return self.m0_D, self.m1_D, self.m2_D

    def flipped(self):
        return TargetTransition(*(-x for x in (self.m0_S, self.m1_S, self.m2_S,
                                                self.m0_D, self.m1_D, self.m2_D)))


def stage_coupling(Omega, g, stage=1):
    """Effective rotating-frame coupling of a drive stage, in Hz."""
    return g * Omega / 2.0 if stage == 1 else g * Omega / 4.0


def dressed_splitting(Omega, Delta, g, stage=1):
    """Ladder spacing sqrt(c**2 + Delta**2) with c the stage coupling.

    ``stage=1`` is the textbook ``sqrt((g*Omega/2)**2 + Delta**2)``.
    """
    if Omega < 0:
        raise ValueError("Omega must be >= 0")
    return math.hypot(stage_coupling(Omega, g, stage), Delta)


def mixing_angle(Delta, omega_bar):
    """cos(theta) = Delta / omega_bar."""
    if not omega_bar > 0:
        raise ValueError("omega_bar must be positive")
    if abs(Delta) > omega_bar * (1 + 1e-12):
        raise ValueError(f"|Delta|={abs(Delta)} exceeds omega_bar={omega_bar}")
    return float(np.clip(Delta / omega_bar, -1.0, 1.0))


@dataclass(frozen=True)
class CddParameterSet:
    """Bare splittings, drive stages, probe strength and target quantum numbers.

    ``omega0_S``/``omega0_D`` are the bare Zeeman splittings the drives refer
    to; ``B0`` and the g-factors only enter field sensitivities and the
    consistency residual (:meth:`zeeman_residual`).
    """

    B0: float
    omega0_S: float
    omega0_D: float
    stage1_S: DriveStage
    stage2_S: DriveStage
    stage1_D: DriveStage
    stage2_D: DriveStage
    laser_Omega: float = 10.0
    target: TargetTransition = field(default_factory=TargetTransition)
    g_S: float = G_S
    g_D: float = G_D

    def __post_init__(self):
        for label in ("S", "D"):
            s1, s2 = self.stages(label)
            w0 = self.omega0(label)
            if abs((w0 - s1.omega) - s1.Delta) > 1e-6 * max(1.0, abs(w0)):
                raise ValueError(f"stage1_{label}.Delta inconsistent with omega0 - omega1")
            if s2.active:
                if not s1.active:
                    raise ValueError(f"second stage on {label} needs an active first stage")
                wbar = self.omegabar0(label)
                if abs((wbar - s2.omega) - s2.Delta) > 1e-6 * max(1.0, wbar):
                    raise ValueError(f"stage2_{label}.Delta inconsistent with omegabar0 - omega2")
                if not s2.omega < s1.omega / 10:
                    raise ValueError(f"hierarchy violated on {label}: omega2 must be < omega1/10")
        couplings = [self.stage_rabi(lbl) for lbl in ("S", "D") if self.stages(lbl)[0].active]
        if couplings and self.laser_Omega * 10 > min(couplings):
            raise ValueError("laser_Omega must be at least 10x below every dressing coupling")

    # -- construction -------------------------------------------------------
    @classmethod
    def from_frequencies(cls, B0, omega_S1, Omega_S1, omega_S2, Omega_S2,
                         omega_D1, Omega_D1, omega_D2, Omega_D2,
                         Delta_S1=0.0, Delta_D1=0.0, g_S=G_S, g_D=G_D,
                         laser_Omega=10.0, target=None):
        """Build a set from drive frequencies (Table-style); detunings are derived."""
        stages = {}
        omega0 = {}
        for label, w1, O1, w2, O2, d1, g in (
            ("S", omega_S1, Omega_S1, omega_S2, Omega_S2, Delta_S1, g_S),
            ("D", omega_D1, Omega_D1, omega_D2, Omega_D2, Delta_D1, g_D),
        ):
            omega0[label] = w1 + d1
            s1 = DriveStage(w1, O1, d1)
            wbar = dressed_splitting(O1, d1, g)
            s2 = DriveStage(w2, O2, wbar - w2 if O2 > 0 else 0.0)
            stages[label] = (s1, s2)
        return cls(B0=B0, omega0_S=omega0["S"], omega0_D=omega0["D"],
                   stage1_S=stages["S"][0], stage2_S=stages["S"][1],
                   stage1_D=stages["D"][0], stage2_D=stages["D"][1],
                   laser_Omega=laser_Omega, target=target or TargetTransition(),
                   g_S=g_S, g_D=g_D)

    def with_stage2_detuning(self, label, Delta2):
        """Copy with the second-stage detuning of ``label`` set (omega2 follows)."""
        s2 = self.stages(label)[1]
        new = DriveStage(self.omegabar0(label) - Delta2, s2.Omega, Delta2, s2.phase)
        return replace(self, **{f"stage2_{label}": new})

    def scaled(self, amplitude=1.0):
        """Copy with all drive amplitudes scaled and frequencies re-resonated.

        Detunings are kept; ``omega2`` follows the new first-stage splitting.
        """
        out = {}
        for label in ("S", "D"):
            s1, s2 = self.stages(label)
            n1 = replace(s1, Omega=s1.Omega * amplitude)
            wbar = dressed_splitting(n1.Omega, n1.Delta, self.g(label))
            n2 = replace(s2, Omega=s2.Omega * amplitude, omega=wbar - s2.Delta if s2.active else s2.omega)
            out[f"stage1_{label}"], out[f"stage2_{label}"] = n1, n2
        return replace(self, **out)

    # -- accessors ----------------------------------------------------------
    def stages(self, label):
        if label == "S":
            return self.stage1_S, self.stage2_S
        if label == "D":
            return self.stage1_D, self.stage2_D
        raise ValueError(f"unknown manifold {label!r}")

    def g(self, label):
        return self.g_S if label == "S" else self.g_D

    def omega0(self, label):
        return self.omega0_S if label == "S" else self.omega0_D

    def omegabar0(self, label):
        s1, _ = self.stages(label)
        return dressed_splitting(s1.Omega, s1.Delta, self.g(label))

    def omegabar1(self, label):
        _, s2 = self.stages(label)
        return dressed_splitting(s2.Omega, s2.Delta, self.g(label), stage=2)

    def stage_rabi(self, label):
        """Smallest active dressing coupling of a manifold (Hz)."""
        s1, s2 = self.stages(label)
        if s2.active:
            return stage_coupling(s2.Omega, self.g(label), 2)
        return stage_coupling(s1.Omega, self.g(label), 1)

    def n_stages(self, label):
        s1, s2 = self.stages(label)
        return int(s1.active) + int(s2.active)

    def zeeman_residual(self, label, constants=CONSTANTS):
        """Configured bare splitting minus g*mu_B*B0/h (Hz)."""
        return self.omega0(label) - self.g(label) * constants.mu_B_over_h * self.B0


@dataclass(frozen=True)
class MixingAngles:
    c1_S: float
    c2_S: float
    c1_D: float
    c2_D: float

    def __post_init__(self):
        for v in (self.c1_S, self.c2_S, self.c1_D, self.c2_D):
            if v * v > 1 + 1e-12:
                raise ValueError("cos(theta)**2 must be <= 1")

    def for_manifold(self, label):
        return (self.c1_S, self.c2_S) if label == "S" else (self.c1_D, self.c2_D)


def _stage_cos(Delta, omega_bar, active):
    # an inactive stage leaves the bare quantisation axis: cos(theta) = 1
    if not active or omega_bar == 0:
        return 1.0
    return mixing_angle(Delta, omega_bar)


def mixing_angles(cdd):
    vals = {}
    for label in ("S", "D"):
        s1, s2 = cdd.stages(label)
        vals[f"c1_{label}"] = _stage_cos(s1.Delta, cdd.omegabar0(label), s1.active)
        vals[f"c2_{label}"] = _stage_cos(s2.Delta, cdd.omegabar1(label), s2.active)
    return MixingAngles(**vals)


def zeeman_sensitivity(cdd, angles=None, constants=CONSTANTS):
    """Linear field sensitivity of the target transition in Hz/nT.

    ``(mu_B/h) * [c1D c2D gD m2D - c1S c2S gS m2S]``; with undriven manifolds
    the relevant quantum number falls back to the last active layer.
    """
    angles = angles or mixing_angles(cdd)
    total = 0.0
    for label, sign in (("S", -1.0), ("D", 1.0)):
        c1, c2 = angles.for_manifold(label)
        total += sign * c1 * c2 * cdd.g(label) * _top_quantum_number(cdd, label)
    return constants.mu_B_over_h_per_nT * total


def _top_quantum_number(cdd, label):
    m0, m1, m2 = cdd.target.for_manifold(label)
    return (m0, m1, m2)[cdd.n_stages(label)]


def qps_suppression_factor(cos_theta1_D, cos_theta2_D):
    """(1 - 3 c1**2)(1 - 3 c2**2): unity for doubly resonant drives."""
    for c in (cos_theta1_D, cos_theta2_D):
        if c * c > 1 + 1e-12:
            raise ValueError("cos(theta)**2 must be <= 1")
    return (1 - 3 * cos_theta1_D**2) * (1 - 3 * cos_theta2_D**2)


def qps_relative_to_bare(cos_theta1_D, cos_theta2_D):
    """Dressed quadrupole shift of level m2 relative to the bare shift of m = m2.

    Equals P2(c1) P2(c2) = qps_suppression_factor / 4; bare states (c = 1) give 1.
    """
    return qps_suppression_factor(cos_theta1_D, cos_theta2_D) / 4.0


def magic_detuning(Omega2_D, g_D=G_D, stage=2):
    """Detuning that puts the stage on cos**2(theta) = 1/3.

    ``stage=2`` uses the second-stage coupling g*Omega/4 (the value the
    driven dynamics and the tabulated drive frequencies support);
    ``stage=1`` uses g*Omega/2, i.e. g*Omega/sqrt(8).
    """
    if Omega2_D < 0:
        raise ValueError("Omega must be >= 0")
    return stage_coupling(Omega2_D, g_D, stage) / math.sqrt(2.0)


def compensation_detuning_S(cdd, tol=1e-3, span=None):
    """Second-stage S detuning that zeroes the linear Zeeman sensitivity.

    The D-stage-2 detuning is held fixed. Bisection to ``tol`` Hz over
    ``[-span, span]`` (default 50x the S second-stage coupling).
    """
    if not cdd.stage2_S.active:
        raise NotCompensableError("second S stage is off")

    def sens(delta):
        return zeeman_sensitivity(cdd.with_stage2_detuning("S", delta))

    if sens(0.0) == 0.0:
        return 0.0
    span = span or 50 * stage_coupling(cdd.stage2_S.Omega, cdd.g_S, 2)
    lo, hi = -span, span
    f_lo, f_hi = sens(lo), sens(hi)
    if f_lo * f_hi > 0:
        raise NotCompensableError(
            "not compensable with these parameters: no sign change of the linear "
            f"sensitivity for Delta2_S in [{lo:.1f}, {hi:.1f}] Hz")
    return optimize.bisect(sens, lo, hi, xtol=tol)


def artificial_transition_frequency(cdd):
    """Target transition frequency offset from the zero-field optical line (Hz).

    Sum over manifolds (D minus S) of ``m0*omega1 + m1*omega2 + m2*omegabar1``,
    truncated at the last active stage; undriven manifolds give ``m0*omega0``.
    """
    total = 0.0
    for label, sign in (("S", -1.0), ("D", 1.0)):
        total += sign * _manifold_energy(cdd, label, cdd.omegabar1(label), cdd.omegabar0(label))
    return total


def _manifold_energy(cdd, label, spacing2, spacing1):
    m0, m1, m2 = cdd.target.for_manifold(label)
    s1, s2 = cdd.stages(label)
    n = cdd.n_stages(label)
    if n == 0:
        return m0 * cdd.omega0(label)
    if n == 1:
        return m0 * s1.omega + m1 * spacing1
    return m0 * s1.omega + m1 * s2.omega + m2 * spacing2


def rwa_ladder_spacings(cdd, label, dB_nT=0.0, constants=CONSTANTS):
    """Exact rotating-wave ladder spacings (omegabar0, omegabar1) under a field offset.

    The field offset detunes the bare splitting; the drive frequencies stay put.
    """
    s1, s2 = cdd.stages(label)
    g = cdd.g(label)
    d1 = s1.Delta + g * constants.mu_B_over_h_per_nT * dB_nT
    wbar0 = math.hypot(stage_coupling(s1.Omega, g, 1), d1) if s1.active else abs(d1)
    if not s2.active:
        return wbar0, 0.0
    d2 = wbar0 - s2.omega
    return wbar0, math.hypot(stage_coupling(s2.Omega, g, 2), d2)


def rwa_transition_offset(cdd, dB_nT=0.0, constants=CONSTANTS):
    """Target transition offset in the rotating-wave picture under a field offset."""
    total = 0.0
    for label, sign in (("S", -1.0), ("D", 1.0)):
        if cdd.n_stages(label) == 0:
            m0 = cdd.target.for_manifold(label)[0]
            w0 = cdd.omega0(label) + cdd.g(label) * constants.mu_B_over_h_per_nT * dB_nT
            total += sign * m0 * w0
            continue
        wbar0, wbar1 = rwa_ladder_spacings(cdd, label, dB_nT, constants)
        total += sign * _manifold_energy(cdd, label, wbar1, wbar0)
    return total


def rwa_field_response(cdd, h=5.0):
    """(linear Hz/nT, quadratic Hz/nT**2) of the RWA transition about zero offset."""
    fp, f0, fm = (rwa_transition_offset(cdd, x) for x in (h, 0.0, -h))
    return (fp - fm) / (2 * h), (fp - 2 * f0 + fm) / (2 * h * h)


def amplitude_sensitivity(cdd, h=1e-4):
    """Transition shift per unit fractional change of every drive amplitude (Hz)."""
    def shifted(eps):
        out = {}
        for label in ("S", "D"):
            s1, s2 = cdd.stages(label)
            out[f"stage1_{label}"] = replace(s1, Omega=s1.Omega * (1 + eps))
            out[f"stage2_{label}"] = replace(s2, Omega=s2.Omega * (1 + eps))
        # bypass validation of Delta bookkeeping: evaluate energies directly
        total = 0.0
        for label, sign in (("S", -1.0), ("D", 1.0)):
            s1, s2 = out[f"stage1_{label}"], out[f"stage2_{label}"]
            g = cdd.g(label)
            if not s1.active:
                total += sign * cdd.target.for_manifold(label)[0] * cdd.omega0(label)
                continue
            wbar0 = math.hypot(stage_coupling(s1.Omega, g, 1), s1.Delta)
            wbar1 = math.hypot(stage_coupling(s2.Omega, g, 2), wbar0 - s2.omega) if s2.active else 0.0
            total += sign * _manifold_energy(cdd, label, wbar1, wbar0)
        return total
    return (shifted(h) - shifted(-h)) / (2 * h)


def dressing_axes(cdd, label):
    """Unit vectors of the first and second dressing axes at t = 0 (lab frame)."""
    s1, s2 = cdd.stages(label)
    g = cdd.g(label)
    if not s1.active:
        n1 = np.array([0.0, 0.0, 1.0])
        return n1, n1
    c1 = stage_coupling(s1.Omega, g, 1)
    n1 = np.array([c1, 0.0, s1.Delta]) / cdd.omegabar0(label)
    if not s2.active:
        return n1, n1
    c2 = stage_coupling(s2.Omega, g, 2)
    n2 = (s2.Delta * n1 + c2 * np.array([0.0, 1.0, 0.0])) / cdd.omegabar1(label)
    return n1, n2


def dressed_state(cdd, label, m):
    """Analytic dressed eigenvector (spin-J, basis m = J..-J) with projection m
    on the outermost dressing axis at t = 0."""
    J = MANIFOLD_J[label]
    ops = build_spin_operators(J)
    _, n2 = dressing_axes(cdd, label)
    theta = math.acos(np.clip(n2[2], -1, 1))
    phi = math.atan2(n2[1], n2[0])
    rot = expm(-1j * phi * ops.jz) @ expm(-1j * theta * ops.jy)
    idx = int(round(J - m))
    return rot[:, idx]


def sideband_amplitudes(cdd, label, m_top):
    """Bare-basis amplitudes <m0|m1><m1|m2> of a dressed state, RWA picture.

    Returns a dict ``{(m0, m1): amplitude}`` (for one-stage manifolds the key is
    ``(m0, m_top)``); used for probe line strengths.
    """
    J = MANIFOLD_J[label]
    ops = build_spin_operators(J)
    m = ops.m
    angles = mixing_angles(cdd)
    c1, c2 = angles.for_manifold(label)
    n = cdd.n_stages(label)
    r1 = expm(-1j * math.acos(c1) * ops.jy)
    r2 = expm(1j * math.acos(c2) * ops.jx)
    out = {}
    k = int(round(J - m_top))
    if n == 0:
        return {(m_top, m_top): 1.0}
    for i0, m0 in enumerate(m):
        if n == 1:
            out[(m0, m_top)] = r1[i0, k]
        else:
            for i1, m1 in enumerate(m):
                out[(m0, m1)] = r1[i0, i1] * r2[i1, k]
    return out
