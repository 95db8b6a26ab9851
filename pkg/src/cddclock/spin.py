"""Angular-momentum algebra and the bare/drive/quadrupole Hamiltonians.

All Hamiltonians are returned in frequency units (H/h, Hz).
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .constants import CONSTANTS, PhysicalConstants

G_S = 2.00225664
G_D = 1.2003340
# Ca+ 3d D5/2 quadrupole moment, units of e*a0**2
THETA_D52 = 1.83


def _as_half_integer(J):
    twoJ = 2 * Fraction(J).limit_denominator(1000)
    if twoJ.denominator != 1 or twoJ < 0 or abs(float(twoJ) - 2 * float(J)) > 1e-12:
        raise ValueError(f"J must be a non-negative half-integer, got {J!r}")
    return int(twoJ)


@dataclass(frozen=True)
class SpinOperators:
    jx: np.ndarray
    jy: np.ndarray
    jz: np.ndarray

    @property
    def jp(self):
        return self.jx + 1j * self.jy

    @property
    def jm(self):
        return self.jx - 1j * self.jy

    @property
    def m(self):
        return np.real(np.diag(self.jz))


def build_spin_operators(J):
    """Spin matrices for spin J in the |J, m> basis ordered m = J, J-1, ..., -J."""
    twoJ = _as_half_integer(J)
    j = twoJ / 2
    m = j - np.arange(twoJ + 1)
    # <m+1|J+|m> = sqrt(J(J+1) - m(m+1)) sits on the first superdiagonal
    ladder = np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1))
    jp = np.diag(ladder, k=1).astype(complex)
    jm = jp.conj().T
    return SpinOperators(
        jx=0.5 * (jp + jm),
        jy=-0.5j * (jp - jm),
        jz=np.diag(m).astype(complex),
    )


@dataclass(frozen=True)
class SpinManifold:
    label: str
    J: float
    g: float
    ops: SpinOperators = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.label not in ("S", "D"):
            raise ValueError(f"manifold label must be 'S' or 'D', got {self.label!r}")
        _as_half_integer(self.J)
        if not self.g > 0:
            raise ValueError("g-factor must be positive")
        object.__setattr__(self, "ops", build_spin_operators(self.J))

    @property
    def dim(self):
        return int(round(2 * self.J)) + 1

    @property
    def m(self):
        return self.ops.m


def s_manifold(g=G_S):
    return SpinManifold("S", 0.5, g)


def d_manifold(g=G_D):
    return SpinManifold("D", 2.5, g)


@dataclass(frozen=True)
class StaticField:
    B0: float

    def __post_init__(self):
        if self.B0 < 0:
            raise ValueError("B0 must be non-negative")


def zeeman_hamiltonian(manifold, field, constants: PhysicalConstants = CONSTANTS):
    """g * (mu_B/h) * B0 * Jz in Hz."""
    return manifold.g * constants.mu_B_over_h * field.B0 * manifold.ops.jz


def drive_field(g, Omega1, omega1, Omega2, omega2, t):
    """Coefficient of Jx (Hz) of the two-stage rf drive at time t.

    ``g*Omega1*cos(2 pi omega1 t) - g*Omega2*sin(2 pi omega1 t)*cos(2 pi omega2 t)``;
    frequencies are ordinary (not angular) and all drives are colinear along x.
    Accepts scalar or array ``t``.
    """
    a = 2 * np.pi * omega1 * np.asarray(t, dtype=float)
    b = 2 * np.pi * omega2 * np.asarray(t, dtype=float)
    return g * Omega1 * np.cos(a) - g * Omega2 * np.sin(a) * np.cos(b)


def quadrupole_unit(theta_Q=THETA_D52, gradient=1.0, constants: PhysicalConstants = CONSTANTS):
    """Frequency scale (Theta/h)*(3/8)*dEz/dz in Hz; theta_Q in e*a0**2, gradient in V/m**2."""
    theta_si = theta_Q * constants.electron_charge * constants.bohr_radius**2
    return theta_si * gradient * 3.0 / 8.0 / constants.planck_h


def quadrupole_hamiltonian(manifold, theta_Q=THETA_D52, gradient=0.0, constants=CONSTANTS):
    """Diagonal tensor shift (Theta/h)(3/8)(dEz/dz)(J(J+1) - 3 m^2) in Hz."""
    if manifold.label != "D":
        raise ValueError("quadrupole shift is only modelled for the D manifold")
    J = manifold.J
    m = manifold.m
    return np.diag(quadrupole_unit(theta_Q, gradient, constants) * (J * (J + 1) - 3 * m**2)).astype(complex)
