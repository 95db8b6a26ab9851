"""Linear ion chains in a harmonic trap: positions, axial field gradients, quadrupole shifts."""

from dataclasses import dataclass
import math

import numpy as np

from .constants import CONSTANTS
from .spin import THETA_D52, quadrupole_unit


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrapConfig:
    """Trap frequencies are angular (rad/s); ``omega_r`` is bookkeeping only."""

    omega_z: float
    N: int = 5
    omega_r: float | None = None

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.omega_z <= 0:
            raise ValueError("omega_z must be positive")
        if self.omega_r is not None and self.omega_r <= self.omega_z:
            raise ValueError("omega_r must exceed omega_z for a linear chain")


@dataclass(frozen=True)
class IonCrystal:
    positions: np.ndarray  # m, ascending
    length_scale: float  # m
    residual: float = 0.0

    @property
    def N(self):
        return len(self.positions)

    @property
    def span(self):
        return float(self.positions[-1] - self.positions[0])


def length_scale(omega_z, constants=CONSTANTS):
    """l = (e^2/(4 pi eps0 m omega_z^2))^(1/3)."""
    return (constants.coulomb_constant_e2 / (constants.ion_mass * omega_z**2)) ** (1.0 / 3.0)


def _force(u):
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, np.inf)
    return -u + np.sum(np.sign(d) / d**2, axis=1)


def _jacobian(u):
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, np.inf)
    off = 2.0 / np.abs(d) ** 3
    jac = off.copy()
    np.fill_diagonal(jac, 0.0)
    diag = -1.0 - off.sum(axis=1)
    np.fill_diagonal(jac, diag)
    return jac


def dimensionless_positions(N, tol=1e-12, max_iter=10_000):
    """Equilibrium of u_i = sum_j sign(u_i - u_j)/(u_i - u_j)^2 by damped Newton."""
    if N > 50:
        raise ValueError("N <= 50 supported")
    if N == 1:
        return np.zeros(1), 0.0
    # spread the initial guess roughly like the known N^0.56 scaling
    u = np.linspace(-1, 1, N) * 1.0 * N**0.56
    for it in range(max_iter):
        F = _force(u)
        res = np.max(np.abs(F)) / max(1.0, np.max(np.abs(u)))
        if res < tol:
            u = 0.5 * (u - u[::-1])
            return u, float(np.max(np.abs(_force(u))))
        step = np.linalg.solve(_jacobian(u), -F)
        lam = 1.0
        while lam > 1e-6:
            trial = u + lam * step
            if np.all(np.diff(trial) > 0) and np.max(np.abs(_force(trial))) < np.max(np.abs(F)):
                break
            lam *= 0.5
        u = u + lam * step
    raise ConvergenceError(f"no convergence after {max_iter} iterations, residual {res:.3e}")


def equilibrium_positions(cfg, constants=CONSTANTS):
    u, res = dimensionless_positions(cfg.N)
    l = length_scale(cfg.omega_z, constants)
    return IonCrystal(u * l, l, res)


def axial_field_gradient(crystal, cfg, constants=CONSTANTS):
    """Per-ion axial gradient (V/m^2): trap term m w^2/e plus 2 k e/|d|^3 from each neighbour."""
    z = np.asarray(crystal.positions, dtype=float)
    d = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(d, np.inf)
    if np.any(d == 0):
        raise ValueError("overlapping ion positions")
    e = constants.electron_charge
    trap = constants.ion_mass * cfg.omega_z**2 / e
    k = constants.coulomb_constant_e2 / e**2  # 1/(4 pi eps0)
    return trap + np.sum(2 * k * e / d**3, axis=1)


def per_ion_qps(crystal, cfg, theta_Q=THETA_D52, mJ=1.5, suppression=1.0, J=2.5,
                constants=CONSTANTS):
    """Quadrupole shift (Hz) of level mJ at every ion, scaled by a suppression factor."""
    grad = axial_field_gradient(crystal, cfg, constants)
    return suppression * quadrupole_unit(theta_Q, grad) * (J * (J + 1) - 3 * mJ**2)


def inhomogeneity_fit(positions, shifts):
    """Quadratic least-squares fit of shift vs position (position in um).

    Returns (linear Hz/um, quadratic Hz/um^2, spread Hz).
    """
    x = np.asarray(positions, dtype=float) * 1e6
    y = np.asarray(shifts, dtype=float)
    if x.size < 3:
        raise ValueError("need >= 3 ions")
    if np.unique(x).size < 3:
        raise ValueError("degenerate positions")
    c2, c1, _ = np.polyfit(x, y, 2)
    return float(c1), float(c2), float(np.ptp(y))


def omega_z_for_span(span, N=5, constants=CONSTANTS):
    """Axial angular frequency that gives a chain of the requested span (m)."""
    u, _ = dimensionless_positions(N)
    l = span / (u[-1] - u[0])
    return math.sqrt(constants.coulomb_constant_e2 / (constants.ion_mass * l**3))


def default_trap(N=5, span=20e-6):
    return TrapConfig(omega_z=omega_z_for_span(span, N), N=N)
