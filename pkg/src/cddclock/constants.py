"""Physical constants used throughout the package (SI, frequencies in Hz)."""

from dataclasses import dataclass

from scipy import constants as _c


@dataclass(frozen=True)
class PhysicalConstants:
    mu_B_over_h: float = _c.physical_constants["Bohr magneton in Hz/T"][0]
    electron_charge: float = _c.e
    bohr_radius: float = _c.physical_constants["Bohr radius"][0]
    # 40Ca+ : neutral-atom mass minus one electron
    ion_mass: float = 39.962590863 * _c.physical_constants["atomic mass constant"][0] - _c.m_e
    coulomb_constant_e2: float = _c.e**2 / (4 * _c.pi * _c.epsilon_0)
    planck_h: float = _c.h

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value > 0:
                raise ValueError(f"constant {name} must be positive, got {value}")

    @property
    def mu_B_over_h_per_nT(self):
        """Bohr magneton over h in Hz/nT (about 13.996)."""
        return self.mu_B_over_h * 1e-9


CONSTANTS = PhysicalConstants()

# 729 nm S1/2 -> D5/2 clock transition of 40Ca+
CLOCK_FREQUENCY = 411.0421297763904e12
# natural lifetime of D5/2
D52_LIFETIME = 1.168
