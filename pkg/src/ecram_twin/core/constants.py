"""Physical constants (SI) used throughout the package."""

from scipy import constants as _c

ELEMENTARY_CHARGE = _c.e  # C
BOLTZMANN = _c.k  # J/K
BOLTZMANN_EV = _c.k / _c.e  # eV/K
AVOGADRO = _c.N_A  # 1/mol
FARADAY = _c.physical_constants["Faraday constant"][0]  # C/mol
GAS_CONSTANT = _c.R  # J/(mol K)

ZERO_CELSIUS = 273.15


def celsius(temperature_c: float) -> float:
    """Convert degrees Celsius to kelvin."""
    return temperature_c + ZERO_CELSIUS
