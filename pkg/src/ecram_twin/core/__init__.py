"""Domain types, unit policy and constitutive laws."""

from .config import (
    CONFIG_ENV,
    ConfigError,
    config_hash,
    electrolyte_from_config,
    geometry_from_config,
    load_config,
    lsf_from_config,
    program_from_config,
    require,
)
from .constants import celsius
from .geometry import DeviceGeometry, geometry_a, geometry_b
from .materials import (
    BICUVOX_INPLANE,
    BICUVOX_OUTOFPLANE,
    YSZ,
    Arrhenius,
    ElectrolyteModel,
    LsfModel,
    MaterialSet,
    MaterialRangeWarning,
    VacancyConcentration,
    VeqTable,
    charge_density_from_cv,
    default_electrolyte,
    electronic_conductivity,
    ionic_conductivity_lsf,
    nernst_potential,
    thermodynamic_factor,
    vacancy_diffusivity,
)
from .program import CURRENT, VOLTAGE, Pulse, PulseProgram, Segment, potentiation_depression

__all__ = [
    "CONFIG_ENV",
    "ConfigError",
    "config_hash",
    "electrolyte_from_config",
    "geometry_from_config",
    "load_config",
    "lsf_from_config",
    "program_from_config",
    "require",
    "celsius",
    "DeviceGeometry",
    "geometry_a",
    "geometry_b",
    "Arrhenius",
    "ElectrolyteModel",
    "LsfModel",
    "MaterialSet",
    "MaterialRangeWarning",
    "VacancyConcentration",
    "VeqTable",
    "BICUVOX_INPLANE",
    "BICUVOX_OUTOFPLANE",
    "YSZ",
    "charge_density_from_cv",
    "default_electrolyte",
    "electronic_conductivity",
    "ionic_conductivity_lsf",
    "nernst_potential",
    "thermodynamic_factor",
    "vacancy_diffusivity",
    "Pulse",
    "PulseProgram",
    "Segment",
    "VOLTAGE",
    "CURRENT",
    "potentiation_depression",
]
