"""Structured YAML configuration shared by the simulator, analytics and CLI.

Geometry may be given as ``{preset: A}`` or as the full set of
:class:`DeviceGeometry` fields.  Electrolyte laws accept either
``{prefactor, activation}`` or ``{sigma_ref, temperature_ref, activation}``.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .geometry import PRESETS, DeviceGeometry
from .materials import Arrhenius, ElectrolyteModel, LsfModel, VeqTable, default_electrolyte
from .program import PulseProgram

CONFIG_ENV = "ECRAM_TWIN_CONFIG"


class ConfigError(Exception):
    """Invalid or incomplete configuration; ``key`` names the offending entry."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


def require(section: Mapping[str, Any], key: str, where: str = "") -> Any:
    if not isinstance(section, Mapping) or key not in section:
        path = f"{where}.{key}" if where else key
        raise ConfigError(f"missing config key '{path}'", key=path)
    return section[key]


def load_config(path=None) -> dict:
    """Read a YAML config; falls back to ``$ECRAM_TWIN_CONFIG`` when ``path`` is None."""
    if path is None:
        path = os.environ.get(CONFIG_ENV)
        if not path:
            raise ConfigError(f"no config given and ${CONFIG_ENV} is unset")
    p = Path(path)
    with open(p) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    data.setdefault("_base_dir", str(p.resolve().parent))
    return data


def config_hash(cfg: Mapping[str, Any]) -> str:
    """SHA-256 of the canonical JSON form (private ``_`` keys excluded)."""
    clean = {k: v for k, v in cfg.items() if not str(k).startswith("_")}
    blob = json.dumps(clean, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def geometry_from_config(section: Mapping[str, Any]) -> DeviceGeometry:
    if "preset" in section:
        name = str(section["preset"]).upper()
        if name not in PRESETS:
            raise ConfigError(f"unknown geometry preset '{name}'", key="geometry.preset")
        base = PRESETS[name]().to_dict()
        base.update({k: v for k, v in section.items() if k != "preset"})
        section = base
    try:
        return DeviceGeometry.from_dict(dict(section))
    except KeyError as exc:
        raise ConfigError(f"geometry: {exc.args[0]}", key="geometry") from exc
    except ValueError as exc:
        raise ConfigError(f"geometry: {exc}", key="geometry") from exc


def _arrhenius(section: Mapping[str, Any], where: str) -> Arrhenius:
    act = float(require(section, "activation", where))
    if "prefactor" in section:
        return Arrhenius(float(section["prefactor"]), act)
    return Arrhenius.from_reference(
        float(require(section, "sigma_ref", where)), float(require(section, "temperature_ref", where)), act
    )


def electrolyte_from_config(section: Optional[Mapping[str, Any]]) -> ElectrolyteModel:
    if not section:
        return default_electrolyte()
    default = default_electrolyte()
    inplane = _arrhenius(section["inplane"], "electrolyte.inplane") if "inplane" in section else default.sigma_inplane
    outplane = (
        _arrhenius(section["outofplane"], "electrolyte.outofplane")
        if "outofplane" in section
        else default.sigma_outofplane
    )
    return ElectrolyteModel(inplane, outplane)


_LSF_KEYS = {
    "conductivity_fit_coeffs",
    "fit_valid_cv_range",
    "fit_valid_T_range",
    "dv_prefactor",
    "dv_activation",
    "sr_doping",
    "density",
    "molar_mass",
    "veq_table",
    "veq_offset",
    "range_policy",
}


def lsf_from_config(section: Optional[Mapping[str, Any]], base_dir: Optional[str] = None) -> LsfModel:
    if not section:
        return LsfModel()
    unknown = sorted(set(section) - _LSF_KEYS)
    if unknown:
        raise ConfigError(f"unknown lsf key(s): {', '.join(unknown)}", key=f"lsf.{unknown[0]}")
    kwargs = dict(section)
    for k in ("conductivity_fit_coeffs", "fit_valid_cv_range", "fit_valid_T_range"):
        if k in kwargs:
            kwargs[k] = tuple(float(x) for x in kwargs[k])
    if kwargs.get("veq_table"):
        path = Path(kwargs["veq_table"])
        if not path.is_absolute() and base_dir:
            path = Path(base_dir) / path
        kwargs["veq_table"] = VeqTable.from_csv(path)
    else:
        kwargs.pop("veq_table", None)
    try:
        return LsfModel(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"lsf: {exc}", key="lsf") from exc


def program_from_config(section: Mapping[str, Any]) -> PulseProgram:
    try:
        return PulseProgram.from_dict(section)
    except KeyError as exc:
        raise ConfigError(f"program: {exc.args[0]}", key="program") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"program: {exc}", key="program") from exc
