import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecram_twin.core import (
    Arrhenius,
    ConfigError,
    DeviceGeometry,
    LsfModel,
    MaterialRangeWarning,
    MaterialSet,
    Pulse,
    PulseProgram,
    VacancyConcentration,
    VeqTable,
    celsius,
    charge_density_from_cv,
    config_hash,
    electronic_conductivity,
    geometry_a,
    geometry_b,
    geometry_from_config,
    ionic_conductivity_lsf,
    load_config,
    lsf_from_config,
    nernst_potential,
    program_from_config,
    thermodynamic_factor,
    vacancy_diffusivity,
)
from ecram_twin.core.materials import BICUVOX_INPLANE, BICUVOX_OUTOFPLANE, YSZ, nernst_slope

T150 = 423.15


# -- electronic conductivity -------------------------------------------------------


def test_sigma_eon_reference_point():
    # exp of the fitted polynomial at c=0.1, 150 C, evaluated by hand
    assert electronic_conductivity(0.1, T150) == pytest.approx(24.587197547975265, rel=1e-12)


def test_sigma_eon_zero_vacancies_reduces_to_temperature_terms():
    lsf = LsfModel(fit_valid_cv_range=(0.0, 0.24))
    assert lsf.electronic_conductivity(0.0, T150) == pytest.approx(
        math.exp(4.44 + 1190 / T150 - 370000 / T150**2), rel=1e-12
    )
    assert lsf.electronic_conductivity(0.0, T150) == pytest.approx(178.72494261817553, rel=1e-12)


def test_sigma_eon_is_deterministic():
    assert electronic_conductivity(0.137, 450.0) == electronic_conductivity(0.137, 450.0)


@given(st.floats(0.01, 0.24), st.floats(323.15, 623.15))
def test_sigma_eon_log_polynomial_exact(c, T):
    a = (4.44, 23.08, 1190.0, -89.33, -370000.0, -14380.0)
    poly = a[0] + a[1] * c + a[2] / T + a[3] * c * c + a[4] / T**2 + a[5] * c / T
    got = math.log(electronic_conductivity(c, T))
    assert got == pytest.approx(poly, rel=1e-12, abs=1e-12)
    assert electronic_conductivity(c, T) > 0


def test_sigma_eon_decreases_with_vacancies_at_150C():
    # the printed fit falls with c_v here (see decisions ledger)
    assert electronic_conductivity(0.12, T150) < electronic_conductivity(0.1, T150)


def test_out_of_range_clamps_with_warning_or_raises_in_strict_mode():
    with pytest.warns(MaterialRangeWarning):
        v = electronic_conductivity(0.3, T150)
    assert v == electronic_conductivity(0.24, T150)
    with pytest.raises(ValueError):
        LsfModel(range_policy="strict").electronic_conductivity(0.3, T150)
    with pytest.raises(ValueError):
        LsfModel(range_policy="strict").electronic_conductivity(0.1, 800.0)


# -- diffusivity and ionic conductivity ---------------------------------------------


def test_vacancy_diffusivity_reference_7500():
    assert vacancy_diffusivity(T150, 0.02, 7500.0) == pytest.approx(0.002372631418745697, rel=1e-9)


def test_vacancy_diffusivity_default_activation():
    assert vacancy_diffusivity(T150) == pytest.approx(1.1041620337772832e-11, rel=1e-9)
    assert LsfModel().vacancy_diffusivity(T150) == pytest.approx(1.1041620337772832e-11, rel=1e-9)


def test_vacancy_diffusivity_high_temperature_limit():
    assert vacancy_diffusivity(1e12, 0.02, 7500.0) == pytest.approx(0.02, rel=1e-6)


@given(st.floats(200, 2000), st.floats(1.0, 500.0))
def test_vacancy_diffusivity_monotone_in_T(T, dT):
    assert vacancy_diffusivity(T + dT) > vacancy_diffusivity(T)


def test_vacancy_diffusivity_rejects_nonpositive_T():
    with pytest.raises(ValueError):
        vacancy_diffusivity(0.0)


def test_ionic_conductivity_nernst_einstein_chain():
    assert ionic_conductivity_lsf(0.0, T150) == 0.0
    assert ionic_conductivity_lsf(0.1, T150) == pytest.approx(3.2728840461120626e-07, rel=1e-9)


@given(st.floats(0.0, 0.25), st.floats(0.0, 0.25))
def test_ionic_conductivity_linear_superposition(c1, c2):
    s = ionic_conductivity_lsf(c1 + c2, T150)
    assert s == pytest.approx(ionic_conductivity_lsf(c1, T150) + ionic_conductivity_lsf(c2, T150), rel=1e-12, abs=1e-30)


def test_ionic_conductivity_doubles_with_cv():
    assert ionic_conductivity_lsf(0.2, T150) == pytest.approx(2 * ionic_conductivity_lsf(0.1, T150), rel=1e-14)


def test_sigma_ion_much_smaller_than_sigma_eon():
    assert ionic_conductivity_lsf(0.1, T150) / electronic_conductivity(0.1, T150) < 0.1


# -- electrolyte --------------------------------------------------------------------


@pytest.mark.parametrize("law", [BICUVOX_INPLANE, BICUVOX_OUTOFPLANE, YSZ])
def test_arrhenius_monotone_and_positive(law):
    T = np.linspace(300, 1200, 50)
    s = law(T)
    assert np.all(s > 0)
    assert np.all(np.diff(s) > 0)


def test_arrhenius_from_reference_round_trip():
    law = Arrhenius.from_reference(1e-3, 600.0, 0.8)
    assert law(600.0) == pytest.approx(1e-3, rel=1e-13)


def test_arrhenius_rejects_bad_parameters():
    with pytest.raises(ValueError):
        Arrhenius(-1.0, 0.5)


def test_bicuvox_anisotropy_default():
    from ecram_twin.core import default_electrolyte

    assert default_electrolyte().anisotropy(T150) == pytest.approx(100.0)


# -- thermodynamic factor -----------------------------------------------------------


def test_ideal_dilute_log_table_gives_unity():
    c = np.linspace(0.01, 0.24, 400)
    v = -8.314462618 * T150 / (2 * 96485.33212) * np.log(c)
    lsf = LsfModel(veq_table=VeqTable(c, v))
    gam = lsf.thermodynamic_factor(np.array([0.05, 0.1, 0.2]), T150)
    assert np.allclose(gam, 1.0, rtol=1e-5)


def test_default_lattice_gas_factor_closed_form():
    c = np.array([0.05, 0.1, 0.2])
    assert np.allclose(thermodynamic_factor(c, T150), 0.25 / (0.25 - c), rtol=1e-12)
    assert np.all(thermodynamic_factor(c, T150) >= 1)


def test_table_slope_matches_analytic_derivative():
    table = VeqTable.nernst(0.25, [T150], n_points=4000)
    c = np.linspace(0.03, 0.22, 37)
    num = table.slope(c, T150)
    ana = nernst_slope(c, T150, 0.25)
    assert np.allclose(num, ana, rtol=1e-6)


def test_table_factor_continuous():
    lsf = LsfModel(veq_table=VeqTable.nernst(0.25, [T150]))
    g0 = lsf.thermodynamic_factor(0.1, T150)
    for h in (1e-3, 1e-5, 1e-7):
        assert abs(lsf.thermodynamic_factor(0.1 + h, T150) - g0) < 50 * h


def test_table_edge_warns():
    table = VeqTable.nernst(0.25, [T150], n_points=50)
    with pytest.warns(MaterialRangeWarning):
        table.slope(table.c_v[0], T150)


def test_table_rejects_non_monotone():
    with pytest.raises(ValueError):
        VeqTable([0.1, 0.2, 0.3], [0.0, 0.1, 0.05])
    with pytest.raises(ValueError):
        VeqTable([0.1, 0.3, 0.2], [0.0, 0.1, 0.2])


def test_table_temperature_interpolation():
    table = VeqTable.nernst(0.25, [400.0, 450.0], n_points=1000)
    v = table.potential(0.1, 425.0)
    assert v == pytest.approx(nernst_potential(0.1, 425.0, 0.25), rel=1e-6)


def test_table_from_csv(tmp_path):
    p = tmp_path / "veq.csv"
    c = np.linspace(0.02, 0.22, 11)
    p.write_text("c_v,V_eq\n" + "".join(f"{a},{b}\n" for a, b in zip(c.tolist(), (-0.1 * c).tolist())))
    table = VeqTable.from_csv(p)
    assert table.potential(0.1, T150) == pytest.approx(-0.01)
    p3 = tmp_path / "veq3.csv"
    rows = [f"{a},{t},{-0.1 * a - 1e-4 * t}\n" for t in (400.0, 450.0) for a in c.tolist()]
    p3.write_text("c_v,T_K,V_eq\n" + "".join(rows))
    table3 = VeqTable.from_csv(p3)
    assert table3.potential(0.1, 425.0) == pytest.approx(-0.01 - 0.0425)


# -- charge density and concentrations ----------------------------------------------


def test_charge_density_reference():
    assert charge_density_from_cv(0.1, 6000.0, 0.2197) == pytest.approx(527.0022692034593, rel=1e-9)
    assert charge_density_from_cv(0.0, 6000.0, 0.2197) == 0.0


@given(st.floats(0.0, 0.25), st.floats(1000.0, 10000.0))
def test_charge_density_linear(c, rho):
    q = charge_density_from_cv(c, rho, 0.2171)
    assert charge_density_from_cv(c, 2 * rho, 0.2171) == pytest.approx(2 * q, rel=1e-14, abs=1e-300)
    assert charge_density_from_cv(2 * c, rho, 0.2171) == pytest.approx(2 * q, rel=1e-14, abs=1e-300)


@given(st.floats(-1.0, 1.0))
def test_vacancy_concentration_bounds(v):
    if 0 <= v <= 0.25:
        vc = VacancyConcentration(v)
        assert vc.holes >= 0
    else:
        with pytest.raises(ValueError):
            VacancyConcentration(v)


def test_lsf_validation():
    with pytest.raises(ValueError):
        LsfModel(sr_doping=0.0)
    with pytest.raises(ValueError):
        LsfModel(dv_prefactor=0.0)
    with pytest.raises(ValueError):
        LsfModel(conductivity_fit_coeffs=(1.0, 2.0))


def test_material_digest_stable():
    assert MaterialSet().digest() == MaterialSet().digest()
    assert MaterialSet().digest() != MaterialSet(LsfModel(dv_activation=7500.0)).digest()


# -- geometry, program, config ------------------------------------------------------


def test_geometry_presets():
    a = geometry_a()
    assert a.channel_width == pytest.approx(6e-6)
    assert a.electrolyte_etch_gap < a.electrolyte_thickness
    geometry_b()


def test_geometry_invariants():
    d = geometry_a().to_dict()
    d["gap"] = 0.0
    with pytest.raises(ValueError):
        DeviceGeometry(**d)
    d = geometry_a().to_dict()
    d["electrolyte_etch_gap"] = d["electrolyte_thickness"]
    with pytest.raises(ValueError):
        DeviceGeometry(**d)


def test_celsius():
    assert celsius(150.0) == pytest.approx(423.15)


def test_program_segments_and_round_trip():
    prog = PulseProgram.trains([(3, -0.5, 0.02, 0.02), (2, 0.5, 0.02, 0.0)])
    segs = list(prog.segments())
    assert len(segs) == 3 * 2 + 2
    assert prog.duration == pytest.approx(3 * 0.04 + 2 * 0.02)
    assert PulseProgram.from_dict(prog.to_dict()) == prog


def test_program_invariants():
    with pytest.raises(ValueError):
        Pulse(0.5, 0.0)
    with pytest.raises(ValueError):
        Pulse(0.5, 0.01, -1.0)
    with pytest.raises(ValueError):
        PulseProgram(())


def test_config_missing_key_names_key(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("program: {pulses: [{amplitude: 0.5, on_time: 0.01}]}\n")
    cfg = load_config(p)
    with pytest.raises(ConfigError) as exc:
        from ecram_twin.core import require

        require(cfg, "geometry")
    assert exc.value.key == "geometry"
    assert "geometry" in str(exc.value)


def test_config_env_fallback(tmp_path, monkeypatch):
    p = tmp_path / "c.yaml"
    p.write_text("geometry: {preset: B}\n")
    monkeypatch.setenv("ECRAM_TWIN_CONFIG", str(p))
    cfg = load_config()
    assert geometry_from_config(cfg["geometry"]) == geometry_b()
    monkeypatch.delenv("ECRAM_TWIN_CONFIG")
    with pytest.raises(ConfigError):
        load_config()


def test_config_sections():
    assert geometry_from_config({"preset": "A", "gap": 4e-6}).gap == 4e-6
    with pytest.raises(ConfigError):
        geometry_from_config({"preset": "Z"})
    with pytest.raises(ConfigError):
        lsf_from_config({"bogus": 1})
    assert lsf_from_config({"dv_activation": 7500.0}).dv_activation == 7500.0
    with pytest.raises(ConfigError):
        program_from_config({})
    assert config_hash({"a": 1, "_base_dir": "x"}) == config_hash({"a": 1})
