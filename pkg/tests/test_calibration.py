import json

import jsonschema
import pytest

from chiplet_gym.calibration import Calibration, calibration_schema, load_calibration


def test_packaged_default_matches_code(cal):
    assert load_calibration() == cal


def test_roundtrip_through_json(tmp_path, cal):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cal.to_dict()))
    assert load_calibration(p) == cal
    jsonschema.validate(cal.to_dict(), calibration_schema())


def test_partial_file_keeps_defaults(cal):
    c = Calibration.from_dict({"tech": {"pe_area": 0.01}})
    assert c.tech.pe_area == 0.01
    assert c.tech.defect_density == cal.tech.defect_density
    assert c.interconnects == cal.interconnects


def test_schema_rejects_unknown_field():
    with pytest.raises(jsonschema.ValidationError):
        Calibration.from_dict({"tech": {"pe_aera": 0.01}})


def test_replace_dotted(cal):
    c = cal.replace(**{"tech.pe_area": 0.002, "weights.alpha": 2.0})
    assert c.tech.pe_area == 0.002 and c.weights.alpha == 2.0
    assert cal.tech.pe_area != 0.002
    assert c.with_case(64).package.n_chiplets_max == 64


@pytest.mark.parametrize("bad", [{"tech.pe_area": 0}, {"weights.gamma": -1}, {"packaging.assembly_bond_yield": 0},
                                 {"timing.t_r": -1}, {"package.area_sram": 0.5}])
def test_invalid_values(cal, bad):
    with pytest.raises(ValueError):
        cal.replace(**bad)


def test_interconnect_table(cal):
    ics = cal.interconnects
    assert ics["CoWoS"].t_w == ics["EMIB"].t_w == 17.2
    assert ics["SoIC"].t_w == ics["FOVEROS"].t_w == 1.6
    assert (ics["EMIB"].e_bit_min, ics["EMIB"].e_bit_max) == (0.17, 0.7)
    assert all(ic.e_bit_min <= ic.e_bit_max for ic in ics.values())
