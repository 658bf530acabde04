import json
import math

import numpy as np
import pytest

from oirssim.errors import ConfigError
from oirssim.scenario import SCHEMA_VERSION, Scenario, load_scenario


def _write(tmp_path, doc, name="sc.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_preset_file_gives_reference_siso(tmp_path):
    sc = load_scenario(_write(tmp_path, {"preset": "paper-siso"}))
    led, = sc.leds
    pd, = sc.pds
    assert np.array_equal(led.center, [2.0, 2.0, 3.0])
    assert led.m == 1.0
    assert np.array_equal(sc.array.center, [2.0, 0.0, 1.5])
    assert np.array_equal(pd.center, [2.0, 2.0, 0.0])
    assert pd.fov == pytest.approx(math.radians(70.0))
    assert sc.array.reflectivity == 0.9
    assert sc.array.side == 0.05 and sc.array.spacing == 0.1
    assert (sc.array.n_v, sc.array.n_h) == (24, 24)
    assert (sc.room.width, sc.room.depth, sc.room.height) == (4.0, 4.0, 3.0)
    assert sc.xi_c == 0.04
    assert sc.doc["pd"]["spacing"] == 0.4


def test_empty_file_uses_default_preset(tmp_path):
    p = tmp_path / "empty.json"
    p.write_text("")
    assert load_scenario(p) == Scenario.preset("paper-siso")


def test_mimo_preset_layout():
    sc = Scenario.preset("paper-mimo")
    assert len(sc.leds) == 2 and len(sc.pds) == 2
    xs = sorted(pd.center[0] for pd in sc.pds)
    assert xs[1] - xs[0] == pytest.approx(0.4)
    assert np.mean([led.center for led in sc.leds], axis=0) == pytest.approx([2.0, 2.0, 3.0])


def test_mimo_variant_matches_mimo_preset_positions():
    a = Scenario.preset("paper-siso").mimo_variant()
    b = Scenario.preset("paper-mimo")
    assert np.allclose([p.center for p in a.pds], [p.center for p in b.pds])
    assert np.allclose([p.center for p in a.leds], [p.center for p in b.leds])
    assert a.siso_variant().doc["led"]["positions"] == [[2.0, 2.0, 3.0]]


def test_fov_95_rejected(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_scenario(_write(tmp_path, {"pd": {"fov_deg": 95.0}}))
    assert exc.value.path == "pd.fov_deg"


def test_round_trip_identical(tmp_path):
    sc = Scenario.preset("paper-siso").with_overrides(xi_c=0.05, radius=0.3)
    p = tmp_path / "out.json"
    sc.save(p)
    back = load_scenario(p)
    assert back == sc
    assert back.hash == sc.hash
    assert p.read_bytes() == back.to_json().encode()


def test_saved_file_is_versioned_lf(tmp_path):
    p = tmp_path / "out.json"
    Scenario.preset().save(p)
    raw = p.read_bytes()
    assert b"\r\n" not in raw
    doc = json.loads(raw)
    assert doc["schema_version"] == SCHEMA_VERSION and doc["preset"] == "paper-siso"


def test_hash_changes_with_content():
    a = Scenario.preset()
    assert a.hash == Scenario.preset().hash
    assert a.hash != a.with_overrides(xi_c=0.05).hash
    assert len(a.hash) == 16


@pytest.mark.parametrize("doc, path", [
    ({"preset": "office"}, "preset"),
    ({"schema_version": 7}, "schema_version"),
    ({"colour": "red"}, "colour"),
    ({"xi_c": 1.5}, "xi_c"),
    ({"xi_c": "small"}, "xi_c"),
    ({"radius": 0}, "radius"),
    ({"led": {"positions": [[2.0, 2.0, 3.5]]}}, "led.positions[0]"),
    ({"pd": {"positions": [[5.0, 2.0, 0.0]]}}, "pd.positions[0]"),
    ({"oirs": {"n_v": 0}}, "oirs.n_v"),
    ({"oirs": {"n_v": 2.5}}, "oirs.n_v"),
    ({"oirs": {"spacing": 0.01}}, "oirs.spacing"),
    ({"oirs": {"n_h": 80}}, "oirs"),
    ({"oirs": {"reflectivity": 1.2}}, "oirs.reflectivity"),
    ({"estimation": {"interpolation": "nearest"}}, "estimation.interpolation"),
    ({"estimation": {"spacings": [1, 0]}}, "estimation.spacings[1]"),
    ({"codebook": {"nonuniform_deg": [[1.5]]}}, "codebook.nonuniform_deg[0]"),
])
def test_schema_violations_name_the_field(doc, path):
    with pytest.raises(ConfigError) as exc:
        Scenario.from_dict(doc)
    assert exc.value.path == path


def test_invalid_json_and_missing_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_scenario(p)
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        Scenario.from_dict([1, 2])


def test_fixed_lambertian_scale_is_used():
    assert Scenario.preset().with_overrides(lambertian_scale=2.5).lambertian_scale() == 2.5


def test_auto_lambertian_scale_is_positive():
    assert Scenario.preset().lambertian_scale() > 0
