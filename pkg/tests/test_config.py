import json

import pytest

from whiskersim import config as cfgmod
from whiskersim.config import ConfigError


def test_defaults_validate():
    cfg = cfgmod.load(None)
    assert set(cfg) == {"whisker", "calibration", "control", "scenario", "output"}
    assert cfgmod.build_scenario(cfg).name == "cylinder"


def test_defaults_are_json():
    assert json.loads(json.dumps(cfgmod.defaults())) == cfgmod.defaults()


@pytest.mark.parametrize("bad", [
    {"extra": {}},
    {"whisker": {"shaft_lenght": 75}},
    {"calibration": {"trace": {"alpha": 0.5}}},
    {"whisker": {"noise_std": "3"}},
    {"whisker": {"arc_samples": 200.5}},
    {"control": {"pivot_on_tip": 1}},
    {"calibration": {"region": [10, 76, 3]}},
    {"scenario": {"object": "teapot"}},
    {"scenario": {"start_pose": [0, 0]}},
    {"scenario": {"contour": {"variant": "circle", "radius": -1}}},
    {"whisker": {"noise_std": -1.0}},
    {"control": {"keypoint_count": 2}},
    {"scenario": {"sweep": {"distances": []}}},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        cfgmod.validate(bad)


def test_custom_contour_and_overrides(tmp_path):
    doc = {"scenario": {"contour": {"variant": "circle", "radius": 50.0,
                                    "center": [10.0, 0.0], "rotation": 0.0},
                        "seed": 4},
           "control": {"integral_clamp": 100}}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    cfg = cfgmod.load(str(path))
    sc = cfgmod.build_scenario(cfg)
    assert sc.name == "custom" and sc.seed == 4 and sc.contour.radius == 50.0
    assert sc.control.clamp == 100


def test_malformed_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        cfgmod.load(str(path))
