import numpy as np
import pytest

from patchsim.scenario import (ParseError, ValidationError, bundled, dump_scenario,
                               load_scenario, parse_scenario, save_scenario)


def test_bundled_table_values():
    sc = load_scenario(bundled("example1"))
    assert sc.mass == 5.0 and sc.mu == 0.12 and sc.h == 0.01 and sc.steps == 100
    assert sc.velocity == [4.0, 3.0, 0.0] and sc.angular_velocity == [0.0, 0.0, 0.0]
    assert sc.orientation == [1.0, 0.0, 0.0, 0.0]
    assert [p.name for p in sc.parts] == ["A1", "A2", "A3"]
    assert sc.mode == "analytic-compare"


def test_bundled_spinning_table_has_a_push():
    sc = load_scenario(bundled("example2"))
    assert sc.mode == "uniqueness"
    assert any(np.linalg.norm(w.force) > 0 or np.linalg.norm(w.moment) > 0 for w in sc.wrenches)


def test_empty_file_is_a_parse_error():
    with pytest.raises(ParseError):
        parse_scenario("")


def test_bad_yaml_reports_position():
    with pytest.raises(ParseError) as info:
        parse_scenario("object: [1, 2\nstep: 0.1\n")
    assert info.value.line is not None


def test_negative_step_is_rejected():
    text = open(bundled("example1")).read().replace("step: 0.01", "step: -0.01")
    with pytest.raises(ValidationError):
        parse_scenario(text)


def test_unknown_key_is_rejected():
    text = open(bundled("example1")).read() + "colour: red\n"
    with pytest.raises(ValidationError):
        parse_scenario(text)


def test_non_unit_quaternion_is_rejected():
    text = open(bundled("example1")).read().replace(
        "orientation: [1.0, 0.0, 0.0, 0.0]", "orientation: [0.0, 0.0, 0.0, 0.0]")
    with pytest.raises(ValidationError):
        parse_scenario(text)


@pytest.mark.parametrize("name", ["example1", "example2"])
def test_round_trip(tmp_path, name):
    sc = load_scenario(bundled(name))
    path = tmp_path / "copy.yaml"
    save_scenario(sc, path)
    again = load_scenario(path)
    assert again == sc
    assert dump_scenario(again) == dump_scenario(sc)


def test_wrench_interval_is_half_open():
    sc = load_scenario(bundled("example1"))
    sc.wrenches = []
    text = dump_scenario(sc).replace("wrenches: []", "")
    text += "wrenches:\n  - {start: 0.02, end: 0.04, force: [1.0, 0.0, 0.0]}\n"
    sc = parse_scenario(text)
    active = [np.linalg.norm(sc.wrench_at(k).force) > 0 for k in range(6)]
    assert active == [False, False, True, True, False, False]
