import random

import pytest

from prodcell.cell_types import (AbstractionError, ArmExtension, CraneHeight, CranePosition,
                                 PressPosition, RobotAngle, TableElevation, TableRotation,
                                 abstract_values, approx_eq, to_arm_extension,
                                 to_crane_height, to_crane_position, to_press_position,
                                 to_robot_angle, to_table_elevation, to_table_rotation)
from prodcell.geometry import ConfigError, build_geometry, load_geometry, parse_config, default_text

GEO = load_geometry()


def test_approx_eq_examples():
    assert approx_eq(1.000, 1.005)
    assert approx_eq(0.37, 0.37)
    assert not approx_eq(0.00, 0.02)
    assert not approx_eq(0.5, 0.51)


def test_approx_eq_symmetric_not_transitive():
    a = 0.3
    assert approx_eq(a, a + 0.009) and approx_eq(a + 0.009, a)
    assert approx_eq(a + 0.009, a + 0.018)
    assert not approx_eq(a, a + 0.018)


def test_press_position_mapping():
    assert to_press_position(True, False, False) is PressPosition.BOTTOM
    assert to_press_position(False, True, False) is PressPosition.MIDDLE
    assert to_press_position(False, False, True) is PressPosition.TOP
    assert to_press_position(False, False, False) is PressPosition.ELSEWHERE


@pytest.mark.parametrize("triple", [(True, True, False), (True, False, True),
                                    (False, True, True), (True, True, True)])
def test_press_mutual_exclusion(triple):
    with pytest.raises(AbstractionError) as info:
        to_press_position(*triple)
    assert info.value.values == triple


def test_table_elevation():
    bottom, top = GEO.table_elev["bottom"], GEO.table_elev["top"]
    assert to_table_elevation(bottom, GEO) is TableElevation.BOTTOM
    assert to_table_elevation((bottom + top) / 2, GEO) is TableElevation.BETWEEN
    assert to_table_elevation(top - 0.005, GEO) is TableElevation.TOP


def test_arm_robot_crane():
    assert to_arm_extension(GEO.arm1["press"], GEO, 1) is ArmExtension.AT_PRESS
    assert to_arm_extension(GEO.arm2["deposit"], GEO, 2) is ArmExtension.AT_TABLE_OR_DEPOSIT
    assert to_arm_extension(GEO.arm1["retracted"], GEO, 1) is ArmExtension.RETRACTED
    assert to_arm_extension(0.0, GEO, 1) is ArmExtension.ELSEWHERE
    with pytest.raises(ValueError):
        to_arm_extension(0.0, GEO, 3)
    assert to_robot_angle(GEO.robot["deposit"], GEO) is RobotAngle.DEPOSIT
    assert to_crane_height(GEO.crane_y["pick"], GEO) is CraneHeight.PICK
    assert to_crane_height(0.5, GEO) is CraneHeight.ELSEWHERE


def test_boolean_pairs():
    assert to_crane_position(False, False) is CranePosition.BETWEEN
    assert to_crane_position(True, False) is CranePosition.OVER_DEPOSIT
    assert to_crane_position(False, True) is CranePosition.OVER_FEED
    assert to_table_rotation(True, False) is TableRotation.LOAD
    assert to_table_rotation(False, True) is TableRotation.TRANSFER
    assert to_table_rotation(False, False) is TableRotation.BETWEEN
    with pytest.raises(AbstractionError):
        to_crane_position(True, True)
    with pytest.raises(AbstractionError):
        to_table_rotation(True, True)


def test_twelve_significant_values():
    assert len(GEO.significant_values()) == 12


# -- independent oracle: nearest-stop lookup by distance table ---------------

def _lookup(value, stops, default):
    hits = [name for stop, name in stops if abs(value - stop) < 0.01]
    assert len(hits) <= 1
    return hits[0] if hits else default


def oracle_abstract(v):
    g = GEO
    press = {(True, False, False): "BOTTOM", (False, True, False): "MIDDLE",
             (False, False, True): "TOP", (False, False, False): "ELSEWHERE"}[v[0:3]]
    return dict(
        press=press,
        arm1=_lookup(v[3], [(g.arm1["retracted"], "RETRACTED"),
                            (g.arm1["table"], "AT_TABLE_OR_DEPOSIT"),
                            (g.arm1["press"], "AT_PRESS")], "ELSEWHERE"),
        arm2=_lookup(v[4], [(g.arm2["retracted"], "RETRACTED"),
                            (g.arm2["deposit"], "AT_TABLE_OR_DEPOSIT"),
                            (g.arm2["press"], "AT_PRESS")], "ELSEWHERE"),
        robot=_lookup(v[5], [(g.robot["table"], "TABLE"), (g.robot["press"], "PRESS"),
                             (g.robot["deposit"], "DEPOSIT")], "ELSEWHERE"),
        table_rot="LOAD" if v[6] else "TRANSFER" if v[7] else "BETWEEN",
        crane_pos="OVER_DEPOSIT" if v[8] else "OVER_FEED" if v[9] else "BETWEEN",
        crane_height=_lookup(v[10], [(g.crane_y["pick"], "PICK"),
                                     (g.crane_y["travel"], "TRAVEL")], "ELSEWHERE"),
        table_elev=_lookup(v[11], [(g.table_elev["bottom"], "BOTTOM"),
                                   (g.table_elev["top"], "TOP")], "BETWEEN"),
        feed_cell=v[12], deposit_cell=v[13])


def _random_values(rng):
    sig = sorted(GEO.significant_values())

    def real():
        if rng.random() < 0.6:
            return round(rng.choice(sig) + rng.uniform(-0.009, 0.009), 3)
        return round(rng.uniform(0, 1), 3)

    press = rng.choice([(True, False, False), (False, True, False), (False, False, True),
                        (False, False, False)])
    rot = rng.choice([(True, False), (False, True), (False, False)])
    crane = rng.choice([(True, False), (False, True), (False, False)])
    return (*press, real(), real(), real(), *rot, *crane, real(), real(),
            rng.random() < 0.5, rng.random() < 0.5)


def test_abstract_status_matches_oracle():
    rng = random.Random(8)
    for _ in range(2000):
        v = _random_values(rng)
        got = abstract_values(v, GEO)
        want = oracle_abstract(v)
        for k, value in want.items():
            actual = getattr(got, k)
            assert (actual if isinstance(actual, bool) else actual.name) == value, (k, v)


def test_perturbation_invariance_away_from_boundaries():
    rng = random.Random(3)
    checks = [(lambda x: to_arm_extension(x, GEO, 1), GEO.arm1.stops.values()),
              (lambda x: to_arm_extension(x, GEO, 2), GEO.arm2.stops.values()),
              (lambda x: to_robot_angle(x, GEO), GEO.robot.stops.values()),
              (lambda x: to_crane_height(x, GEO), GEO.crane_y.stops.values()),
              (lambda x: to_table_elevation(x, GEO), GEO.table_elev.stops.values())]
    tested = 0
    for f, stops in checks:
        boundaries = [s + d for s in stops for d in (-0.01, 0.01)]
        for _ in range(2000):
            x = rng.uniform(0, 1)
            if min(abs(x - b) for b in boundaries) <= 0.009:
                continue
            for d in (-0.009, -0.004, 0.004, 0.009):
                assert f(x + d) == f(x)
            tested += 1
    assert tested > 5000


def test_geometry_rejects_bad_config():
    values = parse_config(default_text())
    with pytest.raises(ConfigError):
        build_geometry({**values, "arm1.table": 0.21})
    with pytest.raises(ConfigError):
        build_geometry({**values, "bogus.key": 1})
    with pytest.raises(ConfigError):
        build_geometry({k: v for k, v in values.items() if k != "robot.press"})
    with pytest.raises(ConfigError):
        parse_config("press.top = high")


def test_geometry_file_override(tmp_path):
    path = tmp_path / "cell.cfg"
    path.write_text("# slower robot\nrobot.speed = 0.01\n")
    assert load_geometry(path).robot.speed == 0.01
