"""Abstraction of concrete sensor values into small enumerated types."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .geometry import GeometryConfig

PRECISION = 1e-2


class AbstractionError(ValueError):
    """Sensor values that violate a physical exclusion (e.g. two press switches)."""

    def __init__(self, what: str, values: tuple):
        super().__init__(f"{what}: incompatible sensor values {values}")
        self.what = what
        self.values = values


def approx_eq(a: float, b: float) -> bool:
    return abs(a - b) < PRECISION


class PressPosition(enum.Enum):
    BOTTOM = "bottom"
    MIDDLE = "middle"
    TOP = "top"
    ELSEWHERE = "elsewhere"


class TableElevation(enum.Enum):
    BOTTOM = "bottom"
    BETWEEN = "between"
    TOP = "top"


class TableRotation(enum.Enum):
    LOAD = "load"
    TRANSFER = "transfer"
    BETWEEN = "between"


class ArmExtension(enum.Enum):
    RETRACTED = "retracted"
    AT_TABLE_OR_DEPOSIT = "at_table_or_deposit"
    AT_PRESS = "at_press"
    ELSEWHERE = "elsewhere"


class RobotAngle(enum.Enum):
    TABLE = "table"
    PRESS = "press"
    DEPOSIT = "deposit"
    ELSEWHERE = "elsewhere"


class CranePosition(enum.Enum):
    OVER_DEPOSIT = "over_deposit"
    OVER_FEED = "over_feed"
    BETWEEN = "between"


class CraneHeight(enum.Enum):
    PICK = "pick"
    TRAVEL = "travel"
    ELSEWHERE = "elsewhere"


def to_press_position(s1: bool, s2: bool, s3: bool) -> PressPosition:
    if s1 + s2 + s3 > 1:
        raise AbstractionError("press", (s1, s2, s3))
    if s1:
        return PressPosition.BOTTOM
    if s2:
        return PressPosition.MIDDLE
    if s3:
        return PressPosition.TOP
    return PressPosition.ELSEWHERE


def _nearest(value: float, table: dict, default):
    # Stops are > 2 * PRECISION apart, so at most one matches.
    for stop, result in table.items():
        if approx_eq(value, stop):
            return result
    return default


def to_table_elevation(s12: float, geo: GeometryConfig) -> TableElevation:
    a = geo.table_elev
    return _nearest(s12, {a["bottom"]: TableElevation.BOTTOM, a["top"]: TableElevation.TOP},
                    TableElevation.BETWEEN)


def to_arm_extension(value: float, geo: GeometryConfig, arm: int) -> ArmExtension:
    if arm == 1:
        a = geo.arm1
        table = {a["retracted"]: ArmExtension.RETRACTED,
                 a["table"]: ArmExtension.AT_TABLE_OR_DEPOSIT,
                 a["press"]: ArmExtension.AT_PRESS}
    elif arm == 2:
        a = geo.arm2
        table = {a["retracted"]: ArmExtension.RETRACTED,
                 a["deposit"]: ArmExtension.AT_TABLE_OR_DEPOSIT,
                 a["press"]: ArmExtension.AT_PRESS}
    else:
        raise ValueError(f"no robot arm {arm}")
    return _nearest(value, table, ArmExtension.ELSEWHERE)


def to_robot_angle(s6: float, geo: GeometryConfig) -> RobotAngle:
    a = geo.robot
    return _nearest(s6, {a["table"]: RobotAngle.TABLE, a["press"]: RobotAngle.PRESS,
                         a["deposit"]: RobotAngle.DEPOSIT}, RobotAngle.ELSEWHERE)


def to_crane_height(s11: float, geo: GeometryConfig) -> CraneHeight:
    a = geo.crane_y
    return _nearest(s11, {a["pick"]: CraneHeight.PICK, a["travel"]: CraneHeight.TRAVEL},
                    CraneHeight.ELSEWHERE)


def to_table_rotation(s7: bool, s8: bool) -> TableRotation:
    if s7 and s8:
        raise AbstractionError("table rotation", (s7, s8))
    if s7:
        return TableRotation.LOAD
    if s8:
        return TableRotation.TRANSFER
    return TableRotation.BETWEEN


def to_crane_position(s9: bool, s10: bool) -> CranePosition:
    if s9 and s10:
        raise AbstractionError("crane position", (s9, s10))
    if s9:
        return CranePosition.OVER_DEPOSIT
    if s10:
        return CranePosition.OVER_FEED
    return CranePosition.BETWEEN


@dataclass(frozen=True)
class AbstractStatus:
    press: PressPosition
    arm1: ArmExtension
    arm2: ArmExtension
    robot: RobotAngle
    table_rot: TableRotation
    table_elev: TableElevation
    crane_pos: CranePosition
    crane_height: CraneHeight
    feed_cell: bool
    deposit_cell: bool


def abstract_values(values, geo: GeometryConfig) -> AbstractStatus:
    """Abstract the 14 sensor values ``(s1, ..., s14)``."""
    s1, s2, s3, s4, s5, s6, s7, s8, s9, s10, s11, s12, s13, s14 = values
    return AbstractStatus(
        press=to_press_position(s1, s2, s3),
        arm1=to_arm_extension(s4, geo, 1),
        arm2=to_arm_extension(s5, geo, 2),
        robot=to_robot_angle(s6, geo),
        table_rot=to_table_rotation(s7, s8),
        table_elev=to_table_elevation(s12, geo),
        crane_pos=to_crane_position(s9, s10),
        crane_height=to_crane_height(s11, geo),
        feed_cell=bool(s13),
        deposit_cell=bool(s14),
    )


def abstract_status(status, geo: GeometryConfig) -> AbstractStatus:
    return abstract_values(status.sensors(), geo)
