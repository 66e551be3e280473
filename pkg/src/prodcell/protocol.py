"""Line codec for the cycle-driven controller/simulator protocol.

Commands travel as one lowercase token per line.  The simulator answers
``get_status`` with::

    status b b b r r r b b b b r r b b "err1;err2"

(booleans ``true``/``false``, reals with exactly three fraction digits).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

GROUPS: tuple[tuple[str, ...], ...] = (
    ("press_upward", "press_stop", "press_downward"),
    ("arm1_forward", "arm1_stop", "arm1_backward"),
    ("arm2_forward", "arm2_stop", "arm2_backward"),
    ("arm1_mag_on", "arm1_mag_off"),
    ("arm2_mag_on", "arm2_mag_off"),
    ("robot_left", "robot_stop", "robot_right"),
    ("table_left", "table_stop_h", "table_right"),
    ("table_upward", "table_stop_v", "table_downward"),
    ("crane_to_belt2", "crane_stop_h", "crane_to_belt1"),
    ("crane_lift", "crane_stop_v", "crane_lower"),
    ("crane_mag_on", "crane_mag_off"),
    ("belt1_start", "belt1_stop", "blank_add"),
    ("belt2_start", "belt2_stop"),
)

ACTUATOR_COMMANDS: tuple[str, ...] = tuple(c for g in GROUPS for c in g)
REACT = "react"
GET_STATUS = "get_status"
META_COMMANDS = (REACT, GET_STATUS)
ALL_COMMANDS = ACTUATOR_COMMANDS + META_COMMANDS

# command -> group number (1-based)
GROUP_OF: dict[str, int] = {c: i for i, g in enumerate(GROUPS, 1) for c in g}

BOOL_FIELDS = (0, 1, 2, 6, 7, 8, 9, 12, 13)  # s1-s3, s7-s10, s13, s14
REAL_FIELDS = (3, 4, 5, 10, 11)              # s4-s6, s11, s12
SENSOR_COUNT = 14

_REAL = re.compile(r"-?\d+\.\d{3}")


class ProtocolError(ValueError):
    pass


class UnknownCommand(ProtocolError):
    def __init__(self, token: str):
        super().__init__(f"unknown command {token!r}")
        self.token = token


class FieldCountError(ProtocolError):
    pass


class RealFormatError(ProtocolError):
    pass


class BoolFormatError(ProtocolError):
    pass


class QuoteError(ProtocolError):
    pass


def encode_command(command: str) -> str:
    if command not in ALL_COMMANDS:
        raise UnknownCommand(command)
    return command + "\n"


def decode_command(line: str) -> str:
    token = line[:-1] if line.endswith("\n") else line
    if token not in ALL_COMMANDS:
        raise UnknownCommand(token)
    return token


@dataclass(frozen=True)
class SensorStatus:
    s1: bool = False
    s2: bool = False
    s3: bool = False
    s4: float = 0.0
    s5: float = 0.0
    s6: float = 0.0
    s7: bool = False
    s8: bool = False
    s9: bool = False
    s10: bool = False
    s11: float = 0.0
    s12: float = 0.0
    s13: bool = False
    s14: bool = False
    errors: tuple[str, ...] = field(default=())

    def sensors(self) -> tuple:
        return (self.s1, self.s2, self.s3, self.s4, self.s5, self.s6, self.s7, self.s8,
                self.s9, self.s10, self.s11, self.s12, self.s13, self.s14)

    @classmethod
    def from_values(cls, values, errors=()) -> "SensorStatus":
        return cls(*values, errors=tuple(errors))


def _fmt_real(x: float) -> str:
    text = f"{x:.3f}"
    return "0.000" if text == "-0.000" else text


def encode_status(status: SensorStatus) -> str:
    parts = ["status"]
    for i, v in enumerate(status.sensors()):
        if i in BOOL_FIELDS:
            parts.append("true" if v else "false")
        else:
            parts.append(_fmt_real(v))
    for e in status.errors:
        if not e or '"' in e or ";" in e or "\n" in e:
            raise ProtocolError(f"error message cannot be encoded: {e!r}")
    parts.append('"' + ";".join(status.errors) + '"')
    return " ".join(parts) + "\n"


def decode_status(line: str) -> SensorStatus:
    text = line[:-1] if line.endswith("\n") else line
    quote = text.find('"')
    if quote < 0:
        fields = text.split(" ")
        raise FieldCountError(f"status line has no error field ({len(fields)} fields)")
    head, tail = text[:quote], text[quote + 1:]
    if not tail.endswith('"') or '"' in tail[:-1]:
        raise QuoteError("unterminated or embedded quote in error field")
    if not head.endswith(" "):
        raise FieldCountError("error field not separated by a space")
    fields = head[:-1].split(" ")
    if fields[0] != "status":
        raise ProtocolError(f"not a status line: {fields[0]!r}")
    fields = fields[1:]
    if len(fields) != SENSOR_COUNT:
        raise FieldCountError(f"expected {SENSOR_COUNT} sensor fields, got {len(fields)}")
    values: list = []
    for i, tok in enumerate(fields):
        if i in BOOL_FIELDS:
            if tok == "true":
                values.append(True)
            elif tok == "false":
                values.append(False)
            else:
                raise BoolFormatError(f"s{i + 1}: {tok!r} is not true/false")
        else:
            if not _REAL.fullmatch(tok):
                raise RealFormatError(f"s{i + 1}: {tok!r} is not a 3-digit decimal")
            values.append(float(tok))
    body = tail[:-1]
    errors = tuple(body.split(";")) if body else ()
    return SensorStatus.from_values(values, errors)
