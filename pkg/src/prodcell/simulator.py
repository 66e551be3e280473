"""Headless production cell: discrete kinematics, blanks, and a safety monitor.

Each ``react`` applies the buffered actuator commands and advances every
running motor by one step of its configured speed.  Blanks change hands
geometrically: a magnet that is switched on over a pickable blank takes it,
a magnet switched off drops its blank onto whatever lies below.  Any safety
error halts the cell; the errors are reported in the next status reply.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .cell_types import PRECISION, approx_eq
from .geometry import AXES, GeometryConfig, load_geometry
from .protocol import (ACTUATOR_COMMANDS, GET_STATUS, GROUP_OF, REACT, ProtocolError,
                       SensorStatus, UnknownCommand, decode_command, encode_status)

log = logging.getLogger(__name__)

# token -> (axis, direction)
MOTOR_COMMANDS = {
    "press_upward": ("press", 1), "press_stop": ("press", 0), "press_downward": ("press", -1),
    "arm1_forward": ("arm1", 1), "arm1_stop": ("arm1", 0), "arm1_backward": ("arm1", -1),
    "arm2_forward": ("arm2", 1), "arm2_stop": ("arm2", 0), "arm2_backward": ("arm2", -1),
    "robot_left": ("robot", 1), "robot_stop": ("robot", 0), "robot_right": ("robot", -1),
    "table_left": ("table_rot", 1), "table_stop_h": ("table_rot", 0),
    "table_right": ("table_rot", -1),
    "table_upward": ("table_elev", 1), "table_stop_v": ("table_elev", 0),
    "table_downward": ("table_elev", -1),
    "crane_to_belt1": ("crane_x", 1), "crane_stop_h": ("crane_x", 0),
    "crane_to_belt2": ("crane_x", -1),
    "crane_lift": ("crane_y", 1), "crane_stop_v": ("crane_y", 0), "crane_lower": ("crane_y", -1),
}
MAGNET_COMMANDS = {
    "arm1_mag_on": ("arm1", True), "arm1_mag_off": ("arm1", False),
    "arm2_mag_on": ("arm2", True), "arm2_mag_off": ("arm2", False),
    "crane_mag_on": ("crane", True), "crane_mag_off": ("crane", False),
}
BELT_COMMANDS = {
    "belt1_start": ("belt1", True), "belt1_stop": ("belt1", False),
    "belt2_start": ("belt2", True), "belt2_stop": ("belt2", False),
}

FEED, TABLE, ARM1, PRESS, ARM2, DEPOSIT, CRANE = (
    "feed_belt", "table", "arm1", "press", "arm2", "deposit_belt", "crane")
SINGLE_SLOTS = (TABLE, ARM1, PRESS, ARM2, CRANE)
MAGNET_HOLDS = {"arm1": ARM1, "arm2": ARM2, "crane": CRANE}


@dataclass
class Blank:
    id: int
    location: str
    pos: float = 0.0
    forged: bool = False
    # forged since it was last delivered to the deposit belt
    undelivered: bool = False


@dataclass
class CellPhysicalState:
    positions: dict[str, float]
    motors: dict[str, int]
    belts: dict[str, bool] = field(default_factory=lambda: {"belt1": False, "belt2": False})
    magnets: dict[str, bool] = field(
        default_factory=lambda: {"arm1": False, "arm2": False, "crane": False})
    blanks: list[Blank] = field(default_factory=list)
    step_count: int = 0
    forged_deliveries: int = 0
    blanks_added: int = 0

    @classmethod
    def initial(cls, geo: GeometryConfig) -> "CellPhysicalState":
        return cls(positions={a: geo.axes[a].initial for a in AXES},
                   motors={a: 0 for a in AXES})

    def blank_at(self, location: str) -> Blank | None:
        for b in self.blanks:
            if b.location == location:
                return b
        return None

    def on_belt(self, location: str) -> list[Blank]:
        return sorted((b for b in self.blanks if b.location == location), key=lambda b: b.pos)


class CellSimulator:
    """One simulation session; not shared between threads."""

    def __init__(self, geo: GeometryConfig | None = None):
        self.geo = geo or load_geometry()
        self.state = CellPhysicalState.initial(self.geo)
        self.errors: list[str] = []
        self._groups_this_step: set[int] = set()

    @property
    def halted(self) -> bool:
        return bool(self.errors)

    def _error(self, message: str) -> None:
        log.info("safety error at step %d: %s", self.state.step_count, message)
        self.errors.append(message)

    def _at(self, axis: str, stop: str) -> bool:
        return approx_eq(self.state.positions[axis], self.geo.axes[axis][stop])

    def _extended(self, arm: str) -> bool:
        return self.state.positions[arm] > self.geo.axes[arm]["retracted"] + PRECISION

    # -- commands -----------------------------------------------------------

    def apply_command(self, token: str) -> None:
        if token not in GROUP_OF:
            raise ValueError(f"not an actuator command: {token}")
        st = self.state
        group = GROUP_OF[token]
        if group in self._groups_this_step:
            self._error(f"duplicate group command: group {group} ({token})")
            return
        self._groups_this_step.add(group)
        if token in MOTOR_COMMANDS:
            axis, direction = MOTOR_COMMANDS[token]
            if direction and st.motors[axis] == -direction:
                self._error(f"reversal without stop: {axis}")
                return
            st.motors[axis] = direction
        elif token in MAGNET_COMMANDS:
            name, on = MAGNET_COMMANDS[token]
            st.magnets[name] = on
        elif token in BELT_COMMANDS:
            belt, running = BELT_COMMANDS[token]
            st.belts[belt] = running
        else:  # blank_add
            if any(b.pos < self.geo.blank_spacing for b in st.on_belt(FEED)):
                self._error("blank_add: entry area occupied")
                return
            st.blanks_added += 1
            st.blanks.append(Blank(id=st.blanks_added, location=FEED, pos=0.0))

    # -- physics ------------------------------------------------------------

    def react_step(self) -> None:
        self._groups_this_step.clear()
        if self.halted:
            return
        st = self.state
        self._magnets()
        for axis in AXES:
            m = st.motors[axis]
            if m:
                st.positions[axis] = round(st.positions[axis] + m * self.geo.axes[axis].speed, 6)
        self._belts()
        press_blank = st.blank_at(PRESS)
        if press_blank is not None and self._at("press", "top"):
            press_blank.forged = True
            press_blank.undelivered = True
        st.step_count += 1
        for e in self.check_safety():
            self._error(e)

    def _magnets(self) -> None:
        st = self.state
        for magnet, slot in MAGNET_HOLDS.items():
            held = st.blank_at(slot)
            if st.magnets[magnet] and held is None:
                source = self._pickable(magnet)
                if source is not None:
                    source.location, source.pos = slot, 0.0
            elif not st.magnets[magnet] and held is not None:
                self._drop(magnet, held)

    def _pickable(self, magnet: str) -> Blank | None:
        st = self.state
        if magnet == "arm1":
            if (self._at("robot", "table") and self._at("arm1", "table")
                    and self._at("table_rot", "transfer") and self._at("table_elev", "top")):
                return st.blank_at(TABLE)
        elif magnet == "arm2":
            if (self._at("robot", "press") and self._at("arm2", "press")
                    and self._at("press", "bottom")):
                return st.blank_at(PRESS)
        else:
            if self._at("crane_x", "deposit") and self._at("crane_y", "pick"):
                for b in st.on_belt(DEPOSIT):
                    if self._under_photocell(b, self.geo.belt2.length):
                        return b
        return None

    def _drop(self, magnet: str, blank: Blank) -> None:
        st = self.state
        if magnet == "arm1":
            if self._at("robot", "press") and self._at("arm1", "press") and self._at("press", "middle"):
                if st.blank_at(PRESS) is not None:
                    self._error("slot: press occupied")
                else:
                    blank.location = PRESS
                return
        elif magnet == "arm2":
            if self._at("robot", "deposit") and self._at("arm2", "deposit"):
                blank.location, blank.pos = DEPOSIT, 0.0
                if blank.undelivered:
                    blank.undelivered = False
                    st.forged_deliveries += 1
                return
        else:
            if self._at("crane_x", "feed"):
                blank.location, blank.pos = FEED, 0.0
                return
        self._error(f"blank dropped: {magnet}")

    def _belts(self) -> None:
        st, geo = self.state, self.geo
        if st.belts["belt1"]:
            for b in st.on_belt(FEED):
                b.pos = round(b.pos + geo.belt1.speed, 6)
                if b.pos >= geo.belt1.length:
                    if self._at("table_rot", "load") and self._at("table_elev", "bottom"):
                        if st.blank_at(TABLE) is not None:
                            self._error("slot: table occupied")
                        b.location, b.pos = TABLE, 0.0
                    else:
                        self._error("blank dropped: feed belt end")
        if st.belts["belt2"]:
            for b in st.on_belt(DEPOSIT):
                b.pos = round(b.pos + geo.belt2.speed, 6)
                if b.pos >= geo.belt2.length:
                    self._error("blank dropped: deposit belt end")

    def _under_photocell(self, blank: Blank, length: float) -> bool:
        return length - self.geo.blank_length - 1e-9 <= blank.pos < length

    # -- monitor ------------------------------------------------------------

    def check_safety(self) -> list[str]:
        st, geo = self.state, self.geo
        errors = []
        for axis in AXES:
            a = geo.axes[axis]
            if not a.min - 1e-9 <= st.positions[axis] <= a.max + 1e-9:
                errors.append(f"range: {axis}")
        arms_out = self._extended("arm1") or self._extended("arm2")
        if st.motors["press"] and arms_out and self._at("robot", "press"):
            errors.append("collision: robot/press")
        if st.motors["robot"] and arms_out:
            errors.append("collision: robot rotating with arm extended")
        for loc, name in ((FEED, "feed belt"), (DEPOSIT, "deposit belt")):
            belt = st.on_belt(loc)
            for a, b in zip(belt, belt[1:]):
                if b.pos - a.pos < geo.blank_spacing - 1e-9:
                    errors.append(f"spacing: {name}")
                    break
        for slot in SINGLE_SLOTS:
            if sum(1 for b in st.blanks if b.location == slot) > 1:
                errors.append(f"slot: {slot} holds two blanks")
        return errors

    def sample_sensors(self) -> SensorStatus:
        st, geo = self.state, self.geo
        p = st.positions
        feed = any(self._under_photocell(b, geo.belt1.length) for b in st.on_belt(FEED))
        deposit = any(self._under_photocell(b, geo.belt2.length) for b in st.on_belt(DEPOSIT))
        return SensorStatus(
            s1=self._at("press", "bottom"), s2=self._at("press", "middle"),
            s3=self._at("press", "top"),
            s4=round(p["arm1"], 3), s5=round(p["arm2"], 3), s6=round(p["robot"], 3),
            s7=self._at("table_rot", "load"), s8=self._at("table_rot", "transfer"),
            s9=self._at("crane_x", "deposit"), s10=self._at("crane_x", "feed"),
            s11=round(p["crane_y"], 3), s12=round(p["table_elev"], 3),
            s13=feed, s14=deposit,
            errors=tuple(self.errors),
        )


@dataclass
class ExitReport:
    step_count: int
    forged_deliveries: int
    errors: list[str]
    reason: str

    def lines(self) -> list[str]:
        return [f"steps = {self.step_count}",
                f"forged_deliveries = {self.forged_deliveries}",
                f"errors = {';'.join(self.errors)}",
                f"reason = {self.reason}"]


class Session:
    """Protocol front-end of a simulator: buffers commands until ``react``."""

    def __init__(self, sim: CellSimulator, max_steps: int | None = None):
        self.sim = sim
        self.max_steps = max_steps
        self.pending: list[str] = []
        self.finished = False
        self.reason = ""

    def handle(self, line: str) -> str | None:
        """Process one received line; return the reply line, if any."""
        if self.finished:
            return None
        sim = self.sim
        try:
            token = decode_command(line)
        except UnknownCommand as exc:
            token = "".join(ch for ch in exc.token[:40] if ch.isprintable() and ch not in '";')
            sim._error(f"protocol: unknown command {token}")
            return None
        if token == GET_STATUS:
            reply = encode_status(sim.sample_sensors())
            if sim.halted:
                self.finished, self.reason = True, "halt"
            elif self.max_steps is not None and sim.state.step_count >= self.max_steps:
                self.finished, self.reason = True, "max-steps"
            return reply
        if sim.halted:
            return None
        if token == REACT:
            pending, self.pending = self.pending, []
            for cmd in pending:
                sim.apply_command(cmd)
                if sim.halted:
                    break
            sim.react_step()
            return None
        self.pending.append(token)
        return None

    def report(self) -> ExitReport:
        st = self.sim.state
        return ExitReport(st.step_count, st.forged_deliveries, list(self.sim.errors),
                          self.reason or "eof")


def serve(transport, sim: CellSimulator, max_steps: int | None = None,
          trace=None) -> ExitReport:
    """Run one session over ``transport`` (``recv() -> str | None``, ``send(str)``)."""
    session = Session(sim, max_steps)
    while not session.finished:
        line = transport.recv()
        if line is None:
            break
        if trace is not None:
            trace.write("> " + line.rstrip("\n") + "\n")
        reply = session.handle(line)
        if reply is not None:
            if trace is not None:
                trace.write("< " + reply)
            transport.send(reply)
    return session.report()


__all__ = ["CellSimulator", "CellPhysicalState", "Blank", "Session", "ExitReport", "serve",
           "ProtocolError", "ACTUATOR_COMMANDS"]
