"""The compositional production cell controller.

Thirteen device processes P1..P13 and a DISPATCHER, composed on the
rendezvous engine.  Each device process owns the actuator gates of its
group; processes coordinate on fourteen internal gates and receive abstract
sensor values from the dispatcher on G1..G13 (there is no G4, G5 or G11:
magnets have no sensors).

Device processes are small programs: an optional initial prefix followed by
a loop.  A step either synchronizes on an internal gate, issues an actuator
command, or waits until the device's abstract sensor value reaches a target
and then issues the stop command.  Alongside the program every sensed
process always accepts its G gate, so the dispatcher never blocks; a process
issues at most one actuator command per received status.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

from .cell_types import (AbstractionError, ArmExtension, CraneHeight, CranePosition,
                         PressPosition, RobotAngle, TableElevation, TableRotation,
                         abstract_values)
from .geometry import GeometryConfig, load_geometry
from .protocol import ACTUATOR_COMMANDS, GROUPS
from .sync_core import Accept, Behavior, Composition, Emit, Gate, Offer, Visibility

DISPATCHER = "DISPATCHER"
PROCESSES = tuple(f"P{i}" for i in range(1, 14))
GET_STATUS = "GET_STATUS"
STATUS_ARITY = 15

ACTUATOR_GATES = tuple(c.upper() for c in ACTUATOR_COMMANDS)
GATE_GROUPS = {i: tuple(c.upper() for c in g) for i, g in enumerate(GROUPS, 1)}

INTERNAL_GATES = ("FT_READY", "FT", "TA1_READY", "TA1", "A1P_READY", "A1P",
                  "PA2_READY", "PA2", "A2D_READY", "A2D", "DC_READY", "DC",
                  "CF_READY", "CF")

SENSED = (1, 2, 3, 6, 7, 8, 9, 10, 12, 13)
DISPATCH_GATES = tuple(f"G{i}" for i in SENSED)

COORDINATION = {
    "FT_READY": ("P12", "P7", "P8"),
    "FT": ("P12", "P7", "P8"),
    "TA1_READY": ("P7", "P8", "P2", "P4", "P6"),
    "TA1": ("P7", "P8", "P2", "P4", "P6"),
    "A1P_READY": ("P1", "P2", "P4", "P6"),
    "A1P": ("P1", "P2", "P4", "P6"),
    "PA2_READY": ("P1", "P3", "P5", "P6"),
    "PA2": ("P1", "P3", "P5", "P6"),
    "A2D_READY": ("P3", "P5", "P6", "P13"),
    "A2D": ("P3", "P5", "P6", "P13"),
    "DC_READY": ("P9", "P10"),
    "DC": ("P9", "P10", "P11", "P13"),
    "CF_READY": ("P9", "P10"),
    "CF": ("P9", "P10", "P11", "P12"),
}


class DispatchMode(enum.Enum):
    SEQUENTIAL = "seq"
    CONCURRENT = "conc"


def sync_matrix() -> dict[str, tuple[str, ...]]:
    """Participation of every gate."""
    matrix: dict[str, tuple[str, ...]] = {}
    for group, gates in GATE_GROUPS.items():
        for g in gates:
            matrix[g] = (f"P{group}",)
    matrix.update(COORDINATION)
    for i in SENSED:
        matrix[f"G{i}"] = (DISPATCHER, f"P{i}")
    matrix[GET_STATUS] = (DISPATCHER,)
    return matrix


def gate_registry() -> list[Gate]:
    gates = [Gate(g, Visibility.EXTERNAL) for g in ACTUATOR_GATES]
    gates.append(Gate(GET_STATUS, Visibility.STATUS, STATUS_ARITY))
    gates += [Gate(g, Visibility.INTERNAL, 1) for g in DISPATCH_GATES]
    gates += [Gate(g, Visibility.INTERNAL) for g in INTERNAL_GATES]
    return gates


# -- LIMIT predicates: has the device reached the step's target? -------------

def limit_press(value: PressPosition, target: PressPosition) -> bool:
    return value is target


def limit_arm1(value: ArmExtension, target: ArmExtension) -> bool:
    return value is target


def limit_arm2(value: ArmExtension, target: ArmExtension) -> bool:
    return value is target


def limit_robot(value: RobotAngle, target: RobotAngle) -> bool:
    return value is target


def limit_table_rot(value: TableRotation, target: TableRotation) -> bool:
    return value is target


def limit_table_elev(value: TableElevation, target: TableElevation) -> bool:
    return value is target


def limit_crane_x(value: CranePosition, target: CranePosition) -> bool:
    return value is target


def limit_crane_y(value: CraneHeight, target: CraneHeight) -> bool:
    return value is target


LIMITS: dict[str, Callable[[object, object], bool]] = {
    "P1": limit_press, "P2": limit_arm1, "P3": limit_arm2, "P6": limit_robot,
    "P7": limit_table_rot, "P8": limit_table_elev, "P9": limit_crane_x, "P10": limit_crane_y,
}


# -- programs ----------------------------------------------------------------

@dataclass(frozen=True)
class Sync:
    gate: str


@dataclass(frozen=True)
class Command:
    gate: str


@dataclass(frozen=True)
class Until:
    target: enum.Enum
    stop: str


@dataclass(frozen=True)
class Program:
    prefix: tuple
    loop: tuple

    @property
    def steps(self) -> tuple:
        return self.prefix + self.loop

    def succ(self, pc: int) -> int:
        """Next program counter; wraps to the start of the loop."""
        return pc + 1 if pc + 1 < len(self.steps) else len(self.prefix)


def _move(cmd: str, target, stop: str) -> tuple:
    return (Command(cmd), Until(target, stop))


def _transfer(gate: str) -> tuple:
    # handover, then release once the arm is retracted
    return (Sync(gate), Sync(gate))


P = PressPosition
A = ArmExtension
R = RobotAngle

PROGRAMS: dict[str, Program] = {
    "P1": Program(
        prefix=_move("PRESS_UPWARD", P.MIDDLE, "PRESS_STOP"),
        loop=(Sync("A1P_READY"), *_transfer("A1P"),
              *_move("PRESS_UPWARD", P.TOP, "PRESS_STOP"),
              *_move("PRESS_DOWNWARD", P.BOTTOM, "PRESS_STOP"),
              Sync("PA2_READY"), *_transfer("PA2"),
              *_move("PRESS_UPWARD", P.MIDDLE, "PRESS_STOP"))),
    "P2": Program(
        prefix=_move("ARM1_FORWARD", A.RETRACTED, "ARM1_STOP"),
        loop=(Sync("TA1_READY"),
              *_move("ARM1_FORWARD", A.AT_TABLE_OR_DEPOSIT, "ARM1_STOP"), Sync("TA1"),
              *_move("ARM1_BACKWARD", A.RETRACTED, "ARM1_STOP"), Sync("TA1"),
              Sync("A1P_READY"),
              *_move("ARM1_FORWARD", A.AT_PRESS, "ARM1_STOP"), Sync("A1P"),
              *_move("ARM1_BACKWARD", A.RETRACTED, "ARM1_STOP"), Sync("A1P"))),
    "P3": Program(
        prefix=_move("ARM2_FORWARD", A.RETRACTED, "ARM2_STOP"),
        loop=(Sync("PA2_READY"),
              *_move("ARM2_FORWARD", A.AT_PRESS, "ARM2_STOP"), Sync("PA2"),
              *_move("ARM2_BACKWARD", A.RETRACTED, "ARM2_STOP"), Sync("PA2"),
              Sync("A2D_READY"),
              *_move("ARM2_FORWARD", A.AT_TABLE_OR_DEPOSIT, "ARM2_STOP"), Sync("A2D"),
              *_move("ARM2_BACKWARD", A.RETRACTED, "ARM2_STOP"), Sync("A2D"))),
    "P4": Program((), (Sync("TA1_READY"), Sync("TA1"), Command("ARM1_MAG_ON"), Sync("TA1"),
                       Sync("A1P_READY"), Sync("A1P"), Command("ARM1_MAG_OFF"), Sync("A1P"))),
    "P5": Program((), (Sync("PA2_READY"), Sync("PA2"), Command("ARM2_MAG_ON"), Sync("PA2"),
                       Sync("A2D_READY"), Sync("A2D"), Command("ARM2_MAG_OFF"), Sync("A2D"))),
    "P6": Program((), (
        Sync("TA1_READY"), *_transfer("TA1"),
        *_move("ROBOT_LEFT", R.PRESS, "ROBOT_STOP"),
        Sync("A1P_READY"), *_transfer("A1P"),
        Sync("PA2_READY"), *_transfer("PA2"),
        *_move("ROBOT_LEFT", R.DEPOSIT, "ROBOT_STOP"),
        Sync("A2D_READY"), *_transfer("A2D"),
        *_move("ROBOT_RIGHT", R.TABLE, "ROBOT_STOP"))),
    "P7": Program((), (
        Sync("FT_READY"), Sync("FT"),
        *_move("TABLE_LEFT", TableRotation.TRANSFER, "TABLE_STOP_H"),
        Sync("TA1_READY"), *_transfer("TA1"),
        *_move("TABLE_RIGHT", TableRotation.LOAD, "TABLE_STOP_H"))),
    "P8": Program((), (
        Sync("FT_READY"), Sync("FT"),
        *_move("TABLE_UPWARD", TableElevation.TOP, "TABLE_STOP_V"),
        Sync("TA1_READY"), *_transfer("TA1"),
        *_move("TABLE_DOWNWARD", TableElevation.BOTTOM, "TABLE_STOP_V"))),
    "P9": Program((), (
        Sync("DC_READY"), Sync("DC"), Sync("CF_READY"),
        *_move("CRANE_TO_BELT1", CranePosition.OVER_FEED, "CRANE_STOP_H"),
        Sync("CF"),
        *_move("CRANE_TO_BELT2", CranePosition.OVER_DEPOSIT, "CRANE_STOP_H"))),
    "P10": Program((), (
        Sync("DC_READY"),
        *_move("CRANE_LOWER", CraneHeight.PICK, "CRANE_STOP_V"),
        Sync("DC"),
        *_move("CRANE_LIFT", CraneHeight.TRAVEL, "CRANE_STOP_V"),
        Sync("CF_READY"), Sync("CF"))),
    "P11": Program((), (Sync("DC"), Command("CRANE_MAG_ON"), Sync("CF"),
                        Command("CRANE_MAG_OFF"))),
}


def _program_behavior(name: str, program: Program) -> Behavior:
    """State ``(pc, value, fresh)``; ``fresh`` marks an unused status value."""
    index = int(name[1:])
    dispatch = f"G{index}" if index in SENSED else None
    limit = LIMITS.get(name)
    steps = program.steps

    def offers_of(state):
        pc, value, fresh = state
        out = []
        if dispatch is not None:
            out.append(Offer(dispatch, (Accept("v", "abstract"),),
                             lambda b, pc=pc: (pc, b["v"], True)))
        step = steps[pc]
        nxt = program.succ(pc)
        if isinstance(step, Sync):
            out.append(Offer(step.gate, (), (nxt, value, fresh)))
        elif isinstance(step, Command):
            if fresh or dispatch is None:
                out.append(Offer(step.gate, (), (nxt, value, False)))
        elif fresh and limit(value, step.target):
            out.append(Offer(step.stop, (), (nxt, value, False)))
        return out

    return Behavior(name, (0, None, False), offers_of)


@dataclass(frozen=True)
class BeltState:
    phase: str             # start | run | at_end | restart | sliding
    value: bool | None     # last photocell reading
    fresh: bool
    last_arrived: bool     # previous blank seen reaching the belt end
    extra: int = 0         # feed: blanks added; deposit: A2D stage


def _feed_belt(blank_count: int) -> Behavior:
    """P12: feed belt motor, FT handover, blank pacing and the initial blanks."""

    def receive(s: BeltState):
        def cont(b):
            v = b["v"]
            return BeltState(s.phase, v, True, s.last_arrived or (v and not s.value), s.extra)
        return cont

    def offers_of(s: BeltState):
        out = [Offer("G12", (Accept("v", "bool"),), receive(s))]
        motor = None
        if s.phase == "start" or s.phase == "restart":
            motor = ("BELT1_START", "run" if s.phase == "start" else "sliding")
        elif s.phase == "run" and s.value:
            motor = ("BELT1_STOP", "at_end")
        if motor is not None:
            if s.fresh:
                out.append(Offer(motor[0], (),
                                 BeltState(motor[1], s.value, False, s.last_arrived, s.extra)))
        elif (s.fresh and s.last_arrived and s.extra < blank_count
              and s.phase in ("run", "sliding")):
            out.append(Offer("BLANK_ADD", (),
                             BeltState(s.phase, s.value, False, False, s.extra + 1)))
        if s.phase == "at_end":
            out.append(Offer("FT_READY", (),
                             BeltState("restart", s.value, s.fresh, s.last_arrived, s.extra)))
        elif s.phase == "sliding" and s.value is False:
            out.append(Offer("FT", (),
                             BeltState("run", s.value, s.fresh, s.last_arrived, s.extra)))
        # crane drops wait until the initial blanks are all on the belt
        if s.last_arrived and s.extra >= blank_count:
            out.append(Offer("CF", (), BeltState(s.phase, s.value, s.fresh, False, s.extra)))
        return out

    return Behavior("P12", BeltState("start", None, False, True), offers_of)


def _deposit_belt() -> Behavior:
    """P13: deposit belt motor, A2D acceptance and DC handover to the crane."""

    def receive(s: BeltState):
        def cont(b):
            v = b["v"]
            return BeltState(s.phase, v, True, s.last_arrived or (v and not s.value), s.extra)
        return cont

    def offers_of(s: BeltState):
        out = [Offer("G13", (Accept("v", "bool"),), receive(s))]
        if s.fresh:
            if s.phase in ("start", "restart"):
                out.append(Offer("BELT2_START", (),
                                 BeltState("run", s.value, False, s.last_arrived, s.extra)))
            elif s.phase == "run" and s.value:
                out.append(Offer("BELT2_STOP", (),
                                 BeltState("at_end", s.value, False, s.last_arrived, s.extra)))
        if s.phase == "at_end":
            out.append(Offer("DC", (),
                             BeltState("restart", s.value, s.fresh, s.last_arrived, s.extra)))
        if s.extra == 0 and s.last_arrived:
            out.append(Offer("A2D_READY", (),
                             BeltState(s.phase, s.value, s.fresh, True, 1)))
        elif s.extra == 1:
            out.append(Offer("A2D", (), BeltState(s.phase, s.value, s.fresh, False, 2)))
        elif s.extra == 2:
            out.append(Offer("A2D", (), BeltState(s.phase, s.value, s.fresh, s.last_arrived, 0)))
        return out

    return Behavior("P13", BeltState("start", None, False, True), offers_of)


def make_process(i: int, geo: GeometryConfig | None = None) -> Behavior:
    if not 1 <= i <= 13:
        raise ValueError(f"no process P{i}")
    if i == 12:
        return _feed_belt((geo or load_geometry()).blank_count)
    if i == 13:
        return _deposit_belt()
    return _program_behavior(f"P{i}", PROGRAMS[f"P{i}"])


# -- dispatcher --------------------------------------------------------------

STATUS_SLOTS = tuple(Accept(f"s{k}", "real" if k in (4, 5, 6, 11, 12) else "bool")
                     for k in range(1, 15)) + (Accept("errors", "string"),)


def payload(abstract) -> tuple:
    """Per-gate values in G1, G2, G3, G6, ..., G13 order."""
    return (abstract.press, abstract.arm1, abstract.arm2, abstract.robot, abstract.table_rot,
            abstract.table_elev, abstract.crane_pos, abstract.crane_height,
            abstract.feed_cell, abstract.deposit_cell)


def dispatcher(mode: DispatchMode, geo: GeometryConfig | None = None) -> Behavior:
    """Acquire the status on GET_STATUS, then hand each process its values.

    States: ``("wait",)``, ``("seq", k, values)``, ``("conc", pending, values)``
    and ``("fault", message)`` which offers nothing.
    """
    geo = geo or load_geometry()

    def acquire(b):
        try:
            abstract = abstract_values([b[f"s{k}"] for k in range(1, 15)], geo)
        except AbstractionError as exc:
            return ("fault", str(exc))
        values = payload(abstract)
        if mode is DispatchMode.SEQUENTIAL:
            return ("seq", 0, values)
        return ("conc", frozenset(range(len(values))), values)

    def offers_of(state):
        kind = state[0]
        if kind == "wait":
            return [Offer(GET_STATUS, STATUS_SLOTS, acquire)]
        if kind == "seq":
            _, k, values = state
            nxt = ("seq", k + 1, values) if k + 1 < len(values) else ("wait",)
            return [Offer(DISPATCH_GATES[k], (Emit(values[k]),), nxt)]
        if kind == "conc":
            _, pending, values = state
            out = []
            for k in sorted(pending):
                rest = pending - {k}
                nxt = ("conc", rest, values) if rest else ("wait",)
                out.append(Offer(DISPATCH_GATES[k], (Emit(values[k]),), nxt))
            return out
        return []

    return Behavior(DISPATCHER, ("wait",), offers_of)


def build_controller(mode: DispatchMode = DispatchMode.CONCURRENT,
                     geo: GeometryConfig | None = None) -> Composition:
    geo = geo or load_geometry()
    processes = [dispatcher(mode, geo)] + [make_process(i, geo) for i in range(1, 14)]
    return Composition(processes, gate_registry(), sync_matrix())


def controller_fault(c: Composition, states) -> str | None:
    state = states[c.names.index(DISPATCHER)]
    return state[1] if state[0] == "fault" else None


def dump_matrix(c: Composition) -> str:
    lines = []
    for name in c.gate_order:
        gate = c.gates[name]
        parts = ",".join(c.names[i] for i in c.participation[name])
        lines.append(f"{name:<16} {gate.visibility.value:<9} {len(c.participation[name])} {parts}")
    return "\n".join(lines) + "\n"
