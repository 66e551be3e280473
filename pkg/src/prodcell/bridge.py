"""Main loop coupling the controller composition to a simulator.

Each reaction cycle: fire enabled internal and actuator rendezvous until
none remains (actuator firings are sent as command lines), send ``react``,
then ``get_status`` and feed the decoded reply to the dispatcher through the
GET_STATUS rendezvous.
"""

from __future__ import annotations

import collections
import socket
import subprocess
import sys
import time
from dataclasses import dataclass, field
from typing import Iterable, TextIO

from .controller import (DISPATCH_GATES, GET_STATUS, DispatchMode, build_controller,
                         controller_fault)
from .geometry import GeometryConfig, load_geometry
from .protocol import (ACTUATOR_COMMANDS, GROUP_OF, GROUPS, REACT, ProtocolError,
                       decode_status)
from .protocol import GET_STATUS as GET_STATUS_LINE
from .simulator import MAGNET_COMMANDS, MOTOR_COMMANDS, CellSimulator, Session
from .sync_core import (Behavior, Composition, Emit, Offer, SchedulerPolicy, Visibility,
                        enabled, fire)

ENV = "ENV"
DEFAULT_LIVELOCK_BOUND = 1000
# forged deliveries expected per 20,000 cycles in a healthy soak
THROUGHPUT_PER_20K = 25


# -- transports --------------------------------------------------------------

class LoopbackTransport:
    """Talks to an in-process simulator session; no threads, no pipes."""

    def __init__(self, sim: CellSimulator | None = None, max_steps: int | None = None):
        self.session = Session(sim or CellSimulator(), max_steps)
        self._replies: collections.deque[str] = collections.deque()

    @property
    def sim(self) -> CellSimulator:
        return self.session.sim

    def send(self, line: str) -> None:
        reply = self.session.handle(line)
        if reply is not None:
            self._replies.append(reply)

    def recv(self) -> str | None:
        return self._replies.popleft() if self._replies else None

    def close(self) -> None:
        pass


class StreamTransport:
    """Line transport over a pair of text streams."""

    def __init__(self, rfile: TextIO, wfile: TextIO, closer=None):
        self.rfile, self.wfile, self._closer = rfile, wfile, closer

    def send(self, line: str) -> None:
        self.wfile.write(line if line.endswith("\n") else line + "\n")
        self.wfile.flush()

    def recv(self) -> str | None:
        line = self.rfile.readline()
        return line or None

    def close(self) -> None:
        for f in (self.wfile, self.rfile):
            try:
                f.close()
            except OSError:
                pass
        if self._closer is not None:
            self._closer()


def spawn_simulator(config: str | None = None, max_steps: int | None = None) -> StreamTransport:
    """Start ``cellsim --stdio`` as a child process."""
    cmd = [sys.executable, "-m", "prodcell.cli", "sim", "--stdio"]
    if config:
        cmd += ["--config", str(config)]
    if max_steps is not None:
        cmd += ["--max-steps", str(max_steps)]
    proc = subprocess.Popen(cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True,
                            bufsize=1)

    def wait():
        try:
            proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    return StreamTransport(proc.stdout, proc.stdin, wait)


def connect_tcp(host: str, port: int) -> StreamTransport:
    sock = socket.create_connection((host, port))
    f = sock.makefile("rw", encoding="utf-8", newline="\n")
    return StreamTransport(f, f, sock.close)


def open_transport(spec: str, geo_path: str | None = None, geo: GeometryConfig | None = None):
    """``inproc``, ``stdio`` (spawned simulator) or ``tcp:host:port``."""
    if spec == "inproc":
        return LoopbackTransport(CellSimulator(geo or load_geometry(geo_path)))
    if spec == "stdio":
        return spawn_simulator(geo_path)
    if spec.startswith("tcp:"):
        host, _, port = spec[4:].rpartition(":")
        return connect_tcp(host or "127.0.0.1", int(port))
    raise ValueError(f"unknown connection {spec!r}")


# -- drive -------------------------------------------------------------------

@dataclass
class BridgePolicy:
    """Seeded choice among HIGH gates; dispatch gates are served first."""

    seed: int = 0
    livelock_bound: int = DEFAULT_LIVELOCK_BOUND
    react_pending: bool = False

    def scheduler(self, c: Composition) -> SchedulerPolicy:
        return SchedulerPolicy([frozenset(DISPATCH_GATES), high_gates(c)], self.seed)


def high_gates(c: Composition) -> frozenset[str]:
    return frozenset(g.name for g in c.gates.values()
                     if g.visibility in (Visibility.INTERNAL, Visibility.EXTERNAL))


@dataclass
class RunReport:
    steps: int = 0
    cycles: int = 0
    commands_per_group: dict[int, int] = field(
        default_factory=lambda: {i: 0 for i in range(1, len(GROUPS) + 1)})
    forged_deliveries: int = 0
    violations: list[str] = field(default_factory=list)
    wall_time: float = 0.0
    simulator_forged: int | None = None
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def lines(self) -> list[str]:
        out = [f"ok = {str(self.ok).lower()}", f"steps = {self.steps}",
               f"cycles = {self.cycles}", f"forged_deliveries = {self.forged_deliveries}"]
        if self.simulator_forged is not None:
            out.append(f"simulator_forged_deliveries = {self.simulator_forged}")
        out += [f"group{g}_commands = {n}" for g, n in sorted(self.commands_per_group.items())]
        out += [f"check_{k} = {'pass' if v else 'fail'}" for k, v in self.checks.items()]
        out += [f"violation = {v}" for v in self.violations]
        out.append(f"wall_time = {self.wall_time:.3f}")
        return out


def _env_behavior() -> Behavior:
    """Stands for the simulator on GET_STATUS: emits the last decoded status."""

    def offers_of(state):
        if state is None:
            return []
        return [Offer(GET_STATUS, tuple(Emit(v) for v in state), None)]

    return Behavior(ENV, None, offers_of, cache=False)


def with_environment(c: Composition) -> Composition:
    return c.extend(_env_behavior(), [GET_STATUS])


def drive(composition: Composition, transport, policy: BridgePolicy, budget: int,
          trace: TextIO | None = None) -> RunReport:
    """Run ``budget`` reaction cycles; the composition must not yet contain ENV."""
    start = time.perf_counter()
    c = with_environment(composition)
    env = c.names.index(ENV)
    sched = policy.scheduler(c)
    high = list(c.gate_order)
    high = [g for g in high if g in high_gates(c)]
    states = tuple(c.initial_states())
    report = RunReport()

    def emit(line: str) -> None:
        transport.send(line + "\n")
        if trace is not None:
            trace.write("> " + line + "\n")

    def record(ev) -> None:
        report.steps += 1
        if trace is not None:
            trace.write(ev.to_line() + "\n")

    while report.cycles < budget:
        fired = 0
        while True:
            r = sched.choose(enabled(c, states, high))
            if r is None:
                break
            fired += 1
            if fired > policy.livelock_bound:
                report.violations.append(
                    f"livelock: more than {policy.livelock_bound} firings in cycle "
                    f"{report.cycles + 1}")
                return _finish(report, start)
            states, ev = fire(c, states, r, step=report.steps, check=False)
            record(ev)
            if c.gates[r.gate].visibility is Visibility.EXTERNAL:
                token = r.gate.lower()
                report.commands_per_group[GROUP_OF[token]] += 1
                if token == "arm2_mag_off":
                    report.forged_deliveries += 1
                emit(token)
        policy.react_pending = True
        emit(REACT)
        policy.react_pending = False
        emit(GET_STATUS_LINE)
        line = transport.recv()
        if line is None:
            report.violations.append(f"transport: end of stream in cycle {report.cycles + 1}")
            return _finish(report, start)
        if trace is not None:
            trace.write("< " + line.rstrip("\n") + "\n")
        try:
            status = decode_status(line)
        except ProtocolError as exc:
            report.violations.append(f"protocol: {exc}")
            return _finish(report, start)
        report.cycles += 1
        if status.errors:
            report.violations.append("simulator: " + ";".join(status.errors))
            return _finish(report, start)
        states = states[:env] + (status.sensors() + (";".join(status.errors),),) + states[env + 1:]
        candidates = enabled(c, states, [GET_STATUS])
        if not candidates:
            report.violations.append(f"deadlock: GET_STATUS refused in cycle {report.cycles}")
            return _finish(report, start)
        states, ev = fire(c, states, candidates[0], step=report.steps, check=False)
        record(ev)
        states = states[:env] + (None,) + states[env + 1:]
        fault = controller_fault(c, states)
        if fault is not None:
            report.violations.append(f"controller fault: {fault}")
            return _finish(report, start)
    return _finish(report, start)


def _finish(report: RunReport, start: float) -> RunReport:
    report.wall_time = time.perf_counter() - start
    return report


# -- independent checks over the emitted command stream ----------------------

def split_cycles(lines: Iterable[str]) -> tuple[list[list[str]], list[str]]:
    """Group sent lines into cycles ``(actuator)* react get_status``."""
    cycles, current, problems = [], [], []
    expect_status = False
    for n, line in enumerate(lines, 1):
        if expect_status:
            if line != GET_STATUS_LINE:
                problems.append(f"line {n}: {line} between react and get_status")
                continue
            cycles.append(current)
            current, expect_status = [], False
        elif line == REACT:
            expect_status = True
        elif line == GET_STATUS_LINE:
            problems.append(f"line {n}: get_status without react")
        elif line not in ACTUATOR_COMMANDS:
            problems.append(f"line {n}: unknown line {line}")
        else:
            current.append(line)
    if current or expect_status:
        problems.append("incomplete final cycle")
    return cycles, problems


def check_shape(cycles: list[list[str]]) -> list[str]:
    problems = []
    for k, cmds in enumerate(cycles, 1):
        groups = collections.Counter(GROUP_OF[c] for c in cmds)
        for g, n in groups.items():
            if n > 1:
                problems.append(f"cycle {k}: {n} commands in group {g}")
    return problems


def check_magnets(commands: Iterable[str]) -> list[str]:
    problems, last = [], {}
    for n, c in enumerate(commands, 1):
        if c in MAGNET_COMMANDS:
            magnet, on = MAGNET_COMMANDS[c]
            if last.get(magnet, False) == on:
                problems.append(f"command {n}: {c} does not alternate")
            last[magnet] = on
    return problems


def check_motors(commands: Iterable[str]) -> list[str]:
    problems, moving = [], {}
    for n, c in enumerate(commands, 1):
        if c in MOTOR_COMMANDS:
            axis, d = MOTOR_COMMANDS[c]
            if d and moving.get(axis, 0) == -d:
                problems.append(f"command {n}: {c} reverses {axis} without stop")
            moving[axis] = d
    return problems


class RecordingTransport:
    """Wraps a transport and keeps every line sent through it."""

    def __init__(self, inner):
        self.inner = inner
        self.sent: list[str] = []

    def send(self, line: str) -> None:
        self.sent.append(line.rstrip("\n"))
        self.inner.send(line)

    def recv(self) -> str | None:
        return self.inner.recv()

    def close(self) -> None:
        self.inner.close()


def soak(geo: GeometryConfig | None = None, steps: int = 20000, seed: int = 0,
         mode: DispatchMode = DispatchMode.CONCURRENT, connect: str = "inproc",
         config_path: str | None = None, trace: TextIO | None = None,
         min_forged: int | None = None, transport=None) -> RunReport:
    """Drive ``steps`` cycles and check the invariants on the command stream."""
    geo = geo or load_geometry(config_path)
    if min_forged is None:
        min_forged = steps * THROUGHPUT_PER_20K // 20000
    if steps == 0:
        return RunReport()
    inner = transport or open_transport(connect, config_path, geo)
    rec = RecordingTransport(inner)
    try:
        report = drive(build_controller(mode, geo), rec, BridgePolicy(seed), steps, trace)
    finally:
        rec.close()
    if isinstance(inner, LoopbackTransport):
        report.simulator_forged = inner.sim.state.forged_deliveries
    cycles, shape = split_cycles(rec.sent)
    if not report.ok:
        # a run cut short ends mid-cycle; that is already reported
        shape = [p for p in shape if p != "incomplete final cycle"]
    shape += check_shape(cycles)
    commands = [c for cyc in cycles for c in cyc]
    magnets, motors = check_magnets(commands), check_motors(commands)
    throughput = report.forged_deliveries >= min_forged
    report.checks = {"shape": not shape, "magnet_alternation": not magnets,
                     "motor_discipline": not motors, "throughput": throughput}
    report.violations += shape + magnets + motors
    if not throughput:
        report.violations.append(
            f"throughput: {report.forged_deliveries} forged deliveries < {min_forged}")
    return report


class TamperTransport:
    """Fault injection: release arm 1's magnet a few cycles after it gripped."""

    def __init__(self, inner, delay: int = 5, command: str = "arm1_mag_off",
                 trigger: str = "arm1_mag_on"):
        self.inner, self.delay, self.command, self.trigger = inner, delay, command, trigger
        self._countdown: int | None = None
        self.injected_at: int | None = None
        self.cycle = 0

    def send(self, line: str) -> None:
        token = line.rstrip("\n")
        if token == self.trigger and self.injected_at is None:
            self._countdown = self.delay
        if token == REACT:
            if self._countdown == 0:
                self.inner.send(self.command + "\n")
                self.injected_at = self.cycle
                self._countdown = None
            elif self._countdown is not None:
                self._countdown -= 1
            self.cycle += 1
        self.inner.send(line)

    def recv(self) -> str | None:
        return self.inner.recv()

    def close(self) -> None:
        self.inner.close()
