"""Multiway rendezvous engine.

Processes are explicit state machines: a behavior maps a local state to the
finite set of offers it currently makes.  A rendezvous on a gate fires when
every process in the gate's participation set offers it, the emitted values
agree slot by slot, and every selection predicate holds under the resulting
binding.
"""

from __future__ import annotations

import enum
import itertools
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Mapping, Sequence


class CompositionError(Exception):
    """Raised when a composition is structurally ill-formed."""


class ContractViolation(Exception):
    """Raised when an engine operation is called outside its precondition."""


class Visibility(enum.Enum):
    EXTERNAL = "external"
    INTERNAL = "internal"
    STATUS = "status"


@dataclass(frozen=True)
class Gate:
    name: str
    visibility: Visibility = Visibility.INTERNAL
    arity: int = 0


@dataclass(frozen=True)
class Emit:
    value: Hashable


@dataclass(frozen=True)
class Accept:
    var: str
    domain: str | None = None


Slot = Emit | Accept
Binding = Mapping[str, Any]


@dataclass(frozen=True, eq=False)
class Offer:
    """Readiness of one process on one gate.

    ``continuation`` is the next local state, or a callable taking the
    binding and returning the next state when the state depends on received
    values.
    """

    gate: str
    slots: tuple[Slot, ...] = ()
    continuation: Any = None
    predicate: Callable[[Binding], bool] | None = None

    def next_state(self, binding: Binding) -> Any:
        if callable(self.continuation):
            return self.continuation(binding)
        return self.continuation


STUCK: tuple = ()


class Behavior:
    """A process as a state machine ``state -> offers``.

    ``offers_of`` must be deterministic in the state.  Results are memoized
    when ``cache`` is set, which requires hashable states.
    """

    def __init__(self, name: str, initial: Any, offers_of: Callable[[Any], Iterable[Offer]],
                 cache: bool = True):
        self.name = name
        self.initial = initial
        self._offers_of = offers_of
        self._cache: dict[Any, tuple[Offer, ...]] | None = {} if cache else None

    def offers(self, state: Any) -> tuple[Offer, ...]:
        if self._cache is None:
            return tuple(self._offers_of(state))
        try:
            return self._cache[state]
        except KeyError:
            result = self._cache[state] = tuple(self._offers_of(state))
            return result

    def __repr__(self) -> str:
        return f"Behavior({self.name!r})"


@dataclass(frozen=True)
class Rendezvous:
    """A matched synchronization.

    Identity is (gate, participants, index of each chosen offer, binding), so
    rendezvous computed from freshly rebuilt offers still compare equal.
    """

    gate: str
    choice: tuple[tuple[int, Offer], ...] = field(compare=False)
    positions: tuple[tuple[int, int], ...]
    binding: tuple[tuple[str, Any], ...]
    values: tuple = field(compare=False)

    @property
    def participants(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.choice)

    def binding_dict(self) -> dict[str, Any]:
        return dict(self.binding)


@dataclass(frozen=True)
class Event:
    step: int
    gate: str
    participants: tuple[str, ...]
    binding: tuple[tuple[str, Any], ...]
    values: tuple

    def to_line(self) -> str:
        binding = ";".join(f"{k}={_fmt(v)}" for k, v in self.binding)
        return (f"step={self.step} gate={self.gate} "
                f"participants={','.join(self.participants)} binding={binding}")


def _fmt(value: Any) -> str:
    if isinstance(value, enum.Enum):
        return value.name
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


class Composition:
    """Processes plus the synchronization vector (gate -> participants)."""

    def __init__(self, processes: Sequence[Behavior], gates: Iterable[Gate],
                 participation: Mapping[str, Iterable[str | int]]):
        self.processes = list(processes)
        self.names = [p.name for p in self.processes]
        if len(set(self.names)) != len(self.names):
            raise CompositionError("duplicate process names")
        index = {n: i for i, n in enumerate(self.names)}
        self.gates: dict[str, Gate] = {}
        for g in gates:
            if g.name in self.gates:
                raise CompositionError(f"duplicate gate {g.name}")
            self.gates[g.name] = g
        self.participation: dict[str, tuple[int, ...]] = {}
        for gname, parts in participation.items():
            if gname not in self.gates:
                raise CompositionError(f"participation names unknown gate {gname}")
            idx = sorted({index[p] if isinstance(p, str) else int(p) for p in parts})
            if not idx:
                raise CompositionError(f"gate {gname} has no participant")
            if idx[0] < 0 or idx[-1] >= len(self.processes):
                raise CompositionError(f"gate {gname} names an unknown process")
            self.participation[gname] = tuple(idx)
        missing = set(self.gates) - set(self.participation)
        if missing:
            raise CompositionError(f"gates without participants: {sorted(missing)}")
        self.gate_order = list(self.gates)
        self._gates_of = [frozenset(g for g, ps in self.participation.items() if i in ps)
                          for i in range(len(self.processes))]

    def initial_states(self) -> tuple:
        return tuple(p.initial for p in self.processes)

    def gates_of(self, i: int) -> frozenset[str]:
        return self._gates_of[i]

    def extend(self, behavior: Behavior, gates: Iterable[str]) -> "Composition":
        """Return a new composition with one more process joining ``gates``."""
        part = {g: [self.names[i] for i in ps] for g, ps in self.participation.items()}
        for g in gates:
            part[g].append(behavior.name)
        return Composition(self.processes + [behavior], self.gates.values(), part)

    def offers(self, i: int, state: Any) -> tuple[Offer, ...]:
        offers = self.processes[i].offers(state)
        allowed = self._gates_of[i]
        for o in offers:
            if o.gate not in allowed:
                raise CompositionError(
                    f"process {self.names[i]} offers {o.gate} without participating in it")
        return offers


def _same(a: Any, b: Any) -> bool:
    # strict typing: 1, 1.0 and True are three different values
    if type(a) is not type(b):
        return False
    if isinstance(a, tuple):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    return a == b


def unify(offers: Sequence[Offer], arity: int | None = None) -> dict[str, Any] | None:
    """Match the slots of one offer per participant; None means no rendezvous."""
    if not offers:
        return None
    gate = offers[0].gate
    n = len(offers[0].slots) if arity is None else arity
    for o in offers:
        if o.gate != gate:
            raise ContractViolation(f"unify over mixed gates {gate}/{o.gate}")
        if len(o.slots) != n:
            raise CompositionError(f"arity mismatch on gate {gate}: {len(o.slots)} != {n}")
    binding: dict[str, Any] = {}
    for pos in range(n):
        emitted = [o.slots[pos].value for o in offers if isinstance(o.slots[pos], Emit)]
        if not emitted:
            return None
        value = emitted[0]
        if not all(_same(v, value) for v in emitted[1:]):
            return None
        for o in offers:
            slot = o.slots[pos]
            if isinstance(slot, Accept):
                if slot.var in binding and not _same(binding[slot.var], value):
                    return None
                binding[slot.var] = value
    for o in offers:
        if o.predicate is not None and not o.predicate(binding):
            return None
    return binding


def _slot_values(offers: Sequence[Offer], n: int) -> tuple:
    out = []
    for pos in range(n):
        for o in offers:
            if isinstance(o.slots[pos], Emit):
                out.append(o.slots[pos].value)
                break
    return tuple(out)


def enabled(c: Composition, states: Sequence[Any],
            gates: Iterable[str] | None = None) -> list[Rendezvous]:
    """All rendezvous enabled in ``states``, in deterministic order."""
    by_gate: dict[str, dict[int, list[tuple[int, Offer]]]] = {}
    for i, s in enumerate(states):
        for k, o in enumerate(c.offers(i, s)):
            by_gate.setdefault(o.gate, {}).setdefault(i, []).append((k, o))
    result: list[Rendezvous] = []
    for gname in (c.gate_order if gates is None else gates):
        offered = by_gate.get(gname)
        if offered is None:
            continue
        parts = c.participation[gname]
        if any(p not in offered for p in parts):
            continue
        arity = c.gates[gname].arity
        for combo in itertools.product(*(offered[p] for p in parts)):
            chosen = [o for _, o in combo]
            binding = unify(chosen, arity)
            if binding is None:
                continue
            result.append(Rendezvous(gname, tuple(zip(parts, chosen)),
                                     tuple((p, k) for p, (k, _) in zip(parts, combo)),
                                     tuple(sorted(binding.items())),
                                     _slot_values(chosen, arity)))
    return result


def fire(c: Composition, states: Sequence[Any], r: Rendezvous,
         step: int = 0, check: bool = True) -> tuple[tuple, Event]:
    """Advance every participant of ``r`` to its continuation."""
    if check and r not in enabled(c, states, [r.gate]):
        raise ContractViolation(f"rendezvous on {r.gate} is not enabled")
    binding = r.binding_dict()
    new = list(states)
    for i, offer in r.choice:
        new[i] = offer.next_state(binding)
    event = Event(step, r.gate, tuple(c.names[i] for i in r.participants), r.binding, r.values)
    return tuple(new), event


@dataclass
class SchedulerPolicy:
    """Priority classes (highest first) plus a seeded uniform tie-break.

    Gates absent from every class form an implicit lowest class.
    """

    classes: Sequence[frozenset[str]] = ()
    seed: int = 0
    rng: random.Random = field(init=False, repr=False)

    def __post_init__(self):
        self.rng = random.Random(self.seed & 0xFFFF_FFFF_FFFF_FFFF)

    def rank(self, gate: str) -> int:
        for k, cls in enumerate(self.classes):
            if gate in cls:
                return k
        return len(self.classes)

    def choose(self, candidates: Sequence[Rendezvous]) -> Rendezvous | None:
        if not candidates:
            return None
        best = min(self.rank(r.gate) for r in candidates)
        top = [r for r in candidates if self.rank(r.gate) == best]
        return top[self.rng.randrange(len(top))]


class StopReason(enum.Enum):
    BUDGET = "budget"
    DEADLOCK = "deadlock"
    STOPPED = "stopped"


@dataclass
class RunResult:
    trace: list[Event]
    states: tuple
    reason: StopReason


def run(c: Composition, states: Sequence[Any], policy: SchedulerPolicy, budget: int,
        stop: Callable[[Event, tuple], bool] | None = None) -> RunResult:
    states = tuple(states)
    trace: list[Event] = []
    for step in range(budget):
        r = policy.choose(enabled(c, states))
        if r is None:
            return RunResult(trace, states, StopReason.DEADLOCK)
        states, ev = fire(c, states, r, step=step, check=False)
        trace.append(ev)
        if stop is not None and stop(ev, states):
            return RunResult(trace, states, StopReason.STOPPED)
    return RunResult(trace, states, StopReason.BUDGET)
