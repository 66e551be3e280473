import random

import pytest
from hypothesis import given, settings, strategies as st

from oracle import (engine_transitions, observer, oracle_transitions, random_spec, reachable,
                    to_engine, visible_traces, with_process)
from prodcell.sync_core import (Accept, Behavior, Composition, CompositionError,
                                ContractViolation, Emit, Gate, Offer, SchedulerPolicy,
                                StopReason, Visibility, enabled, fire, run, unify)


def test_unify_single_emitter_binds():
    assert unify([Offer("g", (Emit(5),)), Offer("g", (Accept("x"),))]) == {"x": 5}


def test_unify_unequal_emissions_fail():
    assert unify([Offer("g", (Emit(5),)), Offer("g", (Emit(6),))]) is None


def test_unify_predicate_forbids():
    accept = Offer("g", (Accept("x"),), predicate=lambda b: b["x"] > 3)
    assert unify([Offer("g", (Emit(2),)), accept]) is None
    assert unify([Offer("g", (Emit(4),)), accept]) == {"x": 4}


def test_unify_accept_only_position_fails():
    assert unify([Offer("g", (Accept("x"),)), Offer("g", (Accept("y"),))]) is None


def test_unify_is_type_strict():
    assert unify([Offer("g", (Emit(1),)), Offer("g", (Emit(True),))]) is None


def test_unify_rebinding_is_type_strict():
    offers = [Offer("g", (Emit(1), Emit(True))), Offer("g", (Accept("y"), Accept("y")))]
    assert unify(offers) is None
    assert unify([Offer("g", (Emit((1,)),)), Offer("g", (Emit((True,)),))]) is None


def test_unify_shared_variable_must_agree():
    offers = [Offer("g", (Emit(1), Emit(2))), Offer("g", (Accept("x"), Accept("x")))]
    assert unify(offers) is None


def test_unify_arity_mismatch_is_construction_error():
    with pytest.raises(CompositionError):
        unify([Offer("g", (Emit(1),)), Offer("g", ())])


def test_unify_zero_arity():
    assert unify([Offer("g"), Offer("g")]) == {}


def _three_party(offering=(True, True, True)):
    procs = []
    for k, on in enumerate(offering):
        procs.append(Behavior(f"P{k}", 0, (lambda s, on=on: [Offer("FT", (), 1)] if on and s == 0
                                           else [])))
    procs.append(Behavior("Q", 0, lambda s: [Offer("H", (), 0)]))
    part = {"FT": ["P0", "P1", "P2"], "H": ["Q"]}
    return Composition(procs, [Gate("FT"), Gate("H")], part)


def test_three_party_rendezvous_enabled():
    c = _three_party()
    gates = [r.gate for r in enabled(c, c.initial_states())]
    assert gates == ["FT", "H"]


def test_missing_participant_blocks():
    c = _three_party((True, False, True))
    assert [r.gate for r in enabled(c, c.initial_states())] == ["H"]


def test_fire_advances_exactly_participants():
    c = _three_party()
    r = next(r for r in enabled(c, c.initial_states()) if r.gate == "FT")
    new, ev = fire(c, c.initial_states(), r, step=7)
    assert new == (1, 1, 1, 0)
    assert ev.participants == ("P0", "P1", "P2")
    assert ev.to_line() == "step=7 gate=FT participants=P0,P1,P2 binding="


def test_fire_single_participant_is_local():
    c = _three_party()
    r = next(r for r in enabled(c, c.initial_states()) if r.gate == "H")
    new, _ = fire(c, c.initial_states(), r)
    assert new == c.initial_states()


def test_fire_not_enabled_is_contract_violation():
    c = _three_party()
    r = next(r for r in enabled(c, c.initial_states()) if r.gate == "FT")
    moved, _ = fire(c, c.initial_states(), r)
    with pytest.raises(ContractViolation):
        fire(c, moved, r)


def test_multiple_offers_enumerate_all_combinations():
    a = Behavior("a", 0, lambda s: [Offer("g", (Emit(1),), 1), Offer("g", (Emit(2),), 2)])
    b = Behavior("b", 0, lambda s: [Offer("g", (Accept("x"),), 1),
                                    Offer("g", (Accept("y"),), 2)])
    c = Composition([a, b], [Gate("g", arity=1)], {"g": ["a", "b"]})
    rs = enabled(c, c.initial_states())
    assert len(rs) == 4
    assert {r.binding for r in rs} == {(("x", 1),), (("x", 2),), (("y", 1),), (("y", 2),)}


def test_event_line_formats_binding():
    a = Behavior("a", 0, lambda s: [Offer("g", (Emit(True), Emit(3)), 0)])
    b = Behavior("b", 0, lambda s: [Offer("g", (Accept("on"), Accept("n")), 0)])
    c = Composition([a, b], [Gate("g", arity=2)], {"g": ["a", "b"]})
    r, = enabled(c, c.initial_states())
    _, ev = fire(c, c.initial_states(), r, step=0)
    assert ev.to_line() == "step=0 gate=g participants=a,b binding=n=3;on=true"


def test_composition_rejects_foreign_offer():
    a = Behavior("a", 0, lambda s: [Offer("h", (), 0)])
    b = Behavior("b", 0, lambda s: [])
    c = Composition([a, b], [Gate("g"), Gate("h")], {"g": ["a"], "h": ["b"]})
    with pytest.raises(CompositionError):
        enabled(c, c.initial_states())


def test_composition_requires_total_participation():
    a = Behavior("a", 0, lambda s: [])
    with pytest.raises(CompositionError):
        Composition([a], [Gate("g"), Gate("h")], {"g": ["a"]})
    with pytest.raises(CompositionError):
        Composition([a], [Gate("g")], {"g": ["a"], "zz": ["a"]})
    with pytest.raises(CompositionError):
        Composition([a, Behavior("a", 0, lambda s: [])], [Gate("g")], {"g": ["a"]})


def test_run_is_deterministic_per_seed():
    spec = random_spec(random.Random(11), max_procs=3)
    c = to_engine(spec)
    runs = [run(c, c.initial_states(), SchedulerPolicy((), 99), 50) for _ in range(2)]
    assert [e.to_line() for e in runs[0].trace] == [e.to_line() for e in runs[1].trace]


def test_run_reports_deadlock_at_step_zero():
    c = Composition([Behavior("a", 0, lambda s: [])], [Gate("g")], {"g": ["a"]})
    result = run(c, c.initial_states(), SchedulerPolicy(), 10)
    assert result.reason is StopReason.DEADLOCK and result.trace == []


def test_run_budget_and_stop():
    c = Composition([Behavior("a", 0, lambda s: [Offer("g", (), s + 1)])], [Gate("g")],
                    {"g": ["a"]})
    assert run(c, (0,), SchedulerPolicy(), 5).reason is StopReason.BUDGET
    stopped = run(c, (0,), SchedulerPolicy(), 50, stop=lambda ev, s: s[0] == 3)
    assert stopped.reason is StopReason.STOPPED and len(stopped.trace) == 3


def test_priority_prefers_actuator_class():
    a = Behavior("a", 0, lambda s: [Offer("CMD", (), 0), Offer("STATUS", (), 0)])
    c = Composition([a], [Gate("CMD", Visibility.EXTERNAL), Gate("STATUS", Visibility.STATUS)],
                    {"CMD": ["a"], "STATUS": ["a"]})
    policy = SchedulerPolicy([frozenset({"CMD"})], seed=5)
    result = run(c, c.initial_states(), policy, 20)
    assert {e.gate for e in result.trace} == {"CMD"}


def test_oracle_agrees_on_sample():
    rng = random.Random(2024)
    for _ in range(100):
        spec = random_spec(rng)
        c = to_engine(spec)
        for s in reachable(spec, 100):
            assert engine_transitions(c, s) == oracle_transitions(spec, s)


seeds = st.integers(min_value=0, max_value=2**32)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_blocking_every_participant_offers(seed):
    spec = random_spec(random.Random(seed))
    c = to_engine(spec)
    for s in reachable(spec, 60):
        for r in enabled(c, s):
            for p in c.participation[r.gate]:
                assert any(o.gate == r.gate for o in c.offers(p, s[p]))


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_fire_changes_only_participants(seed):
    spec = random_spec(random.Random(seed))
    c = to_engine(spec)
    for s in reachable(spec, 60):
        for r in enabled(c, s):
            nxt, _ = fire(c, s, r)
            for i in range(len(s)):
                if i not in c.participation[r.gate]:
                    assert nxt[i] == s[i]


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_disjoint_rendezvous_commute(seed):
    spec = random_spec(random.Random(seed))
    c = to_engine(spec)
    for s in reachable(spec, 40):
        rs = enabled(c, s)
        for r1 in rs:
            for r2 in rs:
                if set(r1.participants) & set(r2.participants):
                    continue
                a, _ = fire(c, s, r1)
                a, _ = fire(c, a, r2)
                b, _ = fire(c, s, r2)
                b, _ = fire(c, b, r1)
                assert a == b


def _small(rng):
    return random_spec(rng, max_procs=3, max_gates=3, max_states=4, values=(0, 1),
                       max_arity=1, max_offers=2)


def test_observer_is_transparent_sample():
    rng = random.Random(77)
    for _ in range(20):
        spec = _small(rng)
        watched = [rng.choice(list(spec.gates))]
        plain = visible_traces(to_engine(spec), 6)
        observed = visible_traces(with_process(spec, observer(spec.gates, watched), watched), 6,
                                  visible=set(spec.gates))
        assert plain == observed


def test_supervisor_removes_exactly_traces_with_gate():
    rng = random.Random(5)
    for _ in range(20):
        spec = _small(rng)
        g = rng.choice(list(spec.gates))
        refuser = Behavior("supervisor", 0, lambda s: [])
        restricted = visible_traces(with_process(spec, refuser, [g]), 6)
        plain = visible_traces(to_engine(spec), 6)
        assert restricted == {t for t in plain if all(lab[0] != g for lab in t)}


def test_scheduler_seed_is_masked_to_64_bits():
    a = SchedulerPolicy((), seed=2**64 + 3)
    b = SchedulerPolicy((), seed=3)
    assert a.rng.random() == b.rng.random()
