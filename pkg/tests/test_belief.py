import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_legal_statements
from microworld.belief import BeliefState, Contradiction, label, update_belief
from microworld.oracle import oracle_label, prefix_state_sets
from microworld.world import (
    At,
    Carry,
    Drop,
    Give,
    Grab,
    Holds,
    Label,
    LocationFact,
    Move,
    Negation,
    ObjAt,
    Statement,
    World,
    WorldState,
    statement_entities,
)


@pytest.fixture
def world():
    return World(["mary", "john"], ["kitchen", "garden", "office"], ["apple"])


def test_stated_move_is_entailed(world):
    b = update_belief(BeliefState(world), Statement(Move("mary", "kitchen"), 0))
    assert b.agent_possible("mary") == {"kitchen"}
    assert label(b, At("mary", "kitchen")) is Label.TRUE


def test_negation_after_collapse_contradicts(world):
    b = update_belief(BeliefState(world), Statement(Move("mary", "kitchen"), 0))
    with pytest.raises(Contradiction) as exc:
        update_belief(b, Statement(Negation("mary", "kitchen"), 1))
    assert exc.value.index == 1


def test_negation_prunes_possibilities(world):
    # Frozen from exhaustive enumeration: project survivors of the negation.
    b = update_belief(BeliefState(world), Statement(Negation("mary", "kitchen"), 0))
    assert b.agent_possible("mary") == {"garden", "office"}
    sets = prefix_state_sets(world, [Statement(Negation("mary", "kitchen"), 0)])
    assert {s.agent_location["mary"] for s in sets[1]} == {"garden", "office"}


def test_label_unknown_true_false(world):
    b = BeliefState(world)
    assert label(b, At("mary", "kitchen")) is Label.UNKNOWN
    b = update_belief(b, Statement(Move("mary", "kitchen"), 0))
    assert label(b, At("mary", "kitchen")) is Label.TRUE
    b = update_belief(b, Statement(Move("mary", "garden"), 1))
    # Frozen from brute force: kitchen now excluded, office never mentioned.
    assert label(b, At("mary", "kitchen")) is Label.FALSE
    assert label(b, At("mary", "office")) is Label.FALSE
    assert label(b, At("john", "office")) is Label.UNKNOWN


def test_update_is_pure(world):
    b0 = BeliefState(world)
    b1 = update_belief(b0, Statement(Move("mary", "kitchen"), 0))
    assert b0.agent_possible("mary") == {"kitchen", "garden", "office"}
    assert b1.agent_possible("mary") == {"kitchen"}


def test_grab_unifies_agent_and_object(world):
    b = update_belief(BeliefState(world), Statement(Move("mary", "kitchen"), 0))
    b = update_belief(b, Statement(Grab("mary", "apple"), 1))
    assert b.label(Holds("mary", "apple")) is Label.TRUE
    assert b.label(ObjAt("apple", "kitchen")) is Label.TRUE
    assert b.provenance("apple") == {0, 1}


def test_drop_aliases_to_carrier_location_variable(world):
    stmts = [
        Statement(Grab("mary", "apple"), 0),
        Statement(Drop("mary", "apple"), 1),
        Statement(LocationFact("mary", "kitchen"), 2),
    ]
    b = BeliefState(world)
    for s in stmts:
        b = update_belief(b, s)
    # Later evidence about the dropper pins the dropped object too.
    assert b.label(ObjAt("apple", "kitchen")) is Label.TRUE
    assert oracle_label(world, prefix_state_sets(world, stmts)[3], ObjAt("apple", "kitchen")) is Label.TRUE


def test_move_departure_prunes_aliased_objects(world):
    stmts = [
        Statement(Grab("mary", "apple"), 0),
        Statement(Drop("mary", "apple"), 1),
        Statement(Move("mary", "garden"), 2),
    ]
    b = BeliefState(world)
    for s in stmts:
        b = update_belief(b, s)
    # She left where she dropped it, so the apple is not in the garden.
    assert b.label(ObjAt("apple", "garden")) is Label.FALSE
    assert b.object_possible("apple") == {"kitchen", "office"}


def test_give_requires_possible_colocation(world):
    b = update_belief(BeliefState(world), Statement(Move("mary", "kitchen"), 0))
    b = update_belief(b, Statement(Grab("mary", "apple"), 1))
    b = update_belief(b, Statement(Move("john", "garden"), 2))
    with pytest.raises(Contradiction):
        update_belief(b, Statement(Give("mary", "john", "apple"), 3))


def test_drop_without_possession_contradicts(world):
    with pytest.raises(Contradiction):
        update_belief(BeliefState(world), Statement(Drop("mary", "apple"), 0))


@given(seed=st.integers(0, 100_000))
@settings(max_examples=80, deadline=None)
def test_soundness_and_oracle_equivalence(seed):
    """Ground truth stays possible, and every label matches enumeration."""
    world = World(["mary", "john"], ["kitchen", "garden", "office"], ["apple"])
    rng = random.Random(seed)
    state = WorldState(
        {a: rng.choice(world.locations) for a in world.agents},
        {o: rng.choice(world.locations) for o in world.objects},
    )
    statements = random_legal_statements(world, state, 12, seed)
    sets = prefix_state_sets(world, statements)
    belief = BeliefState(world)
    truth = state
    props = [At(a, l) for a in world.agents for l in world.locations]
    props += [Holds(a, o) for a in world.agents for o in world.objects]
    props += [ObjAt(o, l) for o in world.objects for l in world.locations]
    for t, stmt in enumerate(statements):
        truth = world.apply_statement(truth, stmt)
        belief = update_belief(belief, stmt)
        assert truth.agent_location["mary"] in belief.agent_possible("mary")
        place = truth.object_place["apple"]
        assert place in belief.object_possible("apple") or (
            isinstance(place, Carry) and belief.carrier_of("apple") == place.agent
        )
        for p in props:
            got = belief.label(p)
            want = oracle_label(world, sets[t + 1], p)
            assert got is want, (t, p, got, want)
            if got is Label.TRUE:
                assert world.holds(truth, p)
            if got is Label.FALSE:
                assert not world.holds(truth, p)


@given(seed=st.integers(0, 100_000))
@settings(max_examples=40, deadline=None)
def test_locality_dependency_cone(seed):
    """Possibility sets change only for entities in the statement's cone:
    mentioned entities, objects carried by mentioned agents, and entities
    whose location variable is shared with a mentioned agent's."""
    world = World(["mary", "john"], ["kitchen", "garden", "office"], ["apple", "ball"])
    rng = random.Random(seed)
    state = WorldState(
        {a: rng.choice(world.locations) for a in world.agents},
        {o: rng.choice(world.locations) for o in world.objects},
    )
    statements = random_legal_statements(world, state, 12, seed)
    belief = BeliefState(world)
    entities = world.agents + world.objects
    for stmt in statements:
        before = {e: belief.object_possible(e) if e in world.objects else belief.agent_possible(e) for e in entities}
        mentioned = set(statement_entities(stmt.event))
        cone = set(mentioned)
        for o in world.objects:
            carrier = belief.carrier_of(o)
            if carrier in mentioned:
                cone.add(o)
        for e in entities:
            shared = _shares_variable(belief, e, mentioned, world)
            if shared:
                cone.add(e)
        belief = update_belief(belief, stmt)
        for e in entities:
            after = belief.object_possible(e) if e in world.objects else belief.agent_possible(e)
            if before[e] != after:
                assert e in cone, (stmt, e, before[e], after)


def _shares_variable(belief, entity, mentioned, world):
    def root_of(name):
        if name in world.objects:
            st_ = belief._obj.get(name)
            if st_ is None or isinstance(st_, Carry):
                return None
            return belief._find(st_)
        var = belief._agent_var.get(name)
        return None if var is None else belief._find(var)

    mine = root_of(entity)
    if mine is None:
        return False
    for m in mentioned:
        if m in world.locations or m == entity:
            continue
        if root_of(m) == mine:
            return True
        if m in world.agents:
            for o in world.objects:
                if belief.carrier_of(o) == m and root_of(o) == mine:
                    return True
    return False
