"""Brute-force enumeration over initial worlds: the independent correctness oracle.

Enumerates every total initial state (objects uncarried), runs the statement
sequence against each, and keeps the survivors.  Deliberately naive: it
shares the transition semantics with the engine but knows nothing about the
belief tracker, so label and answer checks against it are a real dual route.
Only usable on small instances; see :class:`EnumerationBound`.
"""

from __future__ import annotations

from dataclasses import dataclass

from .world import (
    Carry,
    Label,
    PreconditionViolation,
    World,
    WorldError,
    WorldState,
)


class InstanceTooLarge(WorldError):
    """The instance exceeds the configured enumeration bound."""


@dataclass(frozen=True)
class EnumerationBound:
    """Caps keeping exhaustive enumeration tractable (~1s per story)."""

    agents: int = 4
    locations: int = 6
    objects: int = 4
    statements: int = 70

    def check(self, world: World, n_statements: int) -> None:
        if (
            len(world.agents) > self.agents
            or len(world.locations) > self.locations
            or len(world.objects) > self.objects
            or n_statements > self.statements
        ):
            raise InstanceTooLarge(
                f"instance ({len(world.agents)} agents, {len(world.locations)} "
                f"locations, {len(world.objects)} objects, {n_statements} "
                f"statements) exceeds bound {self}"
            )


DEFAULT_BOUND = EnumerationBound()


def enumerate_worlds(world: World, statements, bound: EnumerationBound = DEFAULT_BOUND):
    """All statement-consistent trajectories from all total initial states.

    Each trajectory lists len(statements)+1 states (initial plus one per
    statement).  Empty result means the story is inconsistent.
    """
    statements = list(statements)
    bound.check(world, len(statements))
    trajectories = []
    for s0 in world.initial_states():
        traj = [s0]
        state = s0
        alive = True
        for stmt in statements:
            try:
                state = world.apply_event(state, stmt.event)
            except PreconditionViolation:
                alive = False
                break
            traj.append(state)
        if alive:
            trajectories.append(traj)
    return trajectories


def prefix_state_sets(world: World, statements, bound: EnumerationBound = DEFAULT_BOUND):
    """Surviving current states after each prefix; entry t covers statements[:t].

    Equivalent to projecting enumerate_worlds of every prefix onto its last
    state, computed in one forward pass.
    """
    statements = list(statements)
    bound.check(world, len(statements))
    current = list(world.initial_states())
    sets = [current]
    for stmt in statements:
        survivors = []
        for state in current:
            try:
                survivors.append(world.apply_event(state, stmt.event))
            except PreconditionViolation:
                pass
        sets.append(survivors)
        current = survivors
    return sets


def oracle_label(world: World, states, prop) -> Label:
    """Quantified truth of prop over a non-empty set of possible states."""
    if not states:
        raise WorldError("label undefined for an inconsistent story prefix")
    count = sum(1 for s in states if world.holds(s, prop))
    if count == len(states):
        return Label.TRUE
    if count == 0:
        return Label.FALSE
    return Label.UNKNOWN


def unique_value(values) -> object:
    """The single element of values, or None when ambiguous."""
    it = iter(values)
    first = next(it)
    for v in it:
        if v != first:
            return None
    return first


def oracle_where_agent(states, agent: str):
    """Agent's location if identical across all possible states, else None."""
    return unique_value(s.agent_location[agent] for s in states)


def oracle_where_object(states, obj: str):
    return unique_value(s.derived_location(obj) for s in states)


def oracle_carried(states, agent: str):
    """Set of objects carried by the agent (identical across states), else None."""
    return unique_value(
        frozenset(o for o, p in s.object_place.items() if p == Carry(agent))
        for s in states
    )


def state_projections(world: World, states) -> tuple:
    """Per-entity value sets across possible states, for bulk label checks.

    Returns (agent -> set of locations, obj -> set of derived locations,
    obj -> set of carriers or None).  One pass over the states instead of
    one per proposition; semantics identical to oracle_label.
    """
    agent_locs = {a: set() for a in world.agents}
    obj_locs = {o: set() for o in world.objects}
    obj_carrier = {o: set() for o in world.objects}
    for s in states:
        for a, l in s.agent_location.items():
            agent_locs[a].add(l)
        for o, p in s.object_place.items():
            if type(p) is Carry:
                obj_carrier[o].add(p.agent)
                obj_locs[o].add(s.agent_location[p.agent])
            else:
                obj_carrier[o].add(None)
                obj_locs[o].add(p)
    return agent_locs, obj_locs, obj_carrier


def oracle_label_from_projections(projections, prop) -> Label:
    from .world import At, Holds, ObjAt

    agent_locs, obj_locs, obj_carrier = projections
    t = type(prop)
    if t is At:
        values, target = agent_locs[prop.agent], prop.location
    elif t is ObjAt:
        values, target = obj_locs[prop.obj], prop.location
    elif t is Holds:
        values, target = obj_carrier[prop.obj], prop.agent
    else:
        raise TypeError(f"not a proposition: {prop!r}")
    if target not in values:
        return Label.FALSE
    if len(values) == 1:
        return Label.TRUE
    return Label.UNKNOWN
