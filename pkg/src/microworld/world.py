"""Ground-truth micro-world: entities, total states, events, and transition semantics.

A world declares agents, locations, and objects.  A state is a total
assignment of agents to locations and objects to either a location or a
carrying agent.  Statements are the atomic narrative units: actions (which
transition the state) and location facts / negations (which observe it).
All operations are pure; states are treated as immutable values.
"""

from __future__ import annotations

import re
from collections import namedtuple
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Union

NAME_RE = re.compile(r"[a-z][a-z0-9_]*$")

# Place of a carried object; locations are plain strings.
Carry = namedtuple("Carry", "agent")


class WorldError(Exception):
    """Base for all engine errors."""


class InvalidWorld(WorldError):
    """Malformed declaration or state: bad names, duplicates, partial maps."""


class PreconditionViolation(WorldError):
    """An action or fact whose precondition fails in the given state."""

    def __init__(self, statement, reason: str):
        super().__init__(f"{reason}: {statement}")
        self.statement = statement
        self.reason = reason


@dataclass(frozen=True, slots=True)
class Move:
    agent: str
    location: str


@dataclass(frozen=True, slots=True)
class CoMove:
    agent: str
    agent2: str
    location: str


@dataclass(frozen=True, slots=True)
class Grab:
    agent: str
    obj: str


@dataclass(frozen=True, slots=True)
class Drop:
    agent: str
    obj: str


@dataclass(frozen=True, slots=True)
class Give:
    agent: str
    agent2: str
    obj: str


Action = Union[Move, CoMove, Grab, Drop, Give]


@dataclass(frozen=True, slots=True)
class LocationFact:
    agent: str
    location: str


@dataclass(frozen=True, slots=True)
class Negation:
    agent: str
    location: str


Event = Union[Action, LocationFact, Negation]

ACTION_TYPES = (Move, CoMove, Grab, Drop, Give)

VARIANT_TAGS = {
    Move: "move",
    CoMove: "comove",
    Grab: "grab",
    Drop: "drop",
    Give: "give",
    LocationFact: "location_fact",
    Negation: "negation",
}
TAG_VARIANTS = {tag: cls for cls, tag in VARIANT_TAGS.items()}


def variant_tag(event: Event) -> str:
    return VARIANT_TAGS[type(event)]


@dataclass(frozen=True, slots=True)
class Statement:
    """One narrative unit: an event plus its position in the story.

    ``coref`` marks statements whose agent slot may be rendered as a
    pronoun (resolved against the previous sentence's subject).
    """

    event: Event
    index: int = 0
    coref: bool = False


@dataclass(frozen=True, slots=True)
class At:
    agent: str
    location: str


@dataclass(frozen=True, slots=True)
class Holds:
    agent: str
    obj: str


@dataclass(frozen=True, slots=True)
class ObjAt:
    obj: str
    location: str


Proposition = Union[At, Holds, ObjAt]


class Label(Enum):
    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"

    @property
    def code(self) -> str:
        return {"true": "T", "false": "F", "unknown": "U"}[self.value]

    @classmethod
    def from_code(cls, code: str) -> "Label":
        try:
            return {"T": cls.TRUE, "F": cls.FALSE, "U": cls.UNKNOWN}[code]
        except KeyError:
            raise ValueError(f"unknown label code {code!r}") from None


@dataclass(frozen=True)
class WorldState:
    """Total ground-truth assignment: every agent and object is mapped."""

    agent_location: dict
    object_place: dict

    def derived_location(self, obj: str) -> str:
        """Location of an object, following its carrier if carried."""
        place = self.object_place[obj]
        if type(place) is Carry:
            return self.agent_location[place.agent]
        return place

    def canonical(self) -> tuple:
        return (
            tuple(sorted(self.agent_location.items())),
            tuple(
                sorted(
                    (o, p if isinstance(p, str) else "carried_by:" + p.agent)
                    for o, p in self.object_place.items()
                )
            ),
        )

    def __hash__(self):
        return hash(self.canonical())

    def to_dict(self) -> dict:
        return {
            "agent_location": dict(sorted(self.agent_location.items())),
            "object_place": {
                o: (p if isinstance(p, str) else {"carried_by": p.agent})
                for o, p in sorted(self.object_place.items())
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorldState":
        places = {}
        for o, p in d["object_place"].items():
            places[o] = p if isinstance(p, str) else Carry(p["carried_by"])
        return cls(dict(d["agent_location"]), places)


class World:
    """Declared entities and the transition/observation semantics over them."""

    def __init__(self, agents, locations, objects=()):
        self.agents = tuple(agents)
        self.locations = tuple(locations)
        self.objects = tuple(objects)
        names = self.agents + self.locations + self.objects
        seen = set()
        for name in names:
            if not NAME_RE.match(name):
                raise InvalidWorld(f"entity name must be a lowercase token: {name!r}")
            if name in seen:
                raise InvalidWorld(f"duplicate entity name: {name!r}")
            seen.add(name)
        if not self.agents or not self.locations:
            raise InvalidWorld("a world needs at least one agent and one location")
        self.kind = {}
        for a in self.agents:
            self.kind[a] = "agent"
        for l in self.locations:
            self.kind[l] = "location"
        for o in self.objects:
            self.kind[o] = "object"
        self._location_set = frozenset(self.locations)

    def validate_state(self, state: WorldState) -> None:
        if set(state.agent_location) != set(self.agents):
            raise InvalidWorld("agent_location must map exactly the declared agents")
        if set(state.object_place) != set(self.objects):
            raise InvalidWorld("object_place must map exactly the declared objects")
        for a, l in state.agent_location.items():
            if l not in self._location_set:
                raise InvalidWorld(f"agent {a} at undeclared location {l!r}")
        for o, p in state.object_place.items():
            if isinstance(p, str):
                if p not in self._location_set:
                    raise InvalidWorld(f"object {o} at undeclared location {p!r}")
            elif p.agent not in state.agent_location:
                raise InvalidWorld(f"object {o} carried by undeclared agent {p.agent!r}")

    def check_event(self, state: WorldState, event: Event):
        """Return None if the event's precondition holds in state, else a reason."""
        t = type(event)
        if t is Move:
            if event.location not in self._location_set:
                return f"unknown location {event.location!r}"
            if state.agent_location[event.agent] == event.location:
                return f"{event.agent} is already in the {event.location}"
        elif t is CoMove:
            if event.location not in self._location_set:
                return f"unknown location {event.location!r}"
            if event.agent == event.agent2:
                return "the two agents of a joint move must be distinct"
            for a in (event.agent, event.agent2):
                if state.agent_location[a] == event.location:
                    return f"{a} is already in the {event.location}"
        elif t is Grab:
            place = state.object_place[event.obj]
            if type(place) is Carry:
                return f"the {event.obj} is already carried by {place.agent}"
            if place != state.agent_location[event.agent]:
                return f"the {event.obj} is not where {event.agent} is"
        elif t is Drop:
            if state.object_place[event.obj] != Carry(event.agent):
                return f"{event.agent} is not carrying the {event.obj}"
        elif t is Give:
            if event.agent == event.agent2:
                return "giver and receiver must be distinct"
            if state.object_place[event.obj] != Carry(event.agent):
                return f"{event.agent} is not carrying the {event.obj}"
            if state.agent_location[event.agent] != state.agent_location[event.agent2]:
                return f"{event.agent} and {event.agent2} are not in the same place"
        elif t is LocationFact:
            if state.agent_location[event.agent] != event.location:
                return f"{event.agent} is not in the {event.location}"
        elif t is Negation:
            if state.agent_location[event.agent] == event.location:
                return f"{event.agent} is in the {event.location}"
        else:
            raise TypeError(f"not an event: {event!r}")
        return None

    def apply_event(self, state: WorldState, event: Event) -> WorldState:
        reason = self.check_event(state, event)
        if reason is not None:
            raise PreconditionViolation(event, reason)
        t = type(event)
        if t is Move:
            agents = dict(state.agent_location)
            agents[event.agent] = event.location
            return WorldState(agents, state.object_place)
        if t is CoMove:
            agents = dict(state.agent_location)
            agents[event.agent] = event.location
            agents[event.agent2] = event.location
            return WorldState(agents, state.object_place)
        if t is Grab:
            places = dict(state.object_place)
            places[event.obj] = Carry(event.agent)
            return WorldState(state.agent_location, places)
        if t is Drop:
            places = dict(state.object_place)
            places[event.obj] = state.agent_location[event.agent]
            return WorldState(state.agent_location, places)
        if t is Give:
            places = dict(state.object_place)
            places[event.obj] = Carry(event.agent2)
            return WorldState(state.agent_location, places)
        # Facts observe the state and leave it unchanged.
        return state

    def apply_statement(self, state: WorldState, stmt: Statement) -> WorldState:
        try:
            return self.apply_event(state, stmt.event)
        except PreconditionViolation as e:
            raise PreconditionViolation(stmt, e.reason) from None

    def legal_actions(self, state: WorldState) -> list:
        """All actions whose preconditions hold, in a fixed canonical order."""
        out = []
        agent_location = state.agent_location
        object_place = state.object_place
        for a in self.agents:
            here = agent_location[a]
            for l in self.locations:
                if l != here:
                    out.append(Move(a, l))
        for a in self.agents:
            for b in self.agents:
                if b == a:
                    continue
                for l in self.locations:
                    if agent_location[a] != l and agent_location[b] != l:
                        out.append(CoMove(a, b, l))
        for a in self.agents:
            here = agent_location[a]
            for o in self.objects:
                if object_place[o] == here:
                    out.append(Grab(a, o))
        for o in self.objects:
            place = object_place[o]
            if type(place) is Carry:
                out.append(Drop(place.agent, o))
        for o in self.objects:
            place = object_place[o]
            if type(place) is Carry:
                g = place.agent
                here = agent_location[g]
                for r in self.agents:
                    if r != g and agent_location[r] == here:
                        out.append(Give(g, r, o))
        return out

    def holds(self, state: WorldState, prop: Proposition) -> bool:
        t = type(prop)
        if t is At:
            return state.agent_location[prop.agent] == prop.location
        if t is Holds:
            return state.object_place[prop.obj] == Carry(prop.agent)
        if t is ObjAt:
            return state.derived_location(prop.obj) == prop.location
        raise TypeError(f"not a proposition: {prop!r}")

    def initial_states(self) -> Iterator[WorldState]:
        """All total initial states; objects start uncarried at a location."""
        import itertools

        for agent_locs in itertools.product(self.locations, repeat=len(self.agents)):
            agents = dict(zip(self.agents, agent_locs))
            if not self.objects:
                yield WorldState(agents, {})
                continue
            for obj_locs in itertools.product(self.locations, repeat=len(self.objects)):
                yield WorldState(agents, dict(zip(self.objects, obj_locs)))

    def to_dict(self) -> dict:
        return {
            "agents": list(self.agents),
            "locations": list(self.locations),
            "objects": list(self.objects),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "World":
        return cls(d["agents"], d["locations"], d.get("objects", ()))


def statement_entities(event: Event) -> tuple:
    """Entities named by an event, in slot order."""
    t = type(event)
    if t is Move:
        return (event.agent, event.location)
    if t is CoMove:
        return (event.agent, event.agent2, event.location)
    if t is Grab or t is Drop:
        return (event.agent, event.obj)
    if t is Give:
        return (event.agent, event.agent2, event.obj)
    return (event.agent, event.location)


def proposition_entities(prop: Proposition) -> tuple:
    t = type(prop)
    if t is At:
        return (prop.agent, prop.location)
    if t is Holds:
        return (prop.agent, prop.obj)
    return (prop.obj, prop.location)


def proposition_to_str(prop: Proposition) -> str:
    t = type(prop)
    if t is At:
        return f"at({prop.agent},{prop.location})"
    if t is Holds:
        return f"holds({prop.agent},{prop.obj})"
    if t is ObjAt:
        return f"obj_at({prop.obj},{prop.location})"
    raise TypeError(f"not a proposition: {prop!r}")


def proposition_from_str(s: str) -> Proposition:
    name, _, args = s.strip().partition("(")
    parts = [p.strip() for p in args.rstrip(")").split(",")]
    if len(parts) != 2:
        raise ValueError(f"bad proposition {s!r}")
    a, b = parts
    if name == "at":
        return At(a, b)
    if name == "holds":
        return Holds(a, b)
    if name == "obj_at":
        return ObjAt(a, b)
    raise ValueError(f"bad proposition {s!r}")
