"""Interactive annotation sessions: live worlds, command traces, exports.

A session pairs a procedural source text (numbered segments) with a world
the annotator acts in.  Commands parse through the shared grammar, run
through the engine, and append to an immutable trace; illegal or unparsable
commands leave the state untouched and come back with legal-action hints.
Sessions persist as append-only JSON Lines event logs, recoverable by
replay (the engine is deterministic, so digests re-derive exactly).
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
import uuid
from dataclasses import dataclass, field

from . import language
from .world import (
    ACTION_TYPES,
    Carry,
    PreconditionViolation,
    Statement,
    TAG_VARIANTS,
    World,
    WorldState,
    proposition_from_str,
    proposition_to_str,
    variant_tag,
)


class SessionError(Exception):
    pass


class SessionNotFound(SessionError):
    pass


class InvalidConfig(SessionError):
    pass


def state_digest(state: WorldState) -> str:
    blob = json.dumps(state.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class SessionConfig:
    world: World
    initial: WorldState
    acting_agent: str
    segments: list
    goal: tuple = ()

    def __post_init__(self):
        try:
            self.world.validate_state(self.initial)
        except Exception as e:
            raise InvalidConfig(str(e)) from None
        if self.acting_agent not in self.world.agents:
            raise InvalidConfig(f"acting agent {self.acting_agent!r} not declared")
        if not self.segments:
            raise InvalidConfig("source text must have at least one segment")
        for prop in self.goal:
            for name in _prop_names(prop):
                if name not in self.world.kind:
                    raise InvalidConfig(f"goal references unknown entity {name!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "SessionConfig":
        try:
            world = World.from_dict(d["world"])
            initial = WorldState.from_dict(d["initial"])
            segments = d.get("segments")
            if segments is None:
                text = d.get("source_text", "")
                segments = [s.strip() for s in text.splitlines() if s.strip()]
            goal = tuple(proposition_from_str(p) for p in d.get("goal", ()))
            return cls(
                world=world,
                initial=initial,
                acting_agent=d["acting_agent"],
                segments=list(segments),
                goal=goal,
            )
        except InvalidConfig:
            raise
        except Exception as e:
            raise InvalidConfig(f"bad session config: {e}") from None

    def to_dict(self) -> dict:
        return {
            "world": self.world.to_dict(),
            "initial": self.initial.to_dict(),
            "acting_agent": self.acting_agent,
            "segments": list(self.segments),
            "goal": [proposition_to_str(p) for p in self.goal],
        }


def _prop_names(prop):
    from .world import proposition_entities

    return proposition_entities(prop)


@dataclass
class TraceStep:
    index: int
    command: str
    action: object
    pre_digest: str
    post_digest: str
    segment: int | None
    timestamp: float
    # Parsed statement kept for pronoun context of the next command.
    action_statement: object = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "command": self.command,
            "action": action_to_dict(self.action),
            "pre_digest": self.pre_digest,
            "post_digest": self.post_digest,
            "segment": self.segment,
            "timestamp": self.timestamp,
        }


def action_to_dict(action) -> dict:
    return {"variant": variant_tag(action), **language.event_binding(action)}


def action_from_dict(d: dict):
    binding = {k: v for k, v in d.items() if k != "variant"}
    return language.event_from_binding(d["variant"], binding)


def program_line(action) -> str:
    """Canonical replayable form: ``move(mary, garden)`` style."""
    tag = variant_tag(action)
    args = language.event_binding(action)
    ordered = [args[s] for s in language.VARIANT_SLOTS[tag] if s in args]
    return f"{tag}({', '.join(ordered)})"


_PROGRAM_RE = re.compile(r"\s*([a-z_]+)\s*\(([^)]*)\)\s*$")


def parse_program_line(line: str):
    m = _PROGRAM_RE.match(line)
    if not m:
        raise ValueError(f"bad program line {line!r}")
    tag, arglist = m.group(1), m.group(2)
    if tag not in TAG_VARIANTS:
        raise ValueError(f"unknown action {tag!r} in program line {line!r}")
    args = [a.strip() for a in arglist.split(",") if a.strip()]
    slots = language.VARIANT_SLOTS[tag]
    if len(args) != len(slots):
        raise ValueError(f"{tag} takes {len(slots)} arguments, got {len(args)}")
    return language.event_from_binding(tag, dict(zip(slots, args)))


class Session:
    """One live annotation run; commands execute strictly in order."""

    def __init__(self, session_id: str, config: SessionConfig):
        self.id = session_id
        self.config = config
        self.state = config.initial
        self.steps = []
        self.lexicon = _session_lexicon(config.world)

    # -- observations --

    def summary(self) -> str:
        agent = self.config.acting_agent
        here = self.state.agent_location[agent]
        world = self.config.world
        others = [
            a
            for a in world.agents
            if a != agent and self.state.agent_location[a] == here
        ]
        visible = [
            o for o in world.objects if self.state.object_place[o] == here
        ]
        carrying = [
            o
            for o in world.objects
            if self.state.object_place[o] == Carry(agent)
        ]
        parts = [f"You are {agent}. You are in the {here}."]
        if others:
            parts.append("Also here: " + ", ".join(others) + ".")
        if visible:
            parts.append("You see: " + ", ".join(visible) + ".")
        if carrying:
            parts.append("You are carrying: " + ", ".join(carrying) + ".")
        return " ".join(parts)

    def goal_reached(self) -> bool:
        goal = self.config.goal
        if not goal:
            return False
        return all(self.config.world.holds(self.state, p) for p in goal)

    def legal_commands(self, limit: int = 10) -> list:
        actions = self.config.world.legal_actions(self.state)
        acting = self.config.acting_agent
        # Prefer the acting agent's own actions in the hint list.
        actions.sort(key=lambda a: (a.agent != acting, program_line(a)))
        return [language.command_text(a, self.lexicon) for a in actions[:limit]]

    # -- command execution --

    def execute(self, text: str, segment: int | None = None) -> dict:
        """Parse, check, apply, record.  State is untouched on any error."""
        world = self.config.world
        parsed = language.parse_sentence(
            text,
            self.lexicon,
            world,
            coref_context=self.steps[-1].action_statement if self.steps else None,
            acting_agent=self.config.acting_agent,
            index=len(self.steps),
        )
        if not isinstance(parsed, Statement) or not isinstance(
            parsed.event, ACTION_TYPES
        ):
            raise language.ParseError(text, 0, "an executable action command")
        action = parsed.event
        if segment is not None and not (0 <= segment < len(self.config.segments)):
            raise InvalidConfig(f"segment {segment} out of range")
        pre = self.state
        new_state = world.apply_statement(pre, parsed)  # raises PreconditionViolation
        step = TraceStep(
            index=len(self.steps),
            command=text,
            action=action,
            pre_digest=state_digest(pre),
            post_digest=state_digest(new_state),
            segment=segment,
            timestamp=time.time(),
        )
        step.action_statement = parsed
        self.state = new_state
        self.steps.append(step)
        delta = _state_delta(pre, new_state)
        observation = language.render(
            parsed, self.lexicon, rng_seed=step.index
        ).text
        return {
            "step": step.index,
            "observation": observation,
            "summary": self.summary(),
            "delta": delta,
            "goal_reached": self.goal_reached(),
        }

    # -- exports --

    def export(self, fmt: str):
        if fmt == "trace-jsonl":
            return [json.dumps(s.to_dict(), separators=(",", ":")) for s in self.steps]
        if fmt == "action-graph":
            return action_graph(self)
        if fmt == "program":
            return "".join(program_line(s.action) + "\n" for s in self.steps)
        raise ValueError(f"unknown export format {fmt!r}")


def _state_delta(pre: WorldState, post: WorldState) -> dict:
    agents = {
        a: l for a, l in post.agent_location.items() if pre.agent_location[a] != l
    }
    places = {}
    for o, p in post.object_place.items():
        if pre.object_place[o] != p:
            places[o] = p if isinstance(p, str) else {"carried_by": p.agent}
    return {"agent_location": agents, "object_place": places}


def action_graph(session: Session) -> dict:
    """Nodes for every entity and every action; argument and temporal edges."""
    world = session.config.world
    nodes = [
        {"id": name, "kind": "entity", "entity_kind": world.kind[name]}
        for name in world.agents + world.locations + world.objects
    ]
    edges = []
    for step in session.steps:
        node_id = f"a{step.index}"
        nodes.append(
            {
                "id": node_id,
                "kind": "action",
                "label": variant_tag(step.action),
                "step": step.index,
            }
        )
        binding = language.event_binding(step.action)
        role_by_slot = {
            "agent": "agent",
            "agent2": "recipient" if variant_tag(step.action) == "give" else "companion",
            "object": "object",
            "location": "location",
        }
        for slot, entity in binding.items():
            edges.append({"from": node_id, "to": entity, "role": role_by_slot[slot]})
        if step.index > 0:
            edges.append({"from": f"a{step.index - 1}", "to": node_id, "role": "next"})
    return {"nodes": nodes, "edges": edges}


def actions_from_graph(graph: dict) -> list:
    """Invert an action graph back to the ordered action list."""
    action_nodes = {
        n["id"]: n for n in graph["nodes"] if n.get("kind") == "action"
    }
    successors = {}
    has_pred = set()
    arg_edges = {}
    for e in graph["edges"]:
        if e["role"] == "next":
            successors[e["from"]] = e["to"]
            has_pred.add(e["to"])
        else:
            arg_edges.setdefault(e["from"], {})[e["role"]] = e["to"]
    if not action_nodes:
        return []
    starts = [nid for nid in action_nodes if nid not in has_pred]
    if len(starts) != 1:
        raise ValueError("temporal edges do not form a single chain")
    order = [starts[0]]
    while order[-1] in successors:
        order.append(successors[order[-1]])
    if len(order) != len(action_nodes):
        raise ValueError("temporal chain does not cover all actions")
    actions = []
    for nid in order:
        node = action_nodes[nid]
        tag = node["label"]
        roles = arg_edges.get(nid, {})
        binding = {}
        for slot in language.VARIANT_SLOTS[tag]:
            role = {
                "agent": "agent",
                "agent2": "recipient" if tag == "give" else "companion",
                "object": "object",
                "location": "location",
            }[slot]
            binding[slot] = roles[role]
        actions.append(language.event_from_binding(tag, binding))
    return actions


def replay_program(world: World, initial: WorldState, lines) -> WorldState:
    """Run a program export from a fresh state; raises on the failing line."""
    state = initial
    for k, line in enumerate(lines):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        action = parse_program_line(line)
        try:
            state = world.apply_event(state, action)
        except PreconditionViolation as e:
            raise PreconditionViolation(
                f"line {k + 1}: {line}", e.reason
            ) from None
    return state


_LEXICON_BY_WORLD = {}


def _session_lexicon(world: World):
    key = world.agents
    lex = _LEXICON_BY_WORLD.get(key)
    if lex is None:
        pronouns = {
            a: language.pronoun_for(a, i) for i, a in enumerate(world.agents)
        }
        lex = language.Lexicon(pronouns=pronouns)
        _LEXICON_BY_WORLD[key] = lex
    return lex


class SessionStore:
    """Sessions by id, with optional append-only JSONL persistence."""

    def __init__(self, data_dir: str | None = None):
        self.data_dir = data_dir
        if data_dir:
            os.makedirs(data_dir, exist_ok=True)
        self._sessions = {}

    def _log_path(self, session_id: str) -> str:
        return os.path.join(self.data_dir, f"{session_id}.jsonl")

    def _append_event(self, session_id: str, event: dict) -> None:
        if not self.data_dir:
            return
        with open(self._log_path(session_id), "a", newline="\n") as f:
            f.write(json.dumps(event, separators=(",", ":")))
            f.write("\n")

    def create(self, config: SessionConfig, session_id: str | None = None) -> Session:
        session_id = session_id or uuid.uuid4().hex[:12]
        if session_id in self._sessions:
            raise InvalidConfig(f"session id {session_id!r} already exists")
        session = Session(session_id, config)
        self._sessions[session_id] = session
        self._append_event(
            session_id,
            {"type": "created", "id": session_id, "config": config.to_dict()},
        )
        return session

    def get(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            session = self._recover(session_id)
        if session is None:
            raise SessionNotFound(session_id)
        return session

    def execute(self, session_id: str, text: str, segment: int | None = None) -> dict:
        session = self.get(session_id)
        result = session.execute(text, segment)
        step = session.steps[-1]
        self._append_event(
            session_id,
            {
                "type": "step",
                "command": text,
                "segment": segment,
                "timestamp": step.timestamp,
            },
        )
        return result

    def _recover(self, session_id: str):
        """Rebuild a session from its event log by replaying commands."""
        if not self.data_dir:
            return None
        path = self._log_path(session_id)
        if not os.path.exists(path):
            return None
        session = None
        with open(path) as f:
            for line in f:
                if not line.strip():
                    continue
                event = json.loads(line)
                if event["type"] == "created":
                    config = SessionConfig.from_dict(event["config"])
                    session = Session(session_id, config)
                elif event["type"] == "step" and session is not None:
                    session.execute(event["command"], event.get("segment"))
                    session.steps[-1].timestamp = event.get("timestamp", 0.0)
        if session is not None:
            self._sessions[session_id] = session
        return session
