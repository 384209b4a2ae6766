"""Surface layer: template rendering of statements/questions and its inverse.

One grammar serves three surfaces: declarative narration ("Mary picked up
the apple."), question text ("Where is Mary?"), and imperative session
commands ("pick up the apple", agent implied).  Rendering records character
spans per slot; parsing is the exact inverse on the template grammar, with
pronouns resolved against the previous sentence's single subject.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field

from .world import (
    ACTION_TYPES,
    CoMove,
    Drop,
    Give,
    Grab,
    LocationFact,
    Move,
    Negation,
    Statement,
    TAG_VARIANTS,
    World,
    variant_tag,
)


class LanguageError(Exception):
    pass


class MissingTemplate(LanguageError):
    pass


class ParseError(LanguageError):
    def __init__(self, text: str, position: int, expected: str):
        super().__init__(f"cannot parse {text!r} at {position}: expected {expected}")
        self.position = position
        self.expected = expected


class UnknownEntity(LanguageError):
    def __init__(self, token: str):
        super().__init__(f"unknown entity {token!r}")
        self.token = token


class UnresolvedPronoun(LanguageError):
    def __init__(self, token: str):
        super().__init__(f"cannot resolve pronoun {token!r}")
        self.token = token


# Slot inventories per statement variant, in rendering order of the fields.
VARIANT_SLOTS = {
    "move": ("agent", "location"),
    "comove": ("agent", "agent2", "location"),
    "grab": ("agent", "object"),
    "drop": ("agent", "object"),
    "give": ("agent", "agent2", "object"),
    "location_fact": ("agent", "location"),
    "negation": ("agent", "location"),
}

QUESTION_SLOTS = {
    "where_agent": ("agent",),
    "where_object": ("object",),
    "counting": ("agent",),
    "list": ("agent",),
    "yes_no": ("agent", "location"),
}

SLOT_KIND = {"agent": "agent", "agent2": "agent", "object": "object", "location": "location"}

_SLOT_RE = re.compile(r"\{(agent2|agent|object|location)\}")
_TOKEN = r"[A-Za-z][A-Za-z0-9_]*"

DEFAULT_TEMPLATES = {
    "move": [
        "{agent} travelled to the {location}.",
        "{agent} went to the {location}.",
        "{agent} journeyed to the {location}.",
    ],
    "comove": [
        "{agent} and {agent2} travelled to the {location}.",
        "{agent} and {agent2} went to the {location}.",
        "{agent} and {agent2} journeyed to the {location}.",
    ],
    "grab": [
        "{agent} picked up the {object}.",
        "{agent} grabbed the {object}.",
        "{agent} took the {object}.",
    ],
    "drop": [
        "{agent} dropped the {object}.",
        "{agent} put down the {object}.",
        "{agent} discarded the {object}.",
    ],
    "give": [
        "{agent} gave the {object} to {agent2}.",
        "{agent} handed the {object} to {agent2}.",
        "{agent} passed the {object} to {agent2}.",
    ],
    "location_fact": [
        "{agent} is in the {location}.",
        "{agent} is inside the {location}.",
        "{agent} is located in the {location}.",
    ],
    "negation": [
        "{agent} is no longer in the {location}.",
        "{agent} is not in the {location}.",
        "{agent} is away from the {location}.",
    ],
}

DEFAULT_QUESTIONS = {
    "where_agent": "Where is {agent}?",
    "where_object": "Where is the {object}?",
    "counting": "How many objects is {agent} carrying?",
    "list": "What is {agent} carrying?",
    "yes_no": "Is {agent} in the {location}?",
}

DEFAULT_COMMANDS = {
    "move": ["go to the {location}", "move to the {location}", "travel to the {location}"],
    "comove": ["go to the {location} with {agent2}"],
    "grab": ["grab the {object}", "pick up the {object}", "take the {object}"],
    "drop": ["drop the {object}", "put down the {object}"],
    "give": ["give the {object} to {agent2}", "hand the {object} to {agent2}"],
}

DEFAULT_PRONOUNS = {
    "mary": "she",
    "john": "he",
    "sandra": "she",
    "daniel": "he",
    "emily": "she",
    "frank": "he",
    "julia": "she",
    "bill": "he",
}

AGENT_POOL = ("mary", "john", "sandra", "daniel", "emily", "frank", "julia", "bill")
LOCATION_POOL = (
    "kitchen",
    "garden",
    "office",
    "bathroom",
    "hallway",
    "bedroom",
    "park",
    "cellar",
)
OBJECT_POOL = ("apple", "ball", "book", "milk", "hammer", "scarf", "violin", "basket")


@dataclass(frozen=True)
class Sentence:
    text: str
    source: object
    spans: dict = field(default_factory=dict, compare=False)


class _Template:
    """A template compiled to parts for rendering and a regex for parsing."""

    __slots__ = ("raw", "parts", "slots", "regex")

    def __init__(self, raw: str, expected_slots):
        self.raw = raw
        self.slots = tuple(_SLOT_RE.findall(raw))
        if sorted(self.slots) != sorted(expected_slots):
            raise MissingTemplate(
                f"template {raw!r} must use slots {sorted(expected_slots)}"
            )
        self.parts = tuple(_SLOT_RE.split(raw)[::2])
        pattern = "".join(
            re.escape(part) + (f"(?P<{slot}>{_TOKEN})" if slot else "")
            for part, slot in zip(
                _SLOT_RE.split(raw)[::2], list(self.slots) + [None]
            )
        )
        self.regex = re.compile(pattern + r"\.?$", re.IGNORECASE)

    def fill(self, surfaces: dict):
        """Render with per-slot surface strings; returns (text, spans)."""
        out = []
        spans = {}
        pos = 0
        for part, slot in zip(self.parts, list(self.slots) + [None]):
            out.append(part)
            pos += len(part)
            if slot:
                surf = surfaces[slot]
                spans[slot] = (pos, pos + len(surf))
                out.append(surf)
                pos += len(surf)
        return "".join(out), spans

    def fill_text(self, surfaces: dict) -> str:
        parts, slots = self.parts, self.slots
        out = [parts[0]]
        for i, slot in enumerate(slots):
            out.append(surfaces[slot])
            out.append(parts[i + 1])
        return "".join(out)


class Lexicon:
    """Immutable bundle of surface templates, shared by render and parse."""

    def __init__(self, templates=None, questions=None, commands=None, pronouns=None):
        templates = templates or DEFAULT_TEMPLATES
        questions = questions or DEFAULT_QUESTIONS
        commands = commands if commands is not None else DEFAULT_COMMANDS
        self.pronouns = dict(pronouns or DEFAULT_PRONOUNS)
        self.templates = {
            tag: tuple(_Template(t, VARIANT_SLOTS[tag]) for t in lst)
            for tag, lst in templates.items()
        }
        self.questions = {
            q: _Template(t, QUESTION_SLOTS[q]) for q, t in questions.items()
        }
        self.commands = {
            tag: tuple(
                _Template(t, tuple(s for s in VARIANT_SLOTS[tag] if s != "agent"))
                for t in lst
            )
            for tag, lst in commands.items()
        }
        self._pronoun_tokens = {p.lower() for p in self.pronouns.values()}
        self.render_cache = {}  # (template idx, event, coref) -> rendered text

    def to_dict(self) -> dict:
        return {
            "templates": {k: [t.raw for t in v] for k, v in self.templates.items()},
            "questions": {k: t.raw for k, t in self.questions.items()},
            "commands": {k: [t.raw for t in v] for k, v in self.commands.items()},
            "pronouns": dict(self.pronouns),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Lexicon":
        return cls(
            d.get("templates"),
            d.get("questions"),
            d.get("commands"),
            d.get("pronouns"),
        )

    @classmethod
    def load(cls, path) -> "Lexicon":
        with open(path) as f:
            return cls.from_dict(json.load(f))


_DEFAULT = None


def default_lexicon() -> Lexicon:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = Lexicon()
    return _DEFAULT


def subject_of(stmt) -> str | None:
    """The single subject agent of a statement, None for joint moves."""
    if stmt is None:
        return None
    event = stmt.event if isinstance(stmt, Statement) else stmt
    if isinstance(event, CoMove):
        return None
    return event.agent


def event_binding(event) -> dict:
    t = type(event)
    if t is Move or t is LocationFact or t is Negation:
        return {"agent": event.agent, "location": event.location}
    if t is CoMove:
        return {"agent": event.agent, "agent2": event.agent2, "location": event.location}
    if t is Grab or t is Drop:
        return {"agent": event.agent, "object": event.obj}
    if t is Give:
        return {"agent": event.agent, "agent2": event.agent2, "object": event.obj}
    raise TypeError(f"not an event: {event!r}")


def event_from_binding(tag: str, binding: dict):
    cls = TAG_VARIANTS[tag]
    if tag in ("move", "location_fact", "negation"):
        return cls(binding["agent"], binding["location"])
    if tag == "comove":
        return cls(binding["agent"], binding["agent2"], binding["location"])
    if tag in ("grab", "drop"):
        return cls(binding["agent"], binding["object"])
    return cls(binding["agent"], binding["agent2"], binding["object"])


def _statement_surfaces(stmt: Statement, lex: Lexicon, coref_context) -> dict:
    surfaces = {}
    for slot, name in event_binding(stmt.event).items():
        if slot == "agent" and stmt.coref and subject_of(coref_context) == name:
            pronoun = lex.pronouns.get(name)
            if pronoun:
                surfaces[slot] = pronoun.capitalize()
                continue
        surfaces[slot] = name.capitalize() if SLOT_KIND[slot] == "agent" else name
    return surfaces


def _pick_template(stmt: Statement, lex: Lexicon, template_index: int) -> _Template:
    tag = variant_tag(stmt.event)
    templates = lex.templates.get(tag)
    if not templates:
        raise MissingTemplate(f"no templates for variant {tag!r}")
    return templates[template_index % len(templates)]


def render_with(
    stmt: Statement,
    lex: Lexicon,
    template_index: int,
    coref_context: Statement | None = None,
) -> Sentence:
    """Render with an explicit template choice (the generator's fast path)."""
    template = _pick_template(stmt, lex, template_index)
    text, spans = template.fill(_statement_surfaces(stmt, lex, coref_context))
    return Sentence(text=text, source=stmt, spans=spans)


def render_text(
    stmt: Statement,
    lex: Lexicon,
    template_index: int,
    coref_context: Statement | None = None,
) -> str:
    """Text-only rendering; identical wording to render_with, no span record."""
    template = _pick_template(stmt, lex, template_index)
    return template.fill_text(_statement_surfaces(stmt, lex, coref_context))


def render(
    stmt: Statement,
    lex: Lexicon | None = None,
    rng_seed: int = 0,
    coref_context: Statement | None = None,
) -> Sentence:
    """Render a statement to one English sentence, deterministic in the seed.

    When ``stmt.coref`` is set and the previous sentence had the same single
    agent as subject, the agent slot becomes that agent's pronoun.
    """
    lex = lex or default_lexicon()
    tag = variant_tag(stmt.event)
    templates = lex.templates.get(tag)
    if not templates:
        raise MissingTemplate(f"no templates for variant {tag!r}")
    index = random.Random(rng_seed).randrange(len(templates))
    return render_with(stmt, lex, index, coref_context)


def render_question(qtype: str, binding: dict, lex: Lexicon | None = None) -> Sentence:
    lex = lex or default_lexicon()
    template = lex.questions.get(qtype)
    if template is None:
        raise MissingTemplate(f"no template for question type {qtype!r}")
    surfaces = {
        slot: (name.capitalize() if SLOT_KIND[slot] == "agent" else name)
        for slot, name in binding.items()
    }
    text, spans = template.fill(surfaces)
    return Sentence(text=text, source=("question", qtype, dict(binding)), spans=spans)


@dataclass(frozen=True)
class ParsedQuestion:
    qtype: str
    binding: tuple  # sorted (slot, entity) pairs

    def get(self, slot: str) -> str:
        return dict(self.binding)[slot]


def _resolve_slot(
    slot: str, token: str, world: World, lex: Lexicon, coref_context
) -> tuple:
    """Return (entity name, used_pronoun) for one matched slot token."""
    lowered = token.lower()
    if slot == "agent" and lowered in lex._pronoun_tokens:
        antecedent = subject_of(coref_context)
        if antecedent is None:
            raise UnresolvedPronoun(token)
        if lex.pronouns.get(antecedent, "").lower() != lowered:
            raise UnresolvedPronoun(token)
        return antecedent, True
    kind = world.kind.get(lowered)
    if kind is None or kind != SLOT_KIND[slot]:
        raise UnknownEntity(token)
    return lowered, False


def parse_sentence(
    text: str,
    lex: Lexicon | None = None,
    world: World | None = None,
    coref_context: Statement | None = None,
    acting_agent: str | None = None,
    index: int = 0,
):
    """Parse narration back to a Statement, a question to a ParsedQuestion,
    or an imperative command (agent filled from ``acting_agent``).

    Inverse of render on the template grammar; raises ParseError,
    UnknownEntity, or UnresolvedPronoun.
    """
    if world is None:
        raise ValueError("parse_sentence needs the declared world")
    lex = lex or default_lexicon()
    cleaned = " ".join(text.split())
    entity_error = None

    def try_template(template, tag):
        nonlocal entity_error
        m = template.regex.match(cleaned)
        if not m:
            return None
        binding = {}
        used_pronoun = False
        try:
            for slot in template.slots:
                name, pron = _resolve_slot(slot, m.group(slot), world, lex, coref_context)
                binding[slot] = name
                used_pronoun = used_pronoun or pron
        except (UnknownEntity, UnresolvedPronoun) as e:
            entity_error = entity_error or e
            return None
        return binding, used_pronoun

    for tag, templates in lex.templates.items():
        for template in templates:
            hit = try_template(template, tag)
            if hit is not None:
                binding, used_pronoun = hit
                event = event_from_binding(tag, binding)
                return Statement(event, index=index, coref=used_pronoun)

    for qtype, template in lex.questions.items():
        hit = try_template(template, qtype)
        if hit is not None:
            binding, _ = hit
            return ParsedQuestion(qtype, tuple(sorted(binding.items())))

    if acting_agent is not None:
        for tag, templates in lex.commands.items():
            for template in templates:
                hit = try_template(template, tag)
                if hit is not None:
                    binding, _ = hit
                    binding["agent"] = acting_agent
                    event = event_from_binding(tag, binding)
                    return Statement(event, index=index, coref=False)

    if entity_error is not None:
        raise entity_error
    raise ParseError(text, 0, "a sentence, question, or command of the grammar")


def all_parses(text: str, lex: Lexicon, world: World, coref_context=None):
    """Every (tag, binding) the grammar admits; used to audit ambiguity."""
    cleaned = " ".join(text.split())
    hits = []
    groups = [
        (lex.templates, "statement"),
        ({k: (v,) for k, v in lex.questions.items()}, "question"),
    ]
    for table, kind in groups:
        for tag, templates in table.items():
            for template in templates:
                m = template.regex.match(cleaned)
                if not m:
                    continue
                try:
                    binding = {}
                    for slot in template.slots:
                        name, _ = _resolve_slot(
                            slot, m.group(slot), world, lex, coref_context
                        )
                        binding[slot] = name
                except LanguageError:
                    continue
                hits.append((kind, tag, tuple(sorted(binding.items()))))
    return hits


def command_text(action, lex: Lexicon | None = None) -> str:
    """Canonical imperative phrasing of an action (first command template)."""
    lex = lex or default_lexicon()
    tag = variant_tag(action)
    templates = lex.commands.get(tag)
    if not templates:
        raise MissingTemplate(f"no command templates for {tag!r}")
    binding = event_binding(action)
    surfaces = {
        slot: (name.capitalize() if SLOT_KIND[slot] == "agent" else name)
        for slot, name in binding.items()
        if slot != "agent"
    }
    text, _ = templates[0].fill(surfaces)
    return text


def pronoun_for(name: str, position: int) -> str:
    """Default pronoun for synthesized entity names beyond the built-in pool."""
    return DEFAULT_PRONOUNS.get(name, "she" if position % 2 == 0 else "he")


def entity_names(kind: str, count: int) -> tuple:
    """First ``count`` names for a kind, extending the pool deterministically."""
    pool = {"agent": AGENT_POOL, "location": LOCATION_POOL, "object": OBJECT_POOL}[kind]
    names = list(pool[:count])
    i = len(pool)
    while len(names) < count:
        names.append(f"{kind}{i}")
        i += 1
    return tuple(names)
