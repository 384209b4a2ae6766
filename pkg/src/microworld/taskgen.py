"""Controllable story/QA generation with compositional splits.

Stories are statement sequences sampled under a TaskSpec: every statement
is legal in the evolving ground truth, questions are only placed where the
belief tracker entails a unique answer, and supporting facts are the
tracker's provenance.  Distractor statements touch only a reserved entity
pool so they can never enter a question's derivation.  Everything is a pure
function of (spec, seed).
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field, fields

from . import language
from .belief import BeliefState
from .world import (
    At,
    Carry,
    CoMove,
    Drop,
    Give,
    Grab,
    Holds,
    Label,
    LocationFact,
    Move,
    Negation,
    Statement,
    World,
    WorldState,
    variant_tag,
)

STATEMENT_VARIANTS = ("move", "comove", "grab", "drop", "give", "location_fact", "negation")
QUESTION_TYPES = ("where_agent", "where_object", "counting", "list", "yes_no")


class GenerationError(Exception):
    pass


class GenerationExhausted(GenerationError):
    def __init__(self, message: str, retries: int = 0):
        super().__init__(message)
        self.retries = retries


class SignatureOverlap(GenerationError):
    def __init__(self, message: str, pair=None):
        super().__init__(message)
        self.pair = pair


class Unanswerable(GenerationError):
    pass


def derive_seed(root: int, *parts) -> int:
    """Stable per-item seed, well mixed regardless of hash randomization."""
    key = ":".join([str(root)] + [str(p) for p in parts])
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big")


@dataclass(frozen=True)
class TaskSpec:
    """Knobs of the generator; a value object usable as a dataset fingerprint."""

    agents: int = 2
    objects: int = 1
    locations: int = 3
    story_length: int = 10
    allowed_statement_variants: tuple = STATEMENT_VARIANTS
    allowed_question_types: tuple = QUESTION_TYPES
    questions_per_story: int = 1
    distractor_rate: float = 0.0
    coref_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self,
            "allowed_statement_variants",
            tuple(self.allowed_statement_variants),
        )
        object.__setattr__(
            self, "allowed_question_types", tuple(self.allowed_question_types)
        )
        if min(self.agents, self.objects, self.locations) < 1:
            raise ValueError("entity counts must be >= 1")
        if self.story_length < 1:
            raise ValueError("story_length must be >= 1")
        if self.questions_per_story < 0:
            raise ValueError("questions_per_story must be >= 0")
        if not (0.0 <= self.distractor_rate <= 1.0 and 0.0 <= self.coref_rate <= 1.0):
            raise ValueError("rates must lie in [0, 1]")
        if not self.allowed_statement_variants or not self.allowed_question_types:
            raise ValueError("allowed variant and question sets must be non-empty")
        for v in self.allowed_statement_variants:
            if v not in STATEMENT_VARIANTS:
                raise ValueError(f"unknown statement variant {v!r}")
        for q in self.allowed_question_types:
            if q not in QUESTION_TYPES:
                raise ValueError(f"unknown question type {q!r}")

    def to_dict(self) -> dict:
        return {
            "agents": self.agents,
            "objects": self.objects,
            "locations": self.locations,
            "story_length": self.story_length,
            "allowed_statement_variants": list(self.allowed_statement_variants),
            "allowed_question_types": list(self.allowed_question_types),
            "questions_per_story": self.questions_per_story,
            "distractor_rate": self.distractor_rate,
            "coref_rate": self.coref_rate,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown TaskSpec fields: {sorted(unknown)}")
        kwargs = dict(d)
        for key in ("allowed_statement_variants", "allowed_question_types"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    def fingerprint(self) -> str:
        import json

        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class Question:
    qtype: str
    binding: dict
    position: int
    answer: object  # str, or list of str for "list" questions
    supporting: tuple
    text: str

    def to_dict(self) -> dict:
        return {
            "position": self.position,
            "qtype": self.qtype,
            "text": self.text,
            "answer": self.answer,
            "supporting": list(self.supporting),
        }


@dataclass
class Story:
    id: str
    spec: TaskSpec
    world: World
    statements: list
    sentences: list  # rendered texts, aligned with statements
    questions: list
    trajectory: list = field(default_factory=list)  # ground truth, len = L + 1

    def signature(self) -> frozenset:
        tags = {variant_tag(s.event) for s in self.statements}
        tags.update(q.qtype for q in self.questions)
        return frozenset(tags)


_WORLD_CACHE = {}
_LEXICON_CACHE = {}


def build_world(spec: TaskSpec) -> World:
    """World for a spec's entity counts (cached: worlds are immutable)."""
    key = (spec.agents, spec.locations, spec.objects)
    world = _WORLD_CACHE.get(key)
    if world is None:
        world = World(
            language.entity_names("agent", spec.agents),
            language.entity_names("location", spec.locations),
            language.entity_names("object", spec.objects),
        )
        _WORLD_CACHE[key] = world
    return world


def build_lexicon(world: World) -> language.Lexicon:
    key = world.agents
    lex = _LEXICON_CACHE.get(key)
    if lex is None:
        pronouns = {a: language.pronoun_for(a, i) for i, a in enumerate(world.agents)}
        lex = language.Lexicon(pronouns=pronouns)
        _LEXICON_CACHE[key] = lex
    return lex


class _Sampler:
    """One story generation pass; all randomness from a single stream."""

    def __init__(self, spec: TaskSpec, seed: int, story_id: str):
        self.spec = spec
        self.rng = random.Random(derive_seed(seed, "story"))
        self.story_id = story_id
        self.world = build_world(spec)
        self.lexicon = build_lexicon(self.world)

    def sample(self) -> Story:
        spec, rng, world = self.spec, self.rng, self.world
        agents, locations, objects = world.agents, world.locations, world.objects

        _r = rng.random
        nloc = len(locations)
        state_agents = {a: locations[int(_r() * nloc)] for a in agents}
        state_objects = {o: locations[int(_r() * nloc)] for o in objects}
        state = WorldState(state_agents, state_objects)
        trajectory = [state]

        core_agents, core_objects, d_agents, d_objects = self._pools()
        n_distractors = round(spec.distractor_rate * spec.story_length)
        if n_distractors and not d_agents:
            raise GenerationExhausted(
                "distractor_rate > 0 needs at least 2 agents to reserve a "
                "distractor pool"
            )
        distractor_at = set(rng.sample(range(spec.story_length), n_distractors))

        belief = BeliefState(world)
        beliefs = []
        statements = []
        sentences = []
        render_cache = self.lexicon.render_cache
        prev_stmt = None
        prev_move = None  # (agent, vacated location) of the previous statement

        for t in range(spec.story_length):
            if t in distractor_at:
                pool_a, pool_o = d_agents, d_objects
            else:
                pool_a, pool_o = core_agents, core_objects
            want_coref = (
                spec.coref_rate > 0.0
                and rng.random() < spec.coref_rate
                and language.subject_of(prev_stmt) in pool_a
            )
            stmt, vacated = self._sample_statement(
                state, t, pool_a, pool_o, want_coref, prev_stmt, prev_move
            )
            state = world.apply_statement(state, stmt)
            trajectory.append(state)
            belief._update(stmt)
            beliefs.append(belief._clone())
            template_idx = int(rng.random() * 3)
            # Rendered surfaces recur heavily within a spec's small grammar.
            cache_key = (template_idx, stmt.event, stmt.coref)
            text = render_cache.get(cache_key)
            if text is None:
                text = language.render_text(stmt, self.lexicon, template_idx, prev_stmt)
                render_cache[cache_key] = text
            sentences.append(text)
            statements.append(stmt)
            prev_move = vacated
            prev_stmt = stmt

        questions = self._sample_questions(beliefs, core_agents, core_objects)
        return Story(
            id=self.story_id,
            spec=spec,
            world=world,
            statements=statements,
            sentences=sentences,
            questions=questions,
            trajectory=trajectory,
        )

    def _pools(self):
        spec, world = self.spec, self.world
        if spec.distractor_rate > 0.0 and spec.agents >= 2:
            d_agents = world.agents[-1:]
            core_agents = world.agents[:-1]
        else:
            d_agents = ()
            core_agents = world.agents
        if spec.distractor_rate > 0.0 and spec.objects >= 2:
            d_objects = world.objects[-1:]
            core_objects = world.objects[:-1]
        else:
            d_objects = ()
            core_objects = world.objects
        return core_agents, core_objects, d_agents, d_objects

    def _sample_statement(self, state, index, pool_a, pool_o, want_coref, prev_stmt, prev_move):
        """Pick a legal statement over the pool; returns (statement, vacated)."""
        rng = self.rng
        variants = self.spec.allowed_statement_variants
        n = len(variants)
        start = int(rng.random() * n) if n > 1 else 0
        coref_subject = language.subject_of(prev_stmt) if want_coref else None
        agents = (coref_subject,) if coref_subject else pool_a

        for attempt in (0, 1):
            if attempt == 1:
                if coref_subject is None:
                    break
                agents = pool_a  # coref preference failed; retry unconstrained
            for k in range(n):
                variant = variants[(start + k) % n]
                built = self._try_variant(
                    variant, state, index, agents, pool_o, prev_stmt, prev_move
                )
                if built is None:
                    continue
                event, vacated = built
                coref = (
                    coref_subject is not None
                    and attempt == 0
                    and language.subject_of(event) == coref_subject
                )
                return Statement(event, index=index, coref=coref), vacated
        raise GenerationExhausted(
            f"no legal statement at position {index} for variants "
            f"{sorted(self.spec.allowed_statement_variants)} over pool {pool_a}"
        )

    def _try_variant(self, variant, state, index, agents, objects, prev_stmt, prev_move):
        r = self.rng.random
        world = self.world
        loc = state.agent_location
        place = state.object_place
        if variant == "move":
            if not agents:
                return None
            a = agents[int(r() * len(agents))]
            options = [l for l in world.locations if l != loc[a]]
            if not options:
                return None
            dest = options[int(r() * len(options))]
            return Move(a, dest), (a, loc[a])
        if variant == "comove":
            if len(agents) < 2:
                return None
            i = int(r() * len(agents))
            a = agents[i]
            rest = agents[:i] + agents[i + 1 :]
            b = rest[int(r() * len(rest))]
            options = [l for l in world.locations if l != loc[a] and l != loc[b]]
            if not options:
                return None
            dest = options[int(r() * len(options))]
            return CoMove(a, b, dest), (a, loc[a])
        if variant == "grab":
            candidates = [
                (a, o)
                for a in agents
                for o in objects
                if place[o] == loc[a]
            ]
            if not candidates:
                return None
            a, o = candidates[int(r() * len(candidates))]
            return Grab(a, o), None
        if variant == "drop":
            candidates = [
                (p.agent, o)
                for o in objects
                for p in (place[o],)
                if type(p) is Carry and p.agent in agents
            ]
            if not candidates:
                return None
            a, o = candidates[int(r() * len(candidates))]
            return Drop(a, o), None
        if variant == "give":
            candidates = []
            for o in objects:
                p = place[o]
                if type(p) is not Carry or p.agent not in agents:
                    continue
                here = loc[p.agent]
                for g_r in agents:
                    if g_r != p.agent and loc[g_r] == here:
                        candidates.append((p.agent, g_r, o))
            if not candidates:
                return None
            g, recv, o = candidates[int(r() * len(candidates))]
            return Give(g, recv, o), None
        if variant == "location_fact":
            if not agents:
                return None
            a = agents[int(r() * len(agents))]
            return LocationFact(a, loc[a]), None
        if variant == "negation":
            # Only right after a move, about the vacated location.
            if prev_move is None:
                return None
            a, old = prev_move
            if a not in agents or loc[a] == old:
                return None
            return Negation(a, old), None
        raise ValueError(f"unknown variant {variant!r}")

    def _sample_questions(self, beliefs, core_agents, core_objects):
        spec, rng = self.spec, self.rng
        questions = []
        used_positions = set()  # (id, position) is the prediction key
        retries = 0
        for _ in range(spec.questions_per_story):
            placed = None
            for _attempt in range(100):
                position = rng.randrange(spec.story_length)
                if position in used_positions:
                    retries += 1
                    continue
                qtype = spec.allowed_question_types[
                    rng.randrange(len(spec.allowed_question_types))
                ]
                placed = self._try_question(
                    qtype, position, beliefs[position], core_agents, core_objects
                )
                if placed is not None:
                    break
                retries += 1
            if placed is None:
                raise GenerationExhausted(
                    f"could not place a question of types "
                    f"{sorted(spec.allowed_question_types)}",
                    retries=retries,
                )
            used_positions.add(placed.position)
            questions.append(placed)
        questions.sort(key=lambda q: q.position)
        return questions

    def _try_question(self, qtype, position, belief, core_agents, core_objects):
        rng = self.rng
        world = self.world
        if qtype == "where_agent":
            a = core_agents[rng.randrange(len(core_agents))]
            pset = belief.agent_possible(a)
            if len(pset) != 1:
                return None
            (answer,) = pset
            supporting = belief.provenance(a)
            binding = {"agent": a}
        elif qtype == "where_object":
            o = core_objects[rng.randrange(len(core_objects))]
            carrier = belief.carrier_of(o)
            pset = belief.agent_possible(carrier) if carrier else belief.object_possible(o)
            if len(pset) != 1:
                return None
            (answer,) = pset
            supporting = belief.provenance(o)
            binding = {"object": o}
        elif qtype == "counting":
            a = core_agents[rng.randrange(len(core_agents))]
            carried = belief.carried_by(a)
            answer = str(len(carried))
            supporting = frozenset().union(
                *(belief.support(_holds(a, o)) for o in carried)
            ) if carried else frozenset()
            binding = {"agent": a}
        elif qtype == "list":
            a = core_agents[rng.randrange(len(core_agents))]
            carried = belief.carried_by(a)
            answer = list(carried) if carried else "nothing"
            supporting = frozenset().union(
                *(belief.support(_holds(a, o)) for o in carried)
            ) if carried else frozenset()
            binding = {"agent": a}
        elif qtype == "yes_no":
            a = core_agents[rng.randrange(len(core_agents))]
            l = world.locations[rng.randrange(len(world.locations))]
            lab = belief.label(At(a, l))
            answer = {Label.TRUE: "yes", Label.FALSE: "no", Label.UNKNOWN: "maybe"}[lab]
            supporting = belief.support(At(a, l))
            binding = {"agent": a, "location": l}
        else:
            raise ValueError(f"unknown question type {qtype!r}")
        text = language.render_question(qtype, binding, self.lexicon).text
        return Question(
            qtype=qtype,
            binding=binding,
            position=position,
            answer=answer,
            supporting=tuple(sorted(supporting)),
            text=text,
        )


def sample_story(spec: TaskSpec, seed: int | None = None, story_id: str = "story-000000") -> Story:
    """Generate one story; deterministic in (spec, seed)."""
    if seed is None:
        seed = spec.seed
    return _Sampler(spec, seed, story_id).sample()


def _holds(agent, obj):
    return Holds(agent, obj)


def answer_question(story: Story, question: Question):
    """Reference QA: recompute (answer, supporting) from the belief tracker.

    Raises Unanswerable when the belief at the position does not entail a
    unique answer (never for generated questions).
    """
    qtype, binding, position = question.qtype, question.binding, question.position
    if position >= len(story.statements):
        raise Unanswerable(f"position {position} beyond story end")
    belief = BeliefState(story.world)
    for stmt in story.statements[: position + 1]:
        belief = belief.update(stmt)
    if qtype == "where_agent":
        a = binding["agent"]
        pset = belief.agent_possible(a)
        if len(pset) != 1:
            raise Unanswerable(f"location of {a} not entailed")
        (answer,) = pset
        return answer, tuple(sorted(belief.provenance(a)))
    if qtype == "where_object":
        o = binding["object"]
        carrier = belief.carrier_of(o)
        pset = belief.agent_possible(carrier) if carrier else belief.object_possible(o)
        if len(pset) != 1:
            raise Unanswerable(f"location of {o} not entailed")
        (answer,) = pset
        return answer, tuple(sorted(belief.provenance(o)))
    if qtype == "counting":
        a = binding["agent"]
        carried = belief.carried_by(a)
        supporting = (
            frozenset().union(*(belief.support(_holds(a, o)) for o in carried))
            if carried
            else frozenset()
        )
        return str(len(carried)), tuple(sorted(supporting))
    if qtype == "list":
        a = binding["agent"]
        carried = belief.carried_by(a)
        supporting = (
            frozenset().union(*(belief.support(_holds(a, o)) for o in carried))
            if carried
            else frozenset()
        )
        return (list(carried) if carried else "nothing"), tuple(sorted(supporting))
    if qtype == "yes_no":
        prop = At(binding["agent"], binding["location"])
        lab = belief.label(prop)
        answer = {Label.TRUE: "yes", Label.FALSE: "no", Label.UNKNOWN: "maybe"}[lab]
        return answer, tuple(sorted(belief.support(prop)))
    raise ValueError(f"unknown question type {qtype!r}")


def signature_universe(spec: TaskSpec) -> frozenset:
    return frozenset(spec.allowed_statement_variants) | frozenset(
        spec.allowed_question_types
    )


def signature_pairs(tags) -> frozenset:
    tags = sorted(tags)
    return frozenset(
        frozenset((a, b)) for i, a in enumerate(tags) for b in tags[i + 1 :]
    )


@dataclass
class DatasetSplits:
    train: list
    test: list
    mode: str


@dataclass(frozen=True)
class StoryTask:
    """One planned story: everything needed to realize it independently."""

    story_id: str
    spec: TaskSpec
    tag: str
    index: int
    require_pairs: frozenset | None = None


def realize_task(task: StoryTask, seed: int) -> Story:
    """Sample the planned story, resampling until any required tag pair shows."""
    for retry in range(100):
        story = sample_story(
            task.spec, derive_seed(seed, task.tag, task.index, retry), task.story_id
        )
        if task.require_pairs is None:
            return story
        if signature_pairs(story.signature()) & task.require_pairs:
            return story
    raise GenerationExhausted(
        f"could not realize a held-out tag pair in stories of spec "
        f"{task.spec.fingerprint()}",
        retries=100,
    )


def plan_block(specs, count, tag, id_offset=0, require_pairs=None):
    return [
        StoryTask(
            story_id=f"story-{id_offset + i:06d}",
            spec=specs[i % len(specs)],
            tag=tag,
            index=i,
            require_pairs=require_pairs,
        )
        for i in range(count)
    ]


def _sample_block(specs, count, seed, tag, id_offset=0, require_pairs=None):
    return [
        realize_task(t, seed)
        for t in plan_block(specs, count, tag, id_offset, require_pairs)
    ]


def plan_splits(train_specs, test_specs, mode, sizes):
    """Plan the story tasks of a split; raises SignatureOverlap eagerly."""
    train_size, test_size = sizes
    if mode == "iid":
        tasks = plan_block(list(train_specs), train_size + test_size, "iid")
        return tasks[:train_size], tasks[train_size:]
    if mode != "compositional":
        raise ValueError(f"unknown split mode {mode!r}")
    if not test_specs:
        raise ValueError("compositional mode needs test specs")

    train_pairs = frozenset().union(
        frozenset(),
        *(signature_pairs(signature_universe(ts)) for ts in train_specs),
    )
    novel = {}
    for ts in test_specs:
        held_out = signature_pairs(signature_universe(ts)) - train_pairs
        if not held_out:
            pair = sorted(sorted(p) for p in signature_pairs(signature_universe(ts)))
            raise SignatureOverlap(
                f"test spec {ts.fingerprint()} has no tag pair outside the train "
                f"specs' coverage",
                pair=pair[0] if pair else None,
            )
        novel[ts] = held_out

    train = plan_block(list(train_specs), train_size, "train")
    test = []
    per_spec = _spread(test_size, len(test_specs))
    offset = train_size
    for ts, n in zip(test_specs, per_spec):
        test.extend(
            plan_block([ts], n, f"test-{ts.fingerprint()}", offset, novel[ts])
        )
        offset += n
    return train, test


def compose_splits(train_specs, test_specs, mode, sizes, seed) -> DatasetSplits:
    """Build train/test story sets.

    iid: one pool (the train specs), partitioned disjointly by story id.
    compositional: every test story contains a statement-variant/question-type
    pair never co-occurring in any train spec; violations raise
    SignatureOverlap before any sampling happens.
    """
    train_tasks, test_tasks = plan_splits(train_specs, test_specs, mode, sizes)
    return DatasetSplits(
        [realize_task(t, seed) for t in train_tasks],
        [realize_task(t, seed) for t in test_tasks],
        mode,
    )


def _spread(total: int, buckets: int) -> list:
    base = total // buckets
    extra = total % buckets
    return [base + (1 if i < extra else 0) for i in range(buckets)]


def largest_remainder_counts(weights, total: int) -> list:
    """Apportion ``total`` by weights, largest remainder, ties by index."""
    raw = [w * total for w in weights]
    counts = [int(r) for r in raw]
    remainders = sorted(
        range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i)
    )
    for i in remainders[: total - sum(counts)]:
        counts[i] += 1
    return counts


def plan_mixture(specs, total_size: int, weights, seed: int):
    """Shuffled mixture plan with exact largest-remainder per-spec counts."""
    if len(weights) != len(specs):
        raise ValueError("weights and specs must have the same length")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1 (got {sum(weights)!r})")
    counts = largest_remainder_counts(weights, total_size)
    slots = [
        (k, i) for k, n in enumerate(counts) for i in range(n)
    ]
    rng = random.Random(derive_seed(seed, "mix-shuffle"))
    rng.shuffle(slots)
    return [
        StoryTask(
            story_id=f"story-{j:06d}",
            spec=specs[k],
            tag=f"mix-{k}",
            index=i,
        )
        for j, (k, i) in enumerate(slots)
    ]


def diversify(specs, total_size: int, weights, seed: int) -> list:
    """A shuffled mixture over specs with exact largest-remainder counts."""
    return [realize_task(t, seed) for t in plan_mixture(specs, total_size, weights, seed)]
