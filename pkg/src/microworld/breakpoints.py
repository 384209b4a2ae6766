"""Per-sentence world-state supervision and plausibility bugs.

For every story a breakpoint sits after each sentence; at each breakpoint
every proposition in the canonical universe gets a true/false/unknown label
from the belief tracker.  The injector plants exactly one action whose
precondition provably fails at its position (the belief entails the
violation), recording the conflicting earlier sentence; the detector
recovers that pair from raw text alone.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from . import language
from .belief import BeliefState
from .taskgen import Story, build_lexicon, derive_seed
from .world import (
    At,
    Drop,
    Give,
    Grab,
    Holds,
    Label,
    Move,
    ObjAt,
    Statement,
    World,
    proposition_from_str,
    proposition_to_str,
)


class ShapeMismatch(Exception):
    pass


class NoInjectionSite(Exception):
    pass


def proposition_universe(world: World) -> tuple:
    """Canonical ordering: all At, then Holds, then ObjAt, names sorted."""
    props = [
        At(a, l) for a in sorted(world.agents) for l in sorted(world.locations)
    ]
    props += [Holds(a, o) for a in sorted(world.agents) for o in sorted(world.objects)]
    props += [ObjAt(o, l) for o in sorted(world.objects) for l in sorted(world.locations)]
    return tuple(props)


@dataclass
class BreakpointAnnotation:
    story_id: str
    universe: tuple
    labels: list  # one row of Labels per breakpoint (after each statement)

    def to_dict(self) -> dict:
        return {
            "id": self.story_id,
            "universe": [proposition_to_str(p) for p in self.universe],
            "labels": [[lab.code for lab in row] for row in self.labels],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BreakpointAnnotation":
        return cls(
            story_id=d["id"],
            universe=tuple(proposition_from_str(s) for s in d["universe"]),
            labels=[[Label.from_code(c) for c in row] for row in d["labels"]],
        )


def annotate(story: Story) -> BreakpointAnnotation:
    """Label grid: row t gives every proposition's label after statement t."""
    universe = proposition_universe(story.world)
    belief = BeliefState(story.world)
    rows = []
    for stmt in story.statements:
        belief._update(stmt)
        rows.append([belief.label(p) for p in universe])
    return BreakpointAnnotation(story_id=story.id, universe=universe, labels=rows)


def _new_confusion() -> dict:
    return {
        "total": 0,
        "correct": 0,
        "per": {lab: {"tp": 0, "fp": 0, "fn": 0, "support": 0} for lab in Label},
    }


def _accumulate(confusion: dict, gold_rows, pred_rows) -> None:
    per = confusion["per"]
    for grow, prow in zip(gold_rows, pred_rows):
        for g, p in zip(grow, prow):
            confusion["total"] += 1
            per[g]["support"] += 1
            if g is p:
                confusion["correct"] += 1
                per[g]["tp"] += 1
            else:
                per[p]["fp"] += 1
                per[g]["fn"] += 1


def _metrics(confusion: dict) -> dict:
    total, correct = confusion["total"], confusion["correct"]
    out = {"accuracy": correct / total if total else 1.0, "per_label": {}}
    f1s = []
    for lab, c in confusion["per"].items():
        precision = c["tp"] / (c["tp"] + c["fp"]) if c["tp"] + c["fp"] else 0.0
        recall = c["tp"] / (c["tp"] + c["fn"]) if c["tp"] + c["fn"] else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        out["per_label"][lab.value] = {
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "support": c["support"],
        }
        f1s.append(f1)
    out["macro_f1"] = sum(f1s) / len(f1s)
    return out


def score_breakpoints(gold: BreakpointAnnotation, predicted: BreakpointAnnotation) -> dict:
    """Multi-class accuracy and per-label precision/recall/F1 over all cells."""
    if (
        len(gold.labels) != len(predicted.labels)
        or gold.universe != predicted.universe
        or any(len(g) != len(p) for g, p in zip(gold.labels, predicted.labels))
    ):
        raise ShapeMismatch("gold and predicted grids disagree in shape")
    confusion = _new_confusion()
    _accumulate(confusion, gold.labels, predicted.labels)
    return _metrics(confusion)


def score_breakpoint_files(gold_rows, predicted_rows) -> dict:
    """Pool breakpoint metrics over many stories (rows: {"id", "labels"})."""
    from .scoring import DuplicatePrediction, UnresolvedId

    gold_by_id = {r["id"]: r for r in gold_rows}
    confusion = _new_confusion()
    seen = set()
    for pr in predicted_rows:
        rid = pr["id"]
        if rid not in gold_by_id:
            raise UnresolvedId(f"no gold grid for story {rid!r}")
        if rid in seen:
            raise DuplicatePrediction(f"duplicate grid for story {rid!r}")
        seen.add(rid)
        gr = gold_by_id[rid]
        gold_labels = [[Label.from_code(c) for c in row] for row in gr["labels"]]
        pred_labels = [[Label.from_code(c) for c in row] for row in pr["labels"]]
        if len(gold_labels) != len(pred_labels) or any(
            len(g) != len(p) for g, p in zip(gold_labels, pred_labels)
        ):
            raise ShapeMismatch(f"grid shape mismatch for story {rid!r}")
        _accumulate(confusion, gold_labels, pred_labels)
    return _metrics(confusion)


@dataclass
class PlausibilityInstance:
    story_id: str
    sentences: list
    plausible: bool
    bug_index: int | None = None
    conflict_pair: tuple | None = None
    affected: tuple = ()

    def to_dict(self) -> dict:
        return {
            "id": self.story_id,
            "sentences": list(self.sentences),
            "plausible": self.plausible,
            "bug_index": self.bug_index,
            "conflict_pair": list(self.conflict_pair) if self.conflict_pair else None,
            "affected": [proposition_to_str(p) for p in self.affected],
        }


def _bug_candidates(world: World, belief: BeliefState):
    """Actions whose precondition provably fails under the belief, canonical order."""
    out = []
    for a in world.agents:
        for o in world.objects:
            if belief.carrier_of(o) != a:
                out.append(Drop(a, o))
    for a in world.agents:
        for o in world.objects:
            if belief.carrier_of(o) is not None:
                out.append(Grab(a, o))
            elif not (belief.agent_possible(a) & belief.object_possible(o)):
                out.append(Grab(a, o))
    for g in world.agents:
        for r in world.agents:
            if g == r:
                continue
            for o in world.objects:
                if belief.carrier_of(o) == g and not (
                    belief.agent_possible(g) & belief.agent_possible(r)
                ):
                    out.append(Give(g, r, o))
    for a in world.agents:
        pset = belief.agent_possible(a)
        if len(pset) == 1:
            (loc,) = pset
            out.append(Move(a, loc))
    return out


def inject_implausibility(story: Story, seed: int, plausible: bool = False) -> PlausibilityInstance:
    """Insert one provably precondition-violating action into the story.

    The bug lands at a random position >= 1; the original suffix is kept, so
    removing the bug sentence restores a fully plausible story.  In
    passthrough mode the instance is the untouched story.
    """
    if plausible:
        return PlausibilityInstance(
            story_id=story.id, sentences=list(story.sentences), plausible=True
        )
    if len(story.statements) < 2:
        raise NoInjectionSite("need at least 2 statements to inject against")
    rng = random.Random(derive_seed(seed, "inject", story.id))
    lexicon = _story_lexicon(story)
    n = len(story.statements)
    positions = list(range(1, n + 1))
    rng.shuffle(positions)
    beliefs = _belief_prefixes(story)
    for pos in positions:
        belief = beliefs[pos]  # after statements[:pos]
        candidates = _bug_candidates(story.world, belief)
        if not candidates:
            continue
        bug_event = candidates[rng.randrange(len(candidates))]
        conflict = belief.analyze(bug_event, pos)
        assert conflict is not None, "candidate must be a provable violation"
        i = max(conflict.evidence) if conflict.evidence else pos
        bug_stmt = Statement(bug_event, index=pos, coref=False)
        bug_text = language.render_text(bug_stmt, lexicon, rng.randrange(3), None)
        sentences = list(story.sentences[:pos])
        sentences.append(bug_text)
        tail = story.sentences[pos:]
        if tail and story.statements[pos].coref:
            # The bug broke the pronoun chain; respell the displaced sentence.
            respelled = Statement(story.statements[pos].event, index=pos, coref=False)
            tail = [language.render_text(respelled, lexicon, 0, None)] + list(tail[1:])
        sentences.extend(tail)
        return PlausibilityInstance(
            story_id=story.id,
            sentences=sentences,
            plausible=False,
            bug_index=pos,
            conflict_pair=(i, pos),
            affected=tuple(p for p, _lab in conflict.affected),
        )
    raise NoInjectionSite("no position admits a provable violation")


def _belief_prefixes(story: Story):
    """beliefs[k] = belief after statements[:k]."""
    belief = BeliefState(story.world)
    out = [belief._clone()]
    for stmt in story.statements:
        belief._update(stmt)
        out.append(belief._clone())
    return out


def _story_lexicon(story: Story):
    return build_lexicon(story.world)


def detect_conflict(sentences, lexicon, world: World):
    """Parse and replay; first impossible statement yields (evidence, bug).

    Returns None when every sentence is consistent, else the pair (i, j)
    with j the bug sentence and i the latest sentence whose evidence the
    bug contradicts ((j, j) when the violated fact was never established).
    """
    belief = BeliefState(world)
    prev = None
    for j, text in enumerate(sentences):
        parsed = language.parse_sentence(
            text, lexicon, world, coref_context=prev, index=j
        )
        if not isinstance(parsed, Statement):
            raise language.ParseError(text, 0, "a narrative statement")
        conflict = belief.analyze(parsed.event, j)
        if conflict is not None:
            i = max(conflict.evidence) if conflict.evidence else j
            return (i, j)
        belief._update(parsed)
        prev = parsed
    return None
