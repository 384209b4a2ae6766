"""Dataset serialization: JSON Lines, bAbI-compatible text, run manifests.

Every artifact the generator writes is reproducible from (config, seed);
the manifest records both plus sha256 digests of each output file, so a
rerun can be checked byte for byte.
"""

from __future__ import annotations

import datetime
import hashlib
import json
from dataclasses import dataclass, field

from . import language
from .taskgen import Question, Story, TaskSpec, build_lexicon, build_world
from .world import Statement

TOOL_NAME = "microworld"


def story_row(story: Story) -> dict:
    return {
        "id": story.id,
        "spec": story.spec.to_dict(),
        "sentences": list(story.sentences),
        "questions": [q.to_dict() for q in story.questions],
        "signature": sorted(story.signature()),
    }


_COMPACT = {"separators": (",", ":")}


def story_row_json(story: Story, spec_json: str | None = None) -> str:
    """One JSONL line; the spec fragment can be pre-serialized and reused."""
    if spec_json is None:
        spec_json = json.dumps(story.spec.to_dict(), **_COMPACT)
    questions = json.dumps([q.to_dict() for q in story.questions], **_COMPACT)
    sentences = json.dumps(story.sentences, **_COMPACT)
    signature = json.dumps(sorted(story.signature()), **_COMPACT)
    return (
        f'{{"id":"{story.id}","spec":{spec_json},"sentences":{sentences},'
        f'"questions":{questions},"signature":{signature}}}'
    )


def write_jsonl(path, lines) -> None:
    """Write pre-serialized JSON lines (or dicts) with LF endings."""
    with open(path, "w", newline="\n") as f:
        for line in lines:
            if not isinstance(line, str):
                line = json.dumps(line, **_COMPACT)
            f.write(line)
            f.write("\n")


def read_jsonl(path) -> list:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def story_from_row(row: dict) -> Story:
    """Rebuild a story from its JSONL row by parsing the sentences back."""
    spec = TaskSpec.from_dict(row["spec"])
    world = build_world(spec)
    lexicon = build_lexicon(world)
    statements = []
    prev = None
    for i, text in enumerate(row["sentences"]):
        stmt = language.parse_sentence(text, lexicon, world, coref_context=prev, index=i)
        if not isinstance(stmt, Statement):
            raise ValueError(f"sentence {i} of {row['id']} is not a statement")
        statements.append(stmt)
        prev = stmt
    questions = []
    for q in row["questions"]:
        parsed = language.parse_sentence(q["text"], lexicon, world)
        binding = dict(parsed.binding) if isinstance(parsed, language.ParsedQuestion) else {}
        questions.append(
            Question(
                qtype=q["qtype"],
                binding=binding,
                position=q["position"],
                answer=q["answer"],
                supporting=tuple(q["supporting"]),
                text=q["text"],
            )
        )
    return Story(
        id=row["id"],
        spec=spec,
        world=world,
        statements=statements,
        sentences=list(row["sentences"]),
        questions=questions,
    )


def answer_text(answer) -> str:
    if isinstance(answer, (list, tuple)):
        return ",".join(answer)
    return str(answer)


def babi_lines(story: Story) -> list:
    """bAbI text lines: numbered sentences, tab-separated question lines.

    Numbering restarts at 1 per story and counts question lines too;
    supporting ids reference the statement lines by their printed numbers.
    """
    by_position = {}
    for q in story.questions:
        by_position.setdefault(q.position, []).append(q)
    out = []
    n = 1
    statement_line = {}
    for t, sentence in enumerate(story.sentences):
        statement_line[t] = n
        out.append(f"{n} {sentence}")
        n += 1
        for q in by_position.get(t, ()):
            supporting = " ".join(str(statement_line[i]) for i in q.supporting)
            out.append(f"{n} {q.text}\t{answer_text(q.answer)}\t{supporting}")
            n += 1
    return out


def write_babi(path, stories) -> None:
    with open(path, "w", newline="\n") as f:
        for story in stories:
            for line in babi_lines(story):
                f.write(line)
                f.write("\n")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    outputs: dict = field(default_factory=dict)
    duration_s: float = 0.0
    tool: str = TOOL_NAME
    version: str = ""
    created: str = ""

    def to_dict(self) -> dict:
        from . import __version__

        return {
            "tool": self.tool,
            "version": self.version or __version__,
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "outputs": dict(sorted(self.outputs.items())),
            "duration_s": round(self.duration_s, 3),
            "created": self.created
            or datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }

    def write(self, path) -> None:
        with open(path, "w", newline="\n") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=False)
            f.write("\n")
