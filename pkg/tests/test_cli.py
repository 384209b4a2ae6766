import json
import subprocess
import sys

import pytest

from microworld.cli import main
from microworld.dataset_io import babi_lines, file_digest, read_jsonl
from microworld.taskgen import Question, Story, TaskSpec, build_world
from microworld.world import Move, Statement


BASE_CONFIG = {
    "specs": [
        {
            "agents": 2,
            "objects": 1,
            "locations": 3,
            "story_length": 8,
            "questions_per_story": 2,
            "coref_rate": 0.2,
        }
    ],
    "total": 12,
}


def write_config(tmp_path, config=None, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(config or BASE_CONFIG))
    return str(path)


def run_cli(*argv):
    return main(list(argv))


def test_gen_writes_dataset_and_manifest(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert run_cli("gen", cfg, "--seed", "5", "--out", str(out)) == 0
    rows = read_jsonl(out / "dataset.jsonl")
    assert len(rows) == 12
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "gen" and manifest["seed"] == 5
    assert manifest["outputs"]["dataset.jsonl"] == file_digest(out / "dataset.jsonl")


def test_gen_deterministic_across_runs_and_jobs(tmp_path):
    cfg = write_config(tmp_path)
    digests = set()
    for i, jobs in enumerate(("1", "1", "4")):
        out = tmp_path / f"out{i}"
        run_cli("gen", cfg, "--seed", "5", "--out", str(out), "--jobs", jobs,
                "--breakpoints", "--plausibility")
        digests.add(
            (
                file_digest(out / "dataset.jsonl"),
                file_digest(out / "dataset.breakpoints.jsonl"),
                file_digest(out / "dataset.plausibility.jsonl"),
            )
        )
    assert len(digests) == 1


def test_gen_from_manifest_reproduces(tmp_path):
    cfg = write_config(tmp_path)
    out1 = tmp_path / "a"
    run_cli("gen", cfg, "--seed", "9", "--out", str(out1))
    out2 = tmp_path / "b"
    run_cli("gen", str(out1 / "manifest.json"), "--seed", "9", "--out", str(out2))
    assert file_digest(out1 / "dataset.jsonl") == file_digest(out2 / "dataset.jsonl")


def test_gen_config_errors_exit_2(tmp_path):
    missing = tmp_path / "nope.json"
    with pytest.raises(SystemExit) as exc:
        run_cli("gen", str(missing), "--out", str(tmp_path / "x"))
    assert exc.value.code == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SystemExit) as exc:
        run_cli("gen", str(bad), "--out", str(tmp_path / "x"))
    assert exc.value.code == 2
    cfg = write_config(tmp_path, {"specs": [{"agents": 0}], "total": 5})
    with pytest.raises(SystemExit) as exc:
        run_cli("gen", cfg, "--out", str(tmp_path / "x"))
    assert exc.value.code == 2


def test_gen_signature_overlap_exit_3(tmp_path):
    spec = {
        "agents": 2,
        "objects": 1,
        "locations": 3,
        "story_length": 6,
        "allowed_statement_variants": ["move", "grab"],
    }
    cfg = write_config(
        tmp_path,
        {"specs": [spec], "test_specs": [spec], "sizes": {"train": 4, "test": 2}},
    )
    with pytest.raises(SystemExit) as exc:
        run_cli("gen", cfg, "--splits", "compositional", "--out", str(tmp_path / "x"))
    assert exc.value.code == 3


def test_gen_splits_compositional(tmp_path):
    cfg = write_config(
        tmp_path,
        {
            "specs": [
                {"agents": 2, "objects": 1, "locations": 3, "story_length": 6,
                 "allowed_statement_variants": ["move", "grab"]},
            ],
            "test_specs": [
                {"agents": 2, "objects": 1, "locations": 3, "story_length": 6,
                 "allowed_statement_variants": ["move", "drop", "grab"]},
            ],
            "sizes": {"train": 6, "test": 3},
        },
    )
    out = tmp_path / "out"
    assert run_cli("gen", cfg, "--splits", "compositional", "--out", str(out)) == 0
    train = read_jsonl(out / "train.jsonl")
    test = read_jsonl(out / "test.jsonl")
    assert len(train) == 6 and len(test) == 3
    train_sigs = {frozenset(r["signature"]) for r in train}
    for row in test:
        assert frozenset(row["signature"]) not in train_sigs


def test_babi_export_golden():
    spec = TaskSpec(agents=2, objects=1, locations=3, story_length=3)
    world = build_world(spec)
    story = Story(
        id="story-000000",
        spec=spec,
        world=world,
        statements=[
            Statement(Move("mary", "kitchen"), 0),
            Statement(Move("john", "garden"), 1),
            Statement(Move("mary", "office"), 2),
        ],
        sentences=[
            "Mary travelled to the kitchen.",
            "John travelled to the garden.",
            "Mary travelled to the office.",
        ],
        questions=[
            Question("where_agent", {"agent": "mary"}, 1, "kitchen", (0,), "Where is Mary?"),
            Question("list", {"agent": "john"}, 2, "nothing", (), "What is John carrying?"),
        ],
    )
    assert babi_lines(story) == [
        "1 Mary travelled to the kitchen.",
        "2 John travelled to the garden.",
        "3 Where is Mary?\tkitchen\t1",
        "4 Mary travelled to the office.",
        "5 What is John carrying?\tnothing\t",
    ]


def test_babi_format_cli(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    run_cli("gen", cfg, "--seed", "2", "--out", str(out), "--format", "babi")
    text = (out / "dataset.txt").read_text()
    assert text.endswith("\n")
    first = text.splitlines()[0]
    assert first.startswith("1 ")
    # every story restarts numbering at 1
    ones = [l for l in text.splitlines() if l.startswith("1 ")]
    assert len(ones) == 12


def test_eval_gold_as_predictions(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    run_cli("gen", cfg, "--seed", "3", "--out", str(out), "--breakpoints")
    rows = read_jsonl(out / "dataset.jsonl")
    preds = [
        {"id": r["id"], "position": q["position"], "answer": q["answer"],
         "supporting": q["supporting"]}
        for r in rows
        for q in r["questions"]
    ]
    pred_path = tmp_path / "preds.jsonl"
    pred_path.write_text("".join(json.dumps(p) + "\n" for p in preds))
    csv_path = tmp_path / "scores.csv"
    assert run_cli(
        "eval",
        "--dataset", str(out / "dataset.jsonl"),
        "--predictions", str(pred_path),
        "--csv", str(csv_path),
    ) == 0
    report = capsys.readouterr().out
    assert "accuracy: 1.0000" in report
    assert "overall,accuracy,1.0" in csv_path.read_text()


def test_eval_breakpoint_grids(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    run_cli("gen", cfg, "--seed", "3", "--out", str(out), "--breakpoints")
    gold = read_jsonl(out / "dataset.breakpoints.jsonl")
    pred_path = tmp_path / "bp_preds.jsonl"
    pred_path.write_text(
        "".join(json.dumps({"id": r["id"], "labels": r["labels"]}) + "\n" for r in gold)
    )
    assert run_cli(
        "eval",
        "--dataset", str(out / "dataset.jsonl"),
        "--predictions", str(pred_path),
        "--breakpoints-gold", str(out / "dataset.breakpoints.jsonl"),
    ) == 0
    out_text = capsys.readouterr().out
    assert "breakpoint accuracy: 1.0000" in out_text


def test_eval_unresolved_exit_2(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    run_cli("gen", cfg, "--seed", "3", "--out", str(out))
    pred_path = tmp_path / "preds.jsonl"
    pred_path.write_text(json.dumps({"id": "story-999999", "position": 0, "answer": "x"}) + "\n")
    with pytest.raises(SystemExit) as exc:
        run_cli("eval", "--dataset", str(out / "dataset.jsonl"), "--predictions", str(pred_path))
    assert exc.value.code == 2


def test_concur_cli(tmp_path, capsys):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    rows = ["model,task,accuracy"] + [f"m{i},t,{v}" for i, v in enumerate((0.9, 0.5, 0.7))]
    a.write_text("\n".join(rows) + "\n")
    b.write_text("\n".join(rows) + "\n")
    run_cli("concur", "--tables", str(a), str(b))
    assert "concurrence (kendall): 1.000000" in capsys.readouterr().out
    reversed_rows = ["model,task,accuracy"] + [
        f"m{i},t,{v}" for i, v in enumerate((0.1, 0.8, 0.4))
    ]
    c = tmp_path / "c.csv"
    c.write_text("\n".join(reversed_rows) + "\n")
    run_cli("concur", "--tables", str(a), str(c))
    out = capsys.readouterr().out
    assert "concurrence (kendall): -1.000000" in out


def test_replay_cli_round_trip(tmp_path, capsys):
    world_doc = {
        "world": {
            "agents": ["mary"],
            "locations": ["kitchen", "garden"],
            "objects": ["apple"],
        },
        "initial": {
            "agent_location": {"mary": "kitchen"},
            "object_place": {"apple": "kitchen"},
        },
    }
    world_path = tmp_path / "world.json"
    world_path.write_text(json.dumps(world_doc))
    program = tmp_path / "program.txt"
    program.write_text("grab(mary, apple)\nmove(mary, garden)\n")
    assert run_cli("replay", "--program", str(program), "--world", str(world_path)) == 0
    digest = capsys.readouterr().out.strip()
    assert len(digest) == 64

    bad = tmp_path / "bad.txt"
    bad.write_text("drop(mary, apple)\n")
    with pytest.raises(SystemExit) as exc:
        run_cli("replay", "--program", str(bad), "--world", str(world_path))
    assert exc.value.code == 4


def test_inspect_cli(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    run_cli("gen", cfg, "--seed", "4", "--out", str(out))
    assert run_cli("inspect", "--dataset", str(out / "dataset.jsonl"), "--id", "story-000003") == 0
    text = capsys.readouterr().out
    assert "story story-000003" in text
    assert "breakpoint grid" in text
    with pytest.raises(SystemExit) as exc:
        run_cli("inspect", "--dataset", str(out / "dataset.jsonl"), "--id", "story-9")
    assert exc.value.code == 2


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "microworld.cli", "--version"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.strip()
