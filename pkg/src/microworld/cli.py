"""Command line entry point: gen, eval, concur, serve, replay, inspect.

Exit codes are a stable contract: 0 success, 2 usage/config errors,
3 generation constraint violations, 4 replay precondition violations.
All randomness of one invocation flows from a single --seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import __version__, breakpoints, dataset_io, scoring, taskgen
from .session import replay_program
from .world import PreconditionViolation, World, WorldState

EXIT_CONFIG = 2
EXIT_GENERATION = 3
EXIT_REPLAY = 4


def _fail(code: int, message: str):
    print(f"error: {message}", file=sys.stderr)
    raise SystemExit(code)


def _load_json(path, what: str) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError:
        _fail(EXIT_CONFIG, f"{what} not found: {path}")
    except json.JSONDecodeError as e:
        _fail(EXIT_CONFIG, f"{what} {path} is not valid JSON: line {e.lineno}: {e.msg}")


def _parse_specs(raw, field: str) -> list:
    specs = []
    for i, d in enumerate(raw):
        try:
            specs.append(taskgen.TaskSpec.from_dict(d))
        except (ValueError, TypeError) as e:
            _fail(EXIT_CONFIG, f"config field {field}[{i}]: {e}")
    return specs


def _plan_from_config(config: dict, splits_mode: str | None):
    """Resolve a gen config into an ordered list of StoryTask plus split sizes."""
    if "specs" not in config or not config["specs"]:
        _fail(EXIT_CONFIG, "config needs a non-empty 'specs' list")
    specs = _parse_specs(config["specs"], "specs")
    test_specs = _parse_specs(config.get("test_specs", []), "test_specs")
    if splits_mode:
        sizes = config.get("sizes")
        if not sizes or "train" not in sizes or "test" not in sizes:
            _fail(EXIT_CONFIG, "--splits needs config 'sizes': {'train': n, 'test': m}")
        try:
            train_tasks, test_tasks = taskgen.plan_splits(
                specs,
                test_specs or specs,
                splits_mode,
                (int(sizes["train"]), int(sizes["test"])),
            )
        except taskgen.SignatureOverlap as e:
            _fail(EXIT_GENERATION, f"SignatureOverlap: {e}")
        except ValueError as e:
            _fail(EXIT_CONFIG, str(e))
        return train_tasks, test_tasks
    total = int(config.get("total", 0))
    if total <= 0:
        _fail(EXIT_CONFIG, "config needs 'total' > 0 (or use --splits with 'sizes')")
    weights = config.get("weights")
    if weights:
        try:
            tasks = taskgen.plan_mixture(specs, total, weights, config.get("seed", 0))
        except ValueError as e:
            _fail(EXIT_CONFIG, str(e))
    else:
        tasks = taskgen.plan_block(specs, total, "gen")
    return tasks, None


def _story_payload(args):
    """Worker: realize one planned story and serialize everything it feeds."""
    task, seed, want_babi, want_bp, want_pl, spec_json = args
    story = taskgen.realize_task(task, seed)
    row = dataset_io.story_row_json(story, spec_json)
    babi = (
        "".join(line + "\n" for line in dataset_io.babi_lines(story))
        if want_babi
        else None
    )
    bp = (
        json.dumps(breakpoints.annotate(story).to_dict(), separators=(",", ":"))
        if want_bp
        else None
    )
    pl = None
    if want_pl:
        plausible = bool(taskgen.derive_seed(seed, "plmode", story.id) & 1)
        try:
            instance = breakpoints.inject_implausibility(
                story, seed, plausible=plausible
            )
        except breakpoints.NoInjectionSite:
            instance = breakpoints.inject_implausibility(story, seed, plausible=True)
        pl = json.dumps(instance.to_dict(), separators=(",", ":"))
    return row, babi, bp, pl


def _realize_payloads(tasks, seed, want_babi, want_bp, want_pl, jobs: int):
    spec_jsons = {}
    args = []
    for task in tasks:
        fp = task.spec.fingerprint()
        if fp not in spec_jsons:
            spec_jsons[fp] = json.dumps(task.spec.to_dict(), separators=(",", ":"))
        args.append((task, seed, want_babi, want_bp, want_pl, spec_jsons[fp]))
    if jobs <= 1:
        return [_story_payload(a) for a in args]
    import multiprocessing

    with multiprocessing.Pool(jobs) as pool:
        return pool.map(_story_payload, args, chunksize=64)


def cmd_gen(ns) -> int:
    started = time.perf_counter()
    config = _load_json(ns.config, "config file")
    if "config" in config and "outputs" in config:
        config = config["config"]  # a manifest was passed; reuse its config
    seed = ns.seed if ns.seed is not None else int(config.get("seed", 0))
    os.makedirs(ns.out, exist_ok=True)

    planned = _plan_from_config(config, ns.splits)
    try:
        payload_sets = {}
        if ns.splits:
            train_tasks, test_tasks = planned
            payload_sets["train"] = _realize_payloads(
                train_tasks, seed, ns.format == "babi", ns.breakpoints, ns.plausibility, ns.jobs
            )
            payload_sets["test"] = _realize_payloads(
                test_tasks, seed, ns.format == "babi", ns.breakpoints, ns.plausibility, ns.jobs
            )
        else:
            tasks, _ = planned
            payload_sets["dataset"] = _realize_payloads(
                tasks, seed, ns.format == "babi", ns.breakpoints, ns.plausibility, ns.jobs
            )
    except taskgen.GenerationExhausted as e:
        _fail(EXIT_GENERATION, f"GenerationExhausted: {e}")

    outputs = {}

    def emit(name: str, payloads):
        if ns.format == "babi":
            path = os.path.join(ns.out, f"{name}.txt")
            with open(path, "w", newline="\n") as f:
                for _row, babi, _bp, _pl in payloads:
                    f.write(babi)
            outputs[f"{name}.txt"] = dataset_io.file_digest(path)
        else:
            path = os.path.join(ns.out, f"{name}.jsonl")
            dataset_io.write_jsonl(path, (row for row, _b, _bp, _pl in payloads))
            outputs[f"{name}.jsonl"] = dataset_io.file_digest(path)
        if ns.breakpoints:
            path = os.path.join(ns.out, f"{name}.breakpoints.jsonl")
            dataset_io.write_jsonl(path, (bp for _r, _b, bp, _pl in payloads))
            outputs[f"{name}.breakpoints.jsonl"] = dataset_io.file_digest(path)
        if ns.plausibility:
            path = os.path.join(ns.out, f"{name}.plausibility.jsonl")
            dataset_io.write_jsonl(path, (pl for _r, _b, _bp, pl in payloads))
            outputs[f"{name}.plausibility.jsonl"] = dataset_io.file_digest(path)

    for name, payloads in payload_sets.items():
        emit(name, payloads)

    manifest = dataset_io.RunManifest(
        command="gen",
        config=config,
        seed=seed,
        outputs=outputs,
        duration_s=time.perf_counter() - started,
    )
    manifest.write(os.path.join(ns.out, "manifest.json"))
    total = sum(len(p) for p in payload_sets.values())
    print(f"wrote {total} stories to {ns.out} ({', '.join(sorted(outputs))})")
    return 0


def cmd_eval(ns) -> int:
    started = time.perf_counter()
    dataset = dataset_io.read_jsonl(ns.dataset)
    predictions = dataset_io.read_jsonl(ns.predictions)
    qa_preds = [p for p in predictions if "labels" not in p]
    grid_preds = [p for p in predictions if "labels" in p]
    outputs = {}
    rows = []
    if qa_preds:
        try:
            report = scoring.score(dataset, qa_preds)
        except scoring.ScoringError as e:
            _fail(EXIT_CONFIG, str(e))
        print(f"questions scored: {report['n_scored']}")
        print(f"accuracy: {report['accuracy']:.4f}")
        rows.append(("overall", "accuracy", report["accuracy"]))
        for qtype, r in report["per_qtype"].items():
            print(f"  {qtype:>14}: {r['accuracy']:.4f}  (n={r['n']})")
            rows.append((qtype, "accuracy", r["accuracy"]))
        if "supporting" in report:
            s = report["supporting"]
            print(
                "supporting facts: "
                f"P={s['precision']:.4f} R={s['recall']:.4f} F1={s['f1']:.4f}"
            )
            for k in ("precision", "recall", "f1"):
                rows.append(("supporting", k, s[k]))
    if ns.breakpoints_gold:
        gold_rows = dataset_io.read_jsonl(ns.breakpoints_gold)
        try:
            bp_report = breakpoints.score_breakpoint_files(gold_rows, grid_preds)
        except (breakpoints.ShapeMismatch, scoring.ScoringError) as e:
            _fail(EXIT_CONFIG, str(e))
        print(f"breakpoint accuracy: {bp_report['accuracy']:.4f}")
        print(f"breakpoint macro-F1: {bp_report['macro_f1']:.4f}")
        rows.append(("breakpoints", "accuracy", bp_report["accuracy"]))
        rows.append(("breakpoints", "macro_f1", bp_report["macro_f1"]))
    if ns.csv:
        with open(ns.csv, "w", newline="\n") as f:
            f.write("task,metric,value\n")
            for task, metric, value in rows:
                f.write(f"{task},{metric},{value}\n")
        outputs[os.path.basename(ns.csv)] = dataset_io.file_digest(ns.csv)
        manifest = dataset_io.RunManifest(
            command="eval",
            config={"dataset": ns.dataset, "predictions": ns.predictions},
            seed=0,
            outputs=outputs,
            duration_s=time.perf_counter() - started,
        )
        manifest.write(ns.csv + ".manifest.json")
    return 0


def cmd_concur(ns) -> int:
    path_a, path_b = ns.tables
    a = scoring.ScoreTable.from_csv(path_a)
    b = scoring.ScoreTable.from_csv(path_b)
    if a.models != b.models:
        _fail(EXIT_CONFIG, "score tables must cover the same models in the same order")
    try:
        col_a = [_mean_row(a, m) for m in a.models]
        col_b = [_mean_row(b, m) for m in b.models]
        value = scoring.concurrence(col_a, col_b, method=ns.method)
    except scoring.ScoringError as e:
        _fail(EXIT_CONFIG, str(e))
    print(f"concurrence ({ns.method}): {value:.6f}")
    return 0


def _mean_row(table: scoring.ScoreTable, model: str) -> float:
    vals = [table.values[(model, t)] for t in table.tasks]
    return sum(vals) / len(vals)


def cmd_serve(ns) -> int:
    import uvicorn

    from .service import create_app

    host, _, port = ns.addr.rpartition(":")
    app = create_app(data_dir=ns.data_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    return 0


def cmd_replay(ns) -> int:
    world_doc = _load_json(ns.world, "world file")
    try:
        world = World.from_dict(world_doc["world"])
        initial = WorldState.from_dict(world_doc["initial"])
        world.validate_state(initial)
    except Exception as e:
        _fail(EXIT_CONFIG, f"bad world file: {e}")
    try:
        with open(ns.program) as f:
            lines = f.readlines()
    except FileNotFoundError:
        _fail(EXIT_CONFIG, f"program not found: {ns.program}")
    from .session import state_digest

    try:
        final = replay_program(world, initial, lines)
    except PreconditionViolation as e:
        _fail(EXIT_REPLAY, f"replay violation at {e.statement}: {e.reason}")
    except ValueError as e:
        _fail(EXIT_CONFIG, str(e))
    print(state_digest(final))
    return 0


def cmd_inspect(ns) -> int:
    rows = dataset_io.read_jsonl(ns.dataset)
    row = next((r for r in rows if r["id"] == ns.id), None)
    if row is None:
        _fail(EXIT_CONFIG, f"no story with id {ns.id!r} in {ns.dataset}")
    story = dataset_io.story_from_row(row)
    print(f"story {story.id}  (signature: {', '.join(sorted(story.signature()))})")
    questions_at = {}
    for q in story.questions:
        questions_at.setdefault(q.position, []).append(q)
    for t, sentence in enumerate(story.sentences):
        print(f"  {t:>3}  {sentence}")
        for q in questions_at.get(t, ()):
            answer = dataset_io.answer_text(q.answer)
            supp = ",".join(str(i) for i in q.supporting)
            print(f"       ? {q.text}  ->  {answer}   [support: {supp or '-'}]")
    grid = breakpoints.annotate(story)
    print("\nbreakpoint grid (rows = after sentence t, columns = propositions):")
    width = max(len(breakpoints.proposition_to_str(p)) for p in grid.universe)
    for k, prop in enumerate(grid.universe):
        cells = "".join(row[k].code for row in grid.labels)
        print(f"  {breakpoints.proposition_to_str(prop):<{width}}  {cells}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microworld",
        description="Micro-world story benchmark generator and annotation service",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a dataset (plus optional annotations)")
    g.add_argument("config", help="JSON config (or a previous manifest.json)")
    g.add_argument("--seed", type=int, default=None, help="root seed (overrides config)")
    g.add_argument("--out", default="out", help="output directory")
    g.add_argument("--format", choices=("jsonl", "babi"), default="jsonl")
    g.add_argument("--splits", choices=("iid", "compositional"), default=None)
    g.add_argument("--breakpoints", action="store_true", help="emit label grids")
    g.add_argument("--plausibility", action="store_true", help="emit bug instances")
    g.add_argument("--jobs", type=int, default=1, help="parallel workers")
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("eval", help="score predictions against a dataset")
    e.add_argument("--dataset", required=True)
    e.add_argument("--predictions", required=True)
    e.add_argument("--breakpoints-gold", dest="breakpoints_gold", default=None)
    e.add_argument("--csv", default=None, help="also write metrics as CSV")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("concur", help="benchmark agreement between two score tables")
    c.add_argument("--tables", nargs=2, required=True, metavar=("A", "B"))
    c.add_argument("--method", choices=("kendall", "pearson"), default="kendall")
    c.set_defaults(func=cmd_concur)

    s = sub.add_parser("serve", help="run the annotation session service")
    s.add_argument("--addr", default="127.0.0.1:8470")
    s.add_argument("--data-dir", dest="data_dir", default=None)
    s.set_defaults(func=cmd_serve)

    r = sub.add_parser("replay", help="replay an exported program")
    r.add_argument("--program", required=True)
    r.add_argument("--world", required=True, help="JSON with 'world' and 'initial'")
    r.set_defaults(func=cmd_replay)

    i = sub.add_parser("inspect", help="pretty-print one story with its label grid")
    i.add_argument("--dataset", required=True)
    i.add_argument("--id", required=True)
    i.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    return ns.func(ns)


if __name__ == "__main__":
    sys.exit(main())
