"""Scoring of model predictions and benchmark agreement (concurrence).

QA scoring is exact string match after case folding and whitespace
normalization; list answers compare as ordered token lists.  Concurrence
between two benchmarks is the rank agreement (Kendall tau-b by default,
Pearson behind a flag) of the model scores they induce.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from scipy import stats


class ScoringError(Exception):
    pass


class UnresolvedId(ScoringError):
    pass


class DuplicatePrediction(ScoringError):
    pass


class ConstantColumn(ScoringError):
    pass


class TooFewModels(ScoringError):
    pass


def normalize_answer(answer) -> tuple:
    """Canonical token tuple: casefold, collapse whitespace, split commas."""
    if isinstance(answer, (list, tuple)):
        tokens = [str(t) for t in answer]
    else:
        tokens = str(answer).replace(",", " ").split()
    return tuple(t.casefold() for t in " ".join(tokens).split())


def _fscore(gold: set, predicted: set) -> tuple:
    if not gold and not predicted:
        return 1.0, 1.0, 1.0
    inter = len(gold & predicted)
    precision = inter / len(predicted) if predicted else 0.0
    recall = inter / len(gold) if gold else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return precision, recall, f1


def score(dataset_rows, prediction_rows) -> dict:
    """Exact-match accuracy overall and per question type.

    dataset_rows: story dicts as emitted in the dataset JSON Lines.
    prediction_rows: dicts {"id", "position", "answer"[, "supporting"]}.
    Every prediction must resolve to a unique question; duplicates and
    unknown ids are errors.  Supporting-fact P/R/F1 reported when any
    prediction carries a "supporting" list.
    """
    gold = {}
    for row in dataset_rows:
        for q in row["questions"]:
            key = (row["id"], q["position"])
            gold[key] = q
    seen = set()
    total = 0
    correct = 0
    by_qtype = {}
    support_scores = []
    for pred in prediction_rows:
        key = (pred["id"], pred["position"])
        if key not in gold:
            raise UnresolvedId(f"no question at {key}")
        if key in seen:
            raise DuplicatePrediction(f"duplicate prediction for {key}")
        seen.add(key)
        q = gold[key]
        hit = normalize_answer(pred["answer"]) == normalize_answer(q["answer"])
        total += 1
        correct += hit
        bucket = by_qtype.setdefault(q["qtype"], [0, 0])
        bucket[0] += hit
        bucket[1] += 1
        if "supporting" in pred and pred["supporting"] is not None:
            support_scores.append(
                _fscore(set(q["supporting"]), set(pred["supporting"]))
            )
    out = {
        "n_scored": total,
        "accuracy": correct / total if total else 0.0,
        "per_qtype": {
            k: {"accuracy": c / n, "n": n} for k, (c, n) in sorted(by_qtype.items())
        },
    }
    if support_scores:
        n = len(support_scores)
        out["supporting"] = {
            "precision": sum(s[0] for s in support_scores) / n,
            "recall": sum(s[1] for s in support_scores) / n,
            "f1": sum(s[2] for s in support_scores) / n,
        }
    return out


def concurrence(column_a, column_b, method: str = "kendall") -> float:
    """Agreement of two benchmarks' model scores, in [-1, 1].

    Columns are score sequences aligned by model.  Kendall tau-b handles
    ties via its tie correction; both columns must be non-constant.
    """
    a = [float(x) for x in column_a]
    b = [float(x) for x in column_b]
    if len(a) != len(b):
        raise ScoringError("columns must cover the same model set")
    if len(a) < 2:
        raise TooFewModels("concurrence needs at least 2 models")
    if len(set(a)) == 1 or len(set(b)) == 1:
        raise ConstantColumn("correlation undefined for a constant column")
    if method == "kendall":
        res = stats.kendalltau(a, b, variant="b")
    elif method == "pearson":
        res = stats.pearsonr(a, b)
    else:
        raise ValueError(f"unknown concurrence method {method!r}")
    return float(res[0])


@dataclass
class ScoreTable:
    """Rectangular model x task accuracy table."""

    models: list = field(default_factory=list)
    tasks: list = field(default_factory=list)
    values: dict = field(default_factory=dict)  # (model, task) -> accuracy

    def set(self, model: str, task: str, accuracy: float) -> None:
        if not (0.0 <= accuracy <= 1.0):
            raise ScoringError(f"accuracy out of range: {accuracy!r}")
        if model not in self.models:
            self.models.append(model)
        if task not in self.tasks:
            self.tasks.append(task)
        self.values[(model, task)] = accuracy

    def column(self, task: str) -> list:
        try:
            return [self.values[(m, task)] for m in self.models]
        except KeyError as e:
            raise ScoringError(f"table is not rectangular: missing {e}") from None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["model", "task", "accuracy"])
            for m in self.models:
                for t in self.tasks:
                    w.writerow([m, t, self.values[(m, t)]])

    @classmethod
    def from_csv(cls, path) -> "ScoreTable":
        table = cls()
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            for row in reader:
                table.set(row["model"], row["task"], float(row["accuracy"]))
        return table
