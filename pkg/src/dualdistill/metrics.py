"""Micro precision / recall / F1 scoring and prediction dumps.

When the label set declares a negative class, positives are all other
labels: predicted positives are predictions != negative, gold positives
are gold != negative, and a prediction counts as correct only on an exact
label match. Without a declared negative, the score degenerates to plain
accuracy (P = R = F1). Empty denominators score 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import LabelSet


@dataclass(frozen=True)
class Scores:
    precision: float
    recall: float
    f1: float
    n_gold_positive: int
    n_pred_positive: int
    n_correct_positive: int

    def as_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "n_gold_positive": self.n_gold_positive,
            "n_pred_positive": self.n_pred_positive,
            "n_correct_positive": self.n_correct_positive,
        }


def score(gold: Sequence[int], pred: Sequence[int], label_set: LabelSet) -> Scores:
    if len(gold) != len(pred):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(pred)} predictions")
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    neg = label_set.no_relation_index
    if neg is None:
        correct = int((gold == pred).sum())
        total = len(gold)
        acc = correct / total if total else 0.0
        return Scores(acc, acc, acc, total, total, correct)
    gold_pos = gold != neg
    pred_pos = pred != neg
    n_correct = int((gold_pos & pred_pos & (gold == pred)).sum())
    n_gold = int(gold_pos.sum())
    n_pred = int(pred_pos.sum())
    p = n_correct / n_pred if n_pred else 0.0
    r = n_correct / n_gold if n_gold else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return Scores(p, r, f1, n_gold, n_pred, n_correct)


def dump_predictions(
    path: str | Path,
    ids: Sequence[str],
    gold: Sequence[int],
    probs: Sequence[np.ndarray],
    label_set: LabelSet,
    top_k: int = 3,
) -> None:
    """Per-instance JSONL dump: gold, argmax, and the top-k labels."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for inst_id, g, p in zip(ids, gold, probs):
            p = np.asarray(p)
            top = np.argsort(-p, kind="stable")[:top_k]
            fh.write(
                json.dumps(
                    {
                        "id": inst_id,
                        "gold": label_set.names[g],
                        "pred": label_set.names[int(top[0])],
                        "top": [
                            {"label": label_set.names[int(i)], "prob": float(p[i])}
                            for i in top
                        ],
                    }
                )
                + "\n"
            )
