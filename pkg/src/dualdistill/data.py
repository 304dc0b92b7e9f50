"""Corpus ingestion, labeled/unlabeled splitting, and a synthetic generator.

Corpora are JSON-lines files, one object per sentence, with token-level
entity spans given inclusively (TACRED-style). Splitting strips the gold
label off the unlabeled pool; the gold values stay behind an explicit
oracle accessor so the only code that can read them is the gold-label
upper-bound baseline and the generator's own self-checks.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .features import Instance

AUTO_NEGATIVE_NAMES = ("no_relation", "Other")


class CorpusParseError(ValueError):
    """A line in a corpus file is not valid JSON / misses required fields."""


class CorpusSchemaError(ValueError):
    """A corpus value violates the schema (e.g. unknown relation string)."""


@dataclass(frozen=True)
class LabelSet:
    names: tuple[str, ...]
    no_relation_index: int | None = None

    def __post_init__(self) -> None:
        if len(set(self.names)) != len(self.names):
            raise ValueError("relation names must be unique")
        if len(self.names) < 2:
            raise ValueError("need at least two relations")
        if self.no_relation_index is not None and not (
            0 <= self.no_relation_index < len(self.names)
        ):
            raise ValueError("no_relation_index out of range")

    def __len__(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise CorpusSchemaError(f"unknown relation string {name!r}") from None


@dataclass
class Corpus:
    label_set: LabelSet
    train: list[Instance]
    dev: list[Instance]
    test: list[Instance]


@dataclass
class DataSplit:
    """Labeled / unlabeled / dev / test partition for one experiment.

    ``unlabeled`` instances carry no relation; their gold labels live in a
    private map reachable only through :meth:`oracle_label`.
    """

    label_set: LabelSet
    labeled: list[Instance]
    unlabeled: list[Instance]
    dev: list[Instance]
    test: list[Instance]
    _oracle: dict[str, int] = field(default_factory=dict, repr=False)

    def oracle_label(self, instance_id: str) -> int:
        """Gold label of an unlabeled instance. Upper-bound baseline only."""
        return self._oracle[instance_id]


def load_jsonl(path: str | Path, label_set: LabelSet) -> list[Instance]:
    """Read instances in file order; spans convert to inclusive-exclusive."""
    path = Path(path)
    out: list[Instance] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                inst = Instance(
                    id=str(row["id"]),
                    tokens=list(row["token"]),
                    subj_span=(int(row["subj_start"]), int(row["subj_end"]) + 1),
                    obj_span=(int(row["obj_start"]), int(row["obj_end"]) + 1),
                    relation=None,
                )
                relation = row["relation"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusParseError(f"{path}:{lineno}: {exc}") from exc
            inst.relation = label_set.index_of(relation)
            out.append(inst)
    return out


def save_jsonl(path: str | Path, instances: list[Instance], label_set: LabelSet) -> None:
    """Inverse of :func:`load_jsonl`; every instance must carry a label."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(
                json.dumps(
                    {
                        "id": inst.id,
                        "token": inst.tokens,
                        "subj_start": inst.subj_span[0],
                        "subj_end": inst.subj_span[1] - 1,
                        "obj_start": inst.obj_span[0],
                        "obj_end": inst.obj_span[1] - 1,
                        "relation": label_set.names[inst.relation],
                    }
                )
                + "\n"
            )


def infer_label_set(instances: list[Instance] | None = None,
                    names: list[str] | None = None,
                    no_relation_label: str | None = None) -> LabelSet:
    """Label set from explicit names or from raw relation strings.

    Without an explicit negative label, any name matching the usual
    negative-class spellings is auto-detected.
    """
    if names is None:
        raise ValueError("names required")
    neg = None
    if no_relation_label is not None:
        neg = names.index(no_relation_label)
    else:
        for cand in AUTO_NEGATIVE_NAMES:
            if cand in names:
                neg = names.index(cand)
                break
    return LabelSet(names=tuple(names), no_relation_index=neg)


def _apportion(class_sizes: list[int], total: int) -> list[int]:
    """Largest-remainder split of ``total`` proportional to class sizes."""
    n = sum(class_sizes)
    ideal = [total * c / n for c in class_sizes]
    counts = [int(x) for x in ideal]
    remainders = sorted(
        range(len(class_sizes)), key=lambda i: (counts[i] - ideal[i], i)
    )
    for i in remainders[: total - sum(counts)]:
        counts[i] += 1
    return counts


def _stratified_take(
    by_class: dict[int, list[Instance]], total: int, rng: np.random.Generator
) -> tuple[list[Instance], dict[int, list[Instance]]]:
    if not by_class or total == 0:
        return [], dict(by_class)
    classes = sorted(by_class)
    counts = _apportion([len(by_class[c]) for c in classes], total)
    taken: list[Instance] = []
    rest: dict[int, list[Instance]] = {}
    for cls, k in zip(classes, counts):
        order = rng.permutation(len(by_class[cls]))
        taken.extend(by_class[cls][i] for i in sorted(order[:k]))
        rest[cls] = [by_class[cls][i] for i in sorted(order[k:])]
    return taken, rest


def make_split(
    corpus: Corpus, labeled_fraction: float, unlabeled_fraction: float, seed: int
) -> DataSplit:
    """Stratified-by-relation labeled/unlabeled sampling from the train pool.

    Dev and test pass through untouched. ``len(labeled)`` equals
    round(labeled_fraction * N) with per-class counts within one instance
    of exact proportionality; same for the unlabeled pool.
    """
    if not 0 < labeled_fraction <= 1 or unlabeled_fraction < 0:
        raise ValueError("labeled fraction must be in (0, 1], unlabeled >= 0")
    if labeled_fraction + unlabeled_fraction > 1 + 1e-12:
        raise ValueError("labeled_fraction + unlabeled_fraction must be <= 1")
    n = len(corpus.train)
    by_class: dict[int, list[Instance]] = {}
    for inst in corpus.train:
        by_class.setdefault(inst.relation, []).append(inst)

    rng = np.random.default_rng(seed)
    labeled, rest = _stratified_take(by_class, round(labeled_fraction * n), rng)
    remaining = {c: v for c, v in rest.items() if v}
    n_unlabeled = min(round(unlabeled_fraction * n), sum(len(v) for v in remaining.values()))
    unlabeled_gold, _ = _stratified_take(remaining, n_unlabeled, rng)

    seen = {inst.relation for inst in labeled}
    for cls in by_class:
        if cls not in seen:
            warnings.warn(
                f"class {corpus.label_set.names[cls]!r} has no labeled instances "
                "after stratified sampling",
                stacklevel=2,
            )

    oracle = {inst.id: inst.relation for inst in unlabeled_gold}
    unlabeled = [replace(inst, relation=None) for inst in unlabeled_gold]
    return DataSplit(
        label_set=corpus.label_set,
        labeled=labeled,
        unlabeled=unlabeled,
        dev=list(corpus.dev),
        test=list(corpus.test),
        _oracle=oracle,
    )


DATASET_PROFILES = {
    "semeval": {
        "train": 7199, "dev": 800, "test": 2715,
        "n_relations": 19, "no_relation_pct": 17.6,
    },
    "tacred": {
        "train": 68124, "dev": 22631, "test": 15509,
        "n_relations": 42, "no_relation_pct": 79.5,
    },
}


def validate_stats(corpus: Corpus, expected: dict | None = None) -> dict:
    """Corpus statistics, optionally compared against a dataset profile.

    Mismatches are reported in the returned dict, never raised.
    """
    counts = {"train": len(corpus.train), "dev": len(corpus.dev), "test": len(corpus.test)}
    neg = corpus.label_set.no_relation_index
    total = sum(counts.values())
    n_neg = (
        sum(
            1
            for part in (corpus.train, corpus.dev, corpus.test)
            for inst in part
            if inst.relation == neg
        )
        if neg is not None
        else 0
    )
    report = {
        "counts": counts,
        "n_relations": len(corpus.label_set),
        "no_relation_pct": round(100.0 * n_neg / total, 4) if total else 0.0,
        "mismatches": [],
        "ok": True,
    }
    if expected is not None:
        for key in ("train", "dev", "test"):
            if counts[key] != expected[key]:
                report["mismatches"].append(
                    {"field": key, "expected": expected[key], "actual": counts[key]}
                )
        if report["n_relations"] != expected["n_relations"]:
            report["mismatches"].append(
                {"field": "n_relations", "expected": expected["n_relations"],
                 "actual": report["n_relations"]}
            )
        if abs(report["no_relation_pct"] - expected["no_relation_pct"]) > 0.1:
            report["mismatches"].append(
                {"field": "no_relation_pct", "expected": expected["no_relation_pct"],
                 "actual": report["no_relation_pct"]}
            )
        report["ok"] = not report["mismatches"]
    return report


def generate_synthetic(
    num_classes: int,
    instances_per_class: int,
    vocab_size: int,
    noise_rate: float,
    seed: int,
    no_relation_share: float | None = None,
    triggers_per_class: int = 4,
) -> tuple[LabelSet, list[Instance]]:
    """Trigger-token relation corpus for desk-scale experiments.

    Every class (class 0 is the declared negative) owns a disjoint set of
    trigger tokens; each sentence carries three triggers of its class
    between random background tokens and two entity spans. With
    probability ``noise_rate`` a sentence additionally receives one
    trigger from one other class, which is what makes the corpus
    confusable. Setting ``no_relation_share`` oversamples the negative
    class to that share of the corpus while the positive classes keep
    ``instances_per_class``.
    """
    if num_classes < 2:
        raise ValueError("need at least two classes")
    if not 0 <= noise_rate < 0.5:
        raise ValueError("noise_rate must be in [0, 0.5)")
    if no_relation_share is not None and not 0 < no_relation_share < 1:
        raise ValueError("no_relation_share must be in (0, 1)")
    n_trigger = num_classes * triggers_per_class
    n_background = vocab_size - n_trigger
    if n_background < 20:
        raise ValueError(
            f"vocab_size {vocab_size} too small for {num_classes} disjoint trigger "
            f"sets of {triggers_per_class} (needs >= {n_trigger + 20})"
        )

    vocab = [f"tok{i:04d}" for i in range(vocab_size)]
    triggers = [
        vocab[c * triggers_per_class : (c + 1) * triggers_per_class]
        for c in range(num_classes)
    ]
    background = vocab[n_trigger:]
    names = ["no_relation"] + [f"rel_{c:02d}" for c in range(1, num_classes)]
    label_set = LabelSet(names=tuple(names), no_relation_index=0)

    per_class = [instances_per_class] * num_classes
    if no_relation_share is not None:
        n_pos = (num_classes - 1) * instances_per_class
        per_class[0] = round(no_relation_share / (1.0 - no_relation_share) * n_pos)

    rng = np.random.default_rng(seed)
    instances: list[Instance] = []
    for cls in range(num_classes):
        for _ in range(per_class[cls]):
            length = int(rng.integers(9, 16))
            tokens = [background[i] for i in rng.integers(0, n_background, size=length)]
            # Two disjoint 1-2 token entity spans.
            len1, len2 = (int(v) for v in rng.integers(1, 3, size=2))
            start1 = int(rng.integers(0, length - len1 - len2))
            start2 = int(rng.integers(start1 + len1, length - len2 + 1))
            spans = [(start1, start1 + len1), (start2, start2 + len2)]
            if rng.random() < 0.5:
                spans.reverse()
            subj_span, obj_span = spans

            free = [
                i
                for i in range(length)
                if not (subj_span[0] <= i < subj_span[1] or obj_span[0] <= i < obj_span[1])
            ]
            # Three own-class triggers against at most one injected foreign
            # trigger keeps noisy sentences classifiable in principle while
            # still teaching the wrong association to underfit models.
            k = min(3, len(free))
            slots = rng.permutation(len(free))
            for j in range(k):
                tokens[free[slots[j]]] = triggers[cls][int(rng.integers(0, triggers_per_class))]
            if rng.random() < noise_rate and len(free) > k:
                other = int(rng.integers(0, num_classes - 1))
                other += other >= cls
                tokens[free[slots[k]]] = triggers[other][
                    int(rng.integers(0, triggers_per_class))
                ]
            instances.append(
                Instance(
                    id=f"syn-{len(instances):05d}",
                    tokens=tokens,
                    subj_span=subj_span,
                    obj_span=obj_span,
                    relation=cls,
                )
            )
    order = rng.permutation(len(instances))
    return label_set, [instances[i] for i in order]


def split_corpus(
    label_set: LabelSet,
    instances: list[Instance],
    dev_fraction: float,
    test_fraction: float,
    seed: int,
) -> Corpus:
    """Stratified train/dev/test partition of a generated corpus."""
    if dev_fraction < 0 or test_fraction < 0 or dev_fraction + test_fraction >= 1:
        raise ValueError("dev and test fractions must be nonnegative and sum below 1")
    by_class: dict[int, list[Instance]] = {}
    for inst in instances:
        by_class.setdefault(inst.relation, []).append(inst)
    rng = np.random.default_rng(seed)
    n = len(instances)
    dev, rest = _stratified_take(by_class, round(dev_fraction * n), rng)
    test, rest = _stratified_take({c: v for c, v in rest.items() if v},
                                  round(test_fraction * n), rng)
    train = [inst for cls in sorted(rest) for inst in rest[cls]]
    return Corpus(label_set=label_set, train=train, dev=dev, test=test)
