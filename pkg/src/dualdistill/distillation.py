"""Two-teacher distillation: consensus partition, teaching data, student.

The teachers' predictions over the unlabeled pool split it into the
agreement (intersection) and disagreement (difference) sets. Teaching
data is the original labeled set plus the intersection with its consensus
labels as extra hard labels; both teachers' logits are frozen onto every
sample so the student can additionally match their temperature-softened
distributions. Difference-set samples carry teacher logits only and enter
the objective purely through the soft term. Teachers are never updated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .data import DataSplit
from .features import FeatureVector, Instance
from .losses import softmax
from .model import Model, TrainConfig, TrainSample, forward, init_model, train


@dataclass(frozen=True)
class TeacherPair:
    t1: Model
    t2: Model

    def __post_init__(self) -> None:
        a, b = self.t1, self.t2
        if (a.arch, a.dim, a.n_classes) != (b.arch, b.dim, b.n_classes):
            raise ValueError("teachers must share arch, dim and class count")

    @property
    def models(self) -> tuple[Model, Model]:
        return (self.t1, self.t2)


@dataclass
class Partition:
    """Consensus split of the examined pool; the two lists are disjoint by
    id and cover the pool exactly."""

    intersection: list[tuple[Instance, int]]
    difference: list[Instance]


@dataclass
class TeachingData:
    """Student training set with per-sample provenance.

    ``origins[i]`` is "L" (labeled), "I" (intersection, consensus
    pseudo-label) or "diff" (difference set, soft labels only).
    """

    samples: list[TrainSample]
    origins: list[str]
    instance_ids: list[str]
    temperature: float


def partition_predictions(
    teachers: TeacherPair,
    pool: list[Instance],
    *,
    features: Mapping[str, FeatureVector],
) -> Partition:
    """Split ``pool`` by whether the two teachers' argmax predictions agree."""
    intersection: list[tuple[Instance, int]] = []
    difference: list[Instance] = []
    for inst in pool:
        z1 = forward(teachers.t1, features[inst.id])
        z2 = forward(teachers.t2, features[inst.id])
        l1, l2 = int(np.argmax(z1)), int(np.argmax(z2))
        if l1 == l2:
            intersection.append((inst, l1))
        else:
            difference.append(inst)
    return Partition(intersection=intersection, difference=difference)


def build_teaching_data(
    split: DataSplit,
    partition: Partition,
    teachers: TeacherPair,
    temperature: float,
    include_difference: bool = True,
    *,
    features: Mapping[str, FeatureVector],
) -> TeachingData:
    """Assemble the student's training set with frozen teacher logits.

    Hard labels: gold for the labeled set, consensus predictions for the
    intersection. Difference-set samples (no hard label) are appended when
    ``include_difference`` is on.
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    samples: list[TrainSample] = []
    origins: list[str] = []
    ids: list[str] = []

    def add(inst: Instance, label: int | None, origin: str) -> None:
        fv = features[inst.id]
        logits = [forward(t, fv) for t in teachers.models]
        samples.append(TrainSample(features=fv, hard_label=label, teacher_logits=logits))
        origins.append(origin)
        ids.append(inst.id)

    for inst in split.labeled:
        add(inst, inst.relation, "L")
    for inst, label in partition.intersection:
        add(inst, label, "I")
    if include_difference:
        for inst in partition.difference:
            add(inst, None, "diff")
    return TeachingData(samples=samples, origins=origins, instance_ids=ids,
                        temperature=temperature)


def hard_label_view(teaching: TeachingData) -> list[TrainSample]:
    """Hard-labeled samples only, with teacher logits stripped.

    The reference set for checks that a soft-term-free training run is
    identical to plain supervised training on the same data.
    """
    return [
        replace(s, teacher_logits=None)
        for s in teaching.samples
        if s.hard_label is not None
    ]


def single_teacher_view(teaching: TeachingData, teacher_index: int) -> TeachingData:
    """Same teaching data with only one teacher's logits kept."""
    samples = [
        replace(s, teacher_logits=[s.teacher_logits[teacher_index]])
        for s in teaching.samples
    ]
    return replace(teaching, samples=samples)


def train_student(
    teaching: TeachingData,
    arch: str,
    lam: float,
    temperature: float,
    opt: TrainConfig,
    student_seed: int,
    hidden_size: int = 64,
) -> Model:
    """Train a fresh student of the teachers' architecture on the teaching
    data under the mixed objective; the returned model is the one used for
    test prediction."""
    if not teaching.samples:
        raise ValueError("empty teaching data")
    first = teaching.samples[0]
    dim = first.features.dim
    n_classes = len(first.teacher_logits[0])
    student = init_model(arch, dim, n_classes, student_seed, hidden_size)
    return train(student, teaching.samples, opt, lam=lam, temperature=temperature)


def export_teaching_data(teaching: TeachingData, path: str | Path) -> None:
    """Audit dump: one JSON line per sample with origin, hard label and the
    teachers' softened distributions at the stored temperature."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for sample, origin, inst_id in zip(
            teaching.samples, teaching.origins, teaching.instance_ids
        ):
            fh.write(
                json.dumps(
                    {
                        "id": inst_id,
                        "origin": origin,
                        "hard_label": sample.hard_label,
                        "teacher_soft_labels": [
                            softmax(z, teaching.temperature).tolist()
                            for z in sample.teacher_logits
                        ],
                    }
                )
                + "\n"
            )
