"""Iterative self-training loops that produce the two teacher models.

Each iteration retrains from scratch on the current labeled pool, ranks
the unlabeled pool by prediction confidence (two-model methods restrict
to instances where both argmax predictions agree), and moves the top
slice into the pool with hard pseudo-labels. Single-model methods are run
end-to-end once per seed so a pair of runs yields the pair of teachers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .data import DataSplit
from .distillation import TeacherPair
from .features import FeatureVector, Instance
from .hashing import mix_seed
from .metrics import Scores, score
from .model import (
    Model,
    ModelSpec,
    TrainConfig,
    TrainSample,
    init_model,
    predict_proba_batch,
    train,
)

SINGLE_MODEL_METHODS = ("self_training", "gold_oracle")
TWO_MODEL_METHODS = ("self_training_i", "re_ensemble")
METHODS = SINGLE_MODEL_METHODS + TWO_MODEL_METHODS


@dataclass(frozen=True)
class SslConfig:
    method: str = "self_training"
    iterations: int = 10
    selection_ratio: float = 0.10
    seeds: tuple[int, int] = (1, 2)
    confidence_floor: float = 0.0

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not 0 < self.selection_ratio <= 1:
            raise ValueError("selection_ratio must be in (0, 1]")
        if not 0 <= self.confidence_floor <= 1:
            raise ValueError("confidence_floor must be in [0, 1]")


@dataclass
class SslState:
    """End state of one loop: pools, final model(s), per-iteration history."""

    labeled_pool: list[tuple[Instance, int]]
    unlabeled_pool: list[Instance]
    models: list[Model]
    history: list[dict]
    stop_reason: str | None = None


def _pool_probs(
    models: Sequence[Model], pool: Sequence[Instance], features: Mapping[str, FeatureVector]
) -> list[np.ndarray]:
    feats = [features[inst.id] for inst in pool]
    return [predict_proba_batch(m, feats) for m in models]


def _select_from_probs(
    probs: list[np.ndarray],
    pool: Sequence[Instance],
    selection_ratio: float,
    confidence_floor: float,
) -> list[tuple[Instance, int, float]]:
    cap = math.ceil(selection_ratio * len(pool))
    if len(probs) == 1:
        labels = probs[0].argmax(axis=1)
        conf = probs[0].max(axis=1)
        candidates = range(len(pool))
    else:
        l1, l2 = probs[0].argmax(axis=1), probs[1].argmax(axis=1)
        labels = l1
        conf = (probs[0].max(axis=1) + probs[1].max(axis=1)) / 2.0
        candidates = np.flatnonzero(l1 == l2)
    ranked = sorted(
        (i for i in candidates if conf[i] >= confidence_floor),
        key=lambda i: (-conf[i], pool[i].id),
    )
    return [(pool[i], int(labels[i]), float(conf[i])) for i in ranked[:cap]]


def select_batch(
    models: Sequence[Model],
    unlabeled_pool: Sequence[Instance],
    selection_ratio: float,
    confidence_floor: float,
    *,
    features: Mapping[str, FeatureVector],
) -> list[tuple[Instance, int, float]]:
    """Pick up to ceil(ratio * |pool|) confident instances with pseudo-labels.

    One model: ranked by max probability. Two models: restricted to the
    argmax-agreement subset and ranked by the mean of the two max
    probabilities. Ties break on ascending instance id; anything below the
    confidence floor is never selected.
    """
    if not 0 < selection_ratio <= 1:
        raise ValueError("selection_ratio must be in (0, 1]")
    probs = _pool_probs(models, unlabeled_pool, features)
    return _select_from_probs(probs, unlabeled_pool, selection_ratio, confidence_floor)


def _train_on_pool(
    pool: Sequence[tuple[Instance, int]],
    spec: ModelSpec,
    n_classes: int,
    train_cfg: TrainConfig,
    features: Mapping[str, FeatureVector],
    init_seed: int,
    shuffle_seed: int,
) -> Model:
    samples = [TrainSample(features[inst.id], hard_label=lbl) for inst, lbl in pool]
    model = init_model(spec.arch, spec.dim, n_classes, init_seed, spec.hidden_size)
    return train(model, samples, replace(train_cfg, shuffle_seed=shuffle_seed))


def _dev_scores(
    model: Model, split: DataSplit, features: Mapping[str, FeatureVector]
) -> Scores:
    probs = _pool_probs([model], split.dev, features)[0]
    return score(
        [inst.relation for inst in split.dev], probs.argmax(axis=1), split.label_set
    )


def _run_loop(
    split: DataSplit,
    cfg: SslConfig,
    train_cfg: TrainConfig,
    spec: ModelSpec,
    features: Mapping[str, FeatureVector],
    model_seeds: Sequence[int],
    use_oracle_labels: bool,
) -> SslState:
    n_classes = len(split.label_set)
    labeled_pool = [(inst, inst.relation) for inst in split.labeled]
    unlabeled = list(split.unlabeled)

    def retrain(iteration: int) -> list[Model]:
        return [
            _train_on_pool(
                labeled_pool, spec, n_classes, train_cfg, features,
                init_seed=s,
                shuffle_seed=mix_seed(train_cfg.shuffle_seed, s, iteration),
            )
            for s in model_seeds
        ]

    models = retrain(0)
    history: list[dict] = []
    stop_reason = None
    for it in range(1, cfg.iterations + 1):
        if not unlabeled:
            stop_reason = "unlabeled pool exhausted"
            break
        pool_size = len(unlabeled)
        probs = _pool_probs(models, unlabeled, features)
        if len(models) == 2:
            agreement = float(
                (probs[0].argmax(axis=1) == probs[1].argmax(axis=1)).mean()
            )
        else:
            agreement = 1.0
        selected = _select_from_probs(
            probs, unlabeled, cfg.selection_ratio, cfg.confidence_floor
        )
        if not selected:
            stop_reason = "empty selection"
            break
        if use_oracle_labels:
            selected = [
                (inst, split.oracle_label(inst.id), conf) for inst, _, conf in selected
            ]
        chosen_ids = {inst.id for inst, _, _ in selected}
        labeled_pool.extend((inst, label) for inst, label, _ in selected)
        unlabeled = [inst for inst in unlabeled if inst.id not in chosen_ids]
        models = retrain(it)
        dev = _dev_scores(models[0], split, features)
        history.append(
            {
                "iteration": it,
                "pool_size": pool_size,
                "selected": len(selected),
                "agreement_rate": agreement,
                "dev_precision": dev.precision,
                "dev_recall": dev.recall,
                "dev_f1": dev.f1,
            }
        )
    return SslState(
        labeled_pool=labeled_pool,
        unlabeled_pool=unlabeled,
        models=models,
        history=history,
        stop_reason=stop_reason,
    )


def run_ssl(
    split: DataSplit,
    cfg: SslConfig,
    train_cfg: TrainConfig,
    spec: ModelSpec,
    features: Mapping[str, FeatureVector],
) -> tuple[list[SslState], TeacherPair]:
    """Run the configured base method and return its states plus teachers.

    Single-model methods execute the whole loop once per seed (two states,
    one teacher each); two-model methods run one loop holding both models.
    The gold_oracle method replaces every pseudo-label with the true label
    via the split's oracle accessor.
    """
    if not split.labeled:
        raise ValueError("labeled pool is empty")
    if cfg.method in SINGLE_MODEL_METHODS:
        oracle = cfg.method == "gold_oracle"
        states = [
            _run_loop(split, cfg, train_cfg, spec, features, [seed], oracle)
            for seed in cfg.seeds
        ]
        pair = TeacherPair(states[0].models[0], states[1].models[0])
    else:
        states = [
            _run_loop(split, cfg, train_cfg, spec, features, list(cfg.seeds), False)
        ]
        pair = TeacherPair(states[0].models[0], states[0].models[1])
    return states, pair
