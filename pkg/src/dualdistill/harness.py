"""Experiment orchestration: ablation variants, seed statistics, landscapes.

Each variant fixes one way of going from a data split to a scored test
model; seeds run as independent jobs on a bounded worker pool and are
merged into a RunReport with mean/std statistics. The loss-landscape grid
evaluates a model's loss over a 2-D slice of parameter space spanned by
two random directions normalized per output unit.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats as scipy_stats

from .config import ExperimentConfig
from .data import DataSplit
from .distillation import (
    TeachingData,
    build_teaching_data,
    partition_predictions,
    single_teacher_view,
    train_student,
)
from .features import FeatureVector, featurize_all
from .hashing import mix_seed
from .metrics import Scores, score
from .model import (
    Model,
    ModelSpec,
    TrainConfig,
    TrainSample,
    evaluate_loss,
    init_model,
    param_blocks,
    predict_proba_batch,
    train,
)
from .selftrain import SslConfig, run_ssl

log = logging.getLogger(__name__)

VARIANTS = (
    "self_training",
    "self_training_i",
    "intersection_t",
    "intersection_s",
    "distillation_o",
    "mtd",
    "gold_upper_bound",
)

# Variants that first need the teacher pair plus the consensus partition.
_DISTILL_FAMILY = ("intersection_t", "intersection_s", "distillation_o", "mtd")


@dataclass
class SeedResult:
    variant: str
    seed: int
    scores: Scores | None
    histories: list[list[dict]] = field(default_factory=list)
    stop_reasons: list[str | None] = field(default_factory=list)
    model: Model | None = None
    error: str | None = None


@dataclass
class RunReport:
    variant: str
    seeds: list[int]
    per_seed: list[SeedResult]
    mean: dict[str, float]
    std: dict[str, float]

    def as_dict(self) -> dict:
        return {
            "variant": self.variant,
            "seeds": self.seeds,
            "per_seed": [
                {
                    "seed": r.seed,
                    "scores": r.scores.as_dict() if r.scores else None,
                    "history": r.histories,
                    "stop_reasons": r.stop_reasons,
                    "error": r.error,
                }
                for r in self.per_seed
            ],
            "mean": self.mean,
            "std": self.std,
        }


def _score_model(
    model: Model, split: DataSplit, features: Mapping[str, FeatureVector]
) -> Scores:
    probs = predict_proba_batch(model, [features[i.id] for i in split.test])
    return score([i.relation for i in split.test], probs.argmax(axis=1), split.label_set)


def _build_teaching(
    split: DataSplit,
    cfg: ExperimentConfig,
    features: Mapping[str, FeatureVector],
    seed_a: int,
    seed_b: int,
    train_cfg: TrainConfig,
    include_difference: bool,
) -> tuple[TeachingData, list[list[dict]], list[str | None]]:
    spec = ModelSpec(cfg.arch, cfg.dim, cfg.hidden_size)
    ssl_cfg = SslConfig(
        method=cfg.ssl_method,
        iterations=cfg.iterations,
        selection_ratio=cfg.selection_ratio,
        seeds=(seed_a, seed_b),
        confidence_floor=cfg.confidence_floor,
    )
    states, pair = run_ssl(split, ssl_cfg, train_cfg, spec, features)
    partition = partition_predictions(pair, split.unlabeled, features=features)
    teaching = build_teaching_data(
        split, partition, pair, cfg.temperature, include_difference, features=features
    )
    return teaching, [s.history for s in states], [s.stop_reason for s in states]


def run_single(
    variant: str,
    split: DataSplit,
    cfg: ExperimentConfig,
    features: Mapping[str, FeatureVector],
    base_seed: int,
) -> SeedResult:
    """One variant under one base seed, scored on the test set."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    spec = ModelSpec(cfg.arch, cfg.dim, cfg.hidden_size)
    train_cfg = TrainConfig(
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        shuffle_seed=mix_seed(base_seed, "shuffle"),
    )
    seed_a, seed_b = mix_seed(base_seed, "teacher", 0), mix_seed(base_seed, "teacher", 1)
    student_seed = mix_seed(base_seed, "student")
    distill_opt = TrainConfig(
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        shuffle_seed=mix_seed(base_seed, "distill_shuffle"),
    )

    def base_ssl(method: str) -> tuple:
        ssl_cfg = SslConfig(
            method=method,
            iterations=cfg.iterations,
            selection_ratio=cfg.selection_ratio,
            seeds=(seed_a, seed_b),
            confidence_floor=cfg.confidence_floor,
        )
        return run_ssl(split, ssl_cfg, train_cfg, spec, features)

    if variant in ("self_training", "self_training_i", "gold_upper_bound"):
        method = {
            "self_training": "self_training",
            "self_training_i": "self_training_i",
            "gold_upper_bound": "gold_oracle",
        }[variant]
        states, pair = base_ssl(method)
        model = pair.t1
        histories = [s.history for s in states]
        reasons = [s.stop_reason for s in states]
        if variant == "gold_upper_bound":
            # Upper bound: the final supervised training sees true labels on
            # the whole examined pool, so no variant can out-inform it.
            samples = [
                TrainSample(features[i.id], hard_label=i.relation) for i in split.labeled
            ] + [
                TrainSample(features[i.id], hard_label=split.oracle_label(i.id))
                for i in split.unlabeled
            ]
            model = train(
                init_model(cfg.arch, cfg.dim, len(split.label_set), seed_a, cfg.hidden_size),
                samples, distill_opt, lam=0.0,
            )
    else:
        include_diff = cfg.include_difference and variant in ("distillation_o", "mtd")
        teaching, histories, reasons = _build_teaching(
            split, cfg, features, seed_a, seed_b, train_cfg, include_diff
        )
        if variant == "intersection_t":
            model = train(
                init_model(cfg.arch, cfg.dim, len(split.label_set), seed_a, cfg.hidden_size),
                teaching.samples, distill_opt, lam=0.0,
            )
        elif variant == "intersection_s":
            model = train(
                init_model(cfg.arch, cfg.dim, len(split.label_set), student_seed,
                           cfg.hidden_size),
                teaching.samples, distill_opt, lam=0.0,
            )
        elif variant == "distillation_o":
            model = train_student(
                single_teacher_view(teaching, 0), cfg.arch, cfg.lam, cfg.temperature,
                distill_opt, student_seed, cfg.hidden_size,
            )
        else:  # mtd
            model = train_student(
                teaching, cfg.arch, cfg.lam, cfg.temperature,
                distill_opt, student_seed, cfg.hidden_size,
            )

    return SeedResult(
        variant=variant,
        seed=base_seed,
        scores=_score_model(model, split, features),
        histories=histories,
        stop_reasons=reasons,
        model=model,
    )


def _aggregate(variant: str, seeds: list[int], results: list[SeedResult]) -> RunReport:
    ok = [r.scores for r in results if r.scores is not None]
    mean: dict[str, float] = {}
    std: dict[str, float] = {}
    for name in ("precision", "recall", "f1"):
        vals = np.array([getattr(s, name) for s in ok])
        mean[name] = float(vals.mean()) if len(vals) else 0.0
        std[name] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    return RunReport(variant=variant, seeds=seeds, per_seed=results, mean=mean, std=std)


def run_variant(
    variant: str,
    split: DataSplit,
    cfg: ExperimentConfig,
    features: Mapping[str, FeatureVector] | None = None,
    max_workers: int | None = None,
) -> RunReport:
    """Run one variant over all configured seeds; per-seed failures are
    recorded on the report and do not abort the remaining seeds."""
    if features is None:
        everything = split.labeled + split.unlabeled + split.dev + split.test
        features = featurize_all(everything, cfg.dim, cfg.feature_seed)

    def job(seed: int) -> SeedResult:
        try:
            return run_single(variant, split, cfg, features, seed)
        except Exception as exc:  # noqa: BLE001 - per-seed isolation is the contract
            log.exception("variant %s seed %d failed", variant, seed)
            return SeedResult(variant=variant, seed=seed, scores=None, error=str(exc))

    workers = max_workers or cfg.max_workers
    if workers > 1 and len(cfg.seeds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, cfg.seeds))
    else:
        results = [job(seed) for seed in cfg.seeds]
    for r in results:
        if r.scores is not None:
            log.info("%s seed %d: test F1 %.4f", variant, r.seed, r.scores.f1)
    return _aggregate(variant, list(cfg.seeds), results)


@dataclass
class LandscapeGrid:
    """Loss values over the (alpha, beta) perturbation grid; values[i, j]
    is the loss at alpha=alphas[i], beta=betas[j]."""

    values: np.ndarray
    alphas: np.ndarray
    betas: np.ndarray
    center_loss: float
    metadata: dict


def _normalized_direction(
    model: Model, rng: np.random.Generator
) -> dict[str, np.ndarray]:
    """Random parameter direction scaled to match per-output-unit norms."""
    direction: dict[str, np.ndarray] = {}
    for name, array, out_axis in param_blocks(model):
        d = rng.standard_normal(array.shape)
        if out_axis is None:
            ref, dn = np.linalg.norm(array), np.linalg.norm(d)
            if ref == 0.0:
                warnings.warn(f"zero-norm parameter block {name!r}; direction zeroed",
                              stacklevel=2)
                d = np.zeros_like(d)
            else:
                d *= ref / dn
        else:
            reduce_axes = tuple(i for i in range(array.ndim) if i != out_axis)
            ref = np.sqrt((array * array).sum(axis=reduce_axes, keepdims=True))
            dn = np.sqrt((d * d).sum(axis=reduce_axes, keepdims=True))
            if np.any(ref == 0.0):
                warnings.warn(f"zero-norm output units in block {name!r}; "
                              "those direction rows zeroed", stacklevel=2)
            d *= np.where(ref > 0.0, ref / dn, 0.0)
        direction[name] = d
    return direction


def loss_landscape_grid(
    model: Model,
    eval_samples: Sequence[TrainSample] | None = None,
    grid_half_width: float = 1.0,
    resolution: int = 41,
    direction_seed: int = 0,
    lam: float = 0.0,
    temperature: float = 1.0,
    loss_fn: Callable[[Model], float] | None = None,
) -> LandscapeGrid:
    """Loss surface over a 2-D random slice around the model's parameters.

    The center cell is the unperturbed model. ``loss_fn`` overrides the
    default evaluation (mean combined loss over ``eval_samples``), which
    lets callers probe synthetic objectives.
    """
    if resolution < 3 or resolution % 2 == 0:
        raise ValueError(f"resolution must be an odd integer >= 3, got {resolution}")
    if loss_fn is None:
        if eval_samples is None:
            raise ValueError("need eval_samples or an explicit loss_fn")
        def loss_fn(m: Model) -> float:
            return evaluate_loss(m, eval_samples, lam, temperature)

    rng = np.random.default_rng(direction_seed)
    delta = _normalized_direction(model, rng)
    eta = _normalized_direction(model, rng)

    base = {k: v.copy() for k, v in model.params.items()}
    probe = Model(
        arch=model.arch, dim=model.dim, n_classes=model.n_classes, seed=model.seed,
        params={k: v.copy() for k, v in base.items()}, hidden_size=model.hidden_size,
    )
    alphas = np.linspace(-grid_half_width, grid_half_width, resolution)
    betas = np.linspace(-grid_half_width, grid_half_width, resolution)
    values = np.empty((resolution, resolution))
    for i, a in enumerate(alphas):
        for j, b in enumerate(betas):
            for k in base:
                probe.params[k][...] = base[k] + a * delta[k] + b * eta[k]
            values[i, j] = loss_fn(probe)
    center = resolution // 2
    return LandscapeGrid(
        values=values,
        alphas=alphas,
        betas=betas,
        center_loss=float(values[center, center]),
        metadata={
            "resolution": resolution,
            "grid_half_width": grid_half_width,
            "direction_seed": direction_seed,
            "lambda": lam,
            "temperature": temperature,
            "n_eval_samples": len(eval_samples) if eval_samples is not None else None,
        },
    )


def write_grid_csv(grid: LandscapeGrid, path: str | Path) -> None:
    """Header row holds the beta values, first column the alpha values."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha/beta"] + [repr(b) for b in grid.betas.tolist()])
        for a, row in zip(grid.alphas.tolist(), grid.values):
            writer.writerow([repr(a)] + [repr(v) for v in row.tolist()])


def summarize(reports: Sequence[RunReport]) -> list[dict]:
    """Comparison rows sorted by mean F1, with deltas against the full
    method's row (falling back to the best row when it is absent) and a
    two-sided t-test p-value over the seed scores."""
    if not reports:
        raise ValueError("no reports to summarize")
    rows = sorted(reports, key=lambda r: (-r.mean["f1"], r.variant))
    baseline = next((r for r in rows if r.variant == "mtd"), rows[0])
    base_f1s = [r.scores.f1 for r in baseline.per_seed if r.scores]
    out = []
    for rep in rows:
        f1s = [r.scores.f1 for r in rep.per_seed if r.scores]
        delta = rep.mean["f1"] - baseline.mean["f1"]
        p_value = None
        if rep is not baseline and len(f1s) > 1 and len(base_f1s) > 1:
            p_value = float(scipy_stats.ttest_ind(base_f1s, f1s).pvalue)
        out.append(
            {
                "variant": rep.variant,
                "n_seeds": len(rep.seeds),
                "mean_precision": rep.mean["precision"],
                "std_precision": rep.std["precision"],
                "mean_recall": rep.mean["recall"],
                "std_recall": rep.std["recall"],
                "mean_f1": rep.mean["f1"],
                "std_f1": rep.std["f1"],
                "delta_f1_vs_baseline": delta,
                "drop": delta < 0,
                "p_value_vs_baseline": p_value,
            }
        )
    return out


def write_summary(rows: list[dict], csv_path: str | Path, json_path: str | Path) -> None:
    with Path(csv_path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    Path(json_path).write_text(json.dumps(rows, indent=2))
