"""Batch command-line front end.

Commands: ``synth`` (write a synthetic corpus), ``run`` (one variant end
to end), ``ablate`` (all variants plus comparison table), ``landscape``
(loss grid around a saved model). Every run snapshots its fully resolved
configuration so results are reproducible from that file alone.

Exit codes: 0 success, 2 usage/validation, 3 runtime failure. Set DD_LOG
to adjust log verbosity (debug/info/warning/error).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import data as datasets
from .config import ExperimentConfig, PROFILES, config_from_dict
from .data import Corpus, DataSplit, make_split, validate_stats
from .features import featurize_all
from .harness import (
    VARIANTS,
    loss_landscape_grid,
    run_variant,
    summarize,
    write_grid_csv,
    write_summary,
)
from .hashing import mix_seed
from .model import TrainSample, load_model

log = logging.getLogger("dualdistill")


class UsageError(ValueError):
    """Configuration / input problems that should exit with code 2."""


def _setup_logging() -> None:
    level = os.environ.get("DD_LOG", "info").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    raw: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        raw = json.loads(path.read_text())
    overrides = {
        "profile": getattr(args, "dataset_profile", None),
        "lambda": getattr(args, "lam", None),
        "temperature": getattr(args, "temperature", None),
        "iterations": getattr(args, "iterations", None),
        "selection_ratio": getattr(args, "selection_ratio", None),
        "out_dir": getattr(args, "out", None),
    }
    for key, value in overrides.items():
        if value is not None:
            raw[key] = value
    if getattr(args, "include_difference", None) is not None:
        raw["include_difference"] = args.include_difference == "on"
    if getattr(args, "seeds", None) is not None:
        raw["seeds"] = list(range(1, args.seeds + 1))
    try:
        cfg = config_from_dict(raw)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    problems = cfg.validate()
    if problems:
        raise UsageError("invalid configuration:\n  " + "\n  ".join(problems))
    return cfg


def _load_corpus(cfg: ExperimentConfig) -> Corpus:
    if cfg.train_path is None and cfg.profile == "synthetic":
        s = cfg.synthetic
        label_set, instances = datasets.generate_synthetic(
            s.num_classes, s.instances_per_class, s.vocab_size, s.noise_rate,
            s.data_seed, no_relation_share=s.no_relation_share,
        )
        return datasets.split_corpus(
            label_set, instances, s.dev_fraction, s.test_fraction,
            mix_seed(s.data_seed, "corpus_split"),
        )
    paths = {name: getattr(cfg, f"{name}_path") for name in ("train", "dev", "test")}
    for name, p in paths.items():
        if p is None or not Path(p).exists():
            raise UsageError(f"{name} dataset file not found: {p}")
    names = set()
    for p in paths.values():
        with open(p, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    names.add(json.loads(line)["relation"])
    label_set = datasets.infer_label_set(
        names=sorted(names), no_relation_label=cfg.no_relation_label
    )
    parts = {
        name: datasets.load_jsonl(p, label_set) for name, p in paths.items()
    }
    return Corpus(label_set=label_set, train=parts["train"],
                  dev=parts["dev"], test=parts["test"])


def _prepare(cfg: ExperimentConfig) -> tuple[Corpus, DataSplit, dict]:
    corpus = _load_corpus(cfg)
    if cfg.profile in datasets.DATASET_PROFILES:
        report = validate_stats(corpus, datasets.DATASET_PROFILES[cfg.profile])
        if not report["ok"]:
            log.warning("dataset statistics mismatch: %s", report["mismatches"])
        else:
            log.info("dataset statistics match the %s profile", cfg.profile)
    split = make_split(corpus, cfg.labeled_fraction, cfg.unlabeled_fraction, cfg.split_seed)
    log.info(
        "split: %d labeled / %d unlabeled / %d dev / %d test",
        len(split.labeled), len(split.unlabeled), len(split.dev), len(split.test),
    )
    everything = split.labeled + split.unlabeled + split.dev + split.test
    features = featurize_all(everything, cfg.dim, cfg.feature_seed)
    return corpus, split, features


def _write_resolved_config(cfg: ExperimentConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved-config.json").write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True)
    )


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    s = cfg.synthetic
    for name, value in (
        ("num_classes", args.num_classes),
        ("instances_per_class", args.instances_per_class),
        ("vocab_size", args.vocab_size),
        ("noise_rate", args.noise_rate),
        ("no_relation_share", args.no_relation_share),
        ("data_seed", args.seed),
    ):
        if value is not None:
            setattr(s, name, value)
    try:
        label_set, instances = datasets.generate_synthetic(
            s.num_classes, s.instances_per_class, s.vocab_size, s.noise_rate,
            s.data_seed, no_relation_share=s.no_relation_share,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    corpus = datasets.split_corpus(
        label_set, instances, s.dev_fraction, s.test_fraction,
        mix_seed(s.data_seed, "corpus_split"),
    )
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for part in ("train", "dev", "test"):
        datasets.save_jsonl(out / f"{part}.jsonl", getattr(corpus, part), label_set)
    manifest = {
        "num_classes": s.num_classes,
        "instances_per_class": s.instances_per_class,
        "vocab_size": s.vocab_size,
        "noise_rate": s.noise_rate,
        "no_relation_share": s.no_relation_share,
        "data_seed": s.data_seed,
        "dev_fraction": s.dev_fraction,
        "test_fraction": s.test_fraction,
        "labels": list(label_set.names),
        "no_relation_index": label_set.no_relation_index,
        "counts": {"train": len(corpus.train), "dev": len(corpus.dev),
                   "test": len(corpus.test)},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    log.info("wrote synthetic corpus (%d instances) to %s", len(instances), out)
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out_dir = Path(cfg.out_dir)
    _write_resolved_config(cfg, out_dir)
    _, split, features = _prepare(cfg)
    report = run_variant(args.variant, split, cfg, features)
    (out_dir / "report.json").write_text(json.dumps(report.as_dict(), indent=2))
    log.info(
        "%s: mean test F1 %.4f (std %.4f) over %d seeds",
        args.variant, report.mean["f1"], report.std["f1"], len(report.seeds),
    )
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    variants = list(VARIANTS)
    if args.variants:
        variants = [v.strip() for v in args.variants.split(",") if v.strip()]
        bad = [v for v in variants if v not in VARIANTS]
        if bad:
            raise UsageError(f"unknown variants {bad}; valid: {list(VARIANTS)}")
    out_dir = Path(cfg.out_dir)
    _write_resolved_config(cfg, out_dir)
    _, split, features = _prepare(cfg)
    reports = []
    for variant in variants:
        report = run_variant(variant, split, cfg, features)
        reports.append(report)
        (out_dir / f"report-{variant}.json").write_text(
            json.dumps(report.as_dict(), indent=2)
        )
    rows = summarize(reports)
    write_summary(rows, out_dir / "ablation.csv", out_dir / "ablation.json")
    for row in rows:
        log.info(
            "%-18s mean F1 %.4f +- %.4f (delta %+.4f)",
            row["variant"], row["mean_f1"], row["std_f1"], row["delta_f1_vs_baseline"],
        )
    return 0


def cmd_landscape(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    model_path = Path(args.model)
    if not model_path.exists():
        raise UsageError(f"model file not found: {model_path}")
    model = load_model(model_path)
    _, split, features = _prepare(cfg)
    # Surface of the plain hard-label loss over the labeled training set;
    # rebuilding teacher logits from a bare model file is not possible.
    samples = [
        TrainSample(features=features[i.id], hard_label=i.relation) for i in split.labeled
    ]
    grid = loss_landscape_grid(
        model,
        samples,
        grid_half_width=args.half_width,
        resolution=args.resolution,
        direction_seed=args.direction_seed,
    )
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_grid_csv(grid, out_dir / "landscape.csv")
    grid.metadata.update({"model": str(model_path), "eval_data": "labeled-train",
                          "center_loss": grid.center_loss})
    (out_dir / "landscape-meta.json").write_text(
        json.dumps(grid.metadata, indent=2, sort_keys=True)
    )
    log.info("wrote %dx%d grid, center loss %.6f",
             args.resolution, args.resolution, grid.center_loss)
    return 0


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--dataset-profile", choices=PROFILES, dest="dataset_profile")
    p.add_argument("--lambda", type=float, dest="lam",
                   help="distillation loss weight in [0, 1]")
    p.add_argument("--temperature", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--selection-ratio", type=float, dest="selection_ratio")
    p.add_argument("--include-difference", choices=("on", "off"),
                   dest="include_difference")
    p.add_argument("--seeds", type=int, help="number of seeds (uses 1..N)")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualdistill",
        description="Semi-supervised relation extraction with two-teacher distillation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    _add_common_flags(p)
    p.add_argument("--num-classes", type=int)
    p.add_argument("--instances-per-class", type=int)
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--noise-rate", type=float)
    p.add_argument("--no-relation-share", type=float)
    p.add_argument("--seed", type=int, help="corpus generation seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="run one variant end to end")
    _add_common_flags(p)
    p.add_argument("--variant", required=True, choices=VARIANTS)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="run all variants and emit the comparison table")
    _add_common_flags(p)
    p.add_argument("--variants", help="comma-separated subset of variants")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("landscape", help="emit a loss grid around a saved model")
    _add_common_flags(p)
    p.add_argument("--model", required=True, help="saved model JSON file")
    p.add_argument("--resolution", type=int, default=41)
    p.add_argument("--half-width", type=float, default=1.0, dest="half_width")
    p.add_argument("--direction-seed", type=int, default=0, dest="direction_seed")
    p.set_defaults(func=cmd_landscape)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.exception("command failed")
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
