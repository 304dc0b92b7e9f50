"""Experiment configuration: dataset profiles, defaults, validation.

Configs load from JSON with CLI flags layered on top; the fully resolved
config is snapshotted next to every run's outputs so any run can be
reproduced from that file alone.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .model import ARCHS
from .selftrain import METHODS

PROFILES = ("semeval", "tacred", "synthetic")

# Per-profile defaults; everything else shares the global defaults below.
PROFILE_DEFAULTS = {
    "semeval": {"lam": 0.3, "seeds": [1, 2, 3, 4, 5], "labeled_fraction": 0.10},
    "tacred": {"lam": 0.5, "seeds": [1, 2, 3], "labeled_fraction": 0.10},
    "synthetic": {
        "lam": 0.4,
        "seeds": [1, 2, 3, 4, 5],
        "labeled_fraction": 0.05,
        "dim": 1 << 14,
        "learning_rate": 80.0,
    },
}

# JSON key -> dataclass attribute, where they differ.
_ALIASES = {"lambda": "lam"}


@dataclass
class SyntheticConfig:
    num_classes: int = 10
    instances_per_class: int = 300
    vocab_size: int = 150
    noise_rate: float = 0.25
    no_relation_share: float | None = 0.4
    data_seed: int = 99
    dev_fraction: float = 0.1
    test_fraction: float = 0.2


@dataclass
class ExperimentConfig:
    profile: str = "synthetic"
    train_path: str | None = None
    dev_path: str | None = None
    test_path: str | None = None
    no_relation_label: str | None = None
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)

    labeled_fraction: float = 0.10
    unlabeled_fraction: float = 0.50
    split_seed: int = 1234

    arch: str = "linear"
    dim: int = 1 << 18
    hidden_size: int = 64
    feature_seed: int = 7

    ssl_method: str = "self_training"
    iterations: int = 10
    selection_ratio: float = 0.10
    confidence_floor: float = 0.0

    learning_rate: float = 2.0
    batch_size: int = 20
    epochs: int = 10

    lam: float = 0.4
    temperature: float = 2.4
    include_difference: bool = True

    seeds: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    out_dir: str = "runs"
    max_workers: int = 4

    def validate(self) -> list[str]:
        """All validation problems at once (empty list means valid)."""
        errors = []
        if self.profile not in PROFILES:
            errors.append(f"profile: {self.profile!r} not in {PROFILES}")
        if self.arch not in ARCHS:
            errors.append(f"arch: {self.arch!r} not in {ARCHS}")
        if self.ssl_method not in METHODS:
            errors.append(f"ssl_method: {self.ssl_method!r} not in {METHODS}")
        if not 0 < self.labeled_fraction <= 1:
            errors.append(f"labeled_fraction: {self.labeled_fraction} not in (0, 1]")
        if not 0 <= self.unlabeled_fraction <= 1:
            errors.append(f"unlabeled_fraction: {self.unlabeled_fraction} not in [0, 1]")
        if self.labeled_fraction + self.unlabeled_fraction > 1:
            errors.append("labeled_fraction + unlabeled_fraction exceeds 1")
        if self.dim < 1 << 10 or self.dim & (self.dim - 1):
            errors.append(f"dim: {self.dim} must be a power of two >= 1024")
        if self.iterations < 0:
            errors.append(f"iterations: {self.iterations} must be >= 0")
        if not 0 < self.selection_ratio <= 1:
            errors.append(f"selection_ratio: {self.selection_ratio} not in (0, 1]")
        if not 0 <= self.confidence_floor <= 1:
            errors.append(f"confidence_floor: {self.confidence_floor} not in [0, 1]")
        for name in ("learning_rate", "batch_size", "epochs", "temperature"):
            if getattr(self, name) <= 0:
                errors.append(f"{name}: must be positive")
        if not 0 <= self.lam <= 1:
            errors.append(f"lambda: {self.lam} not in [0, 1]")
        if not self.seeds:
            errors.append("seeds: need at least one seed")
        if self.max_workers < 1:
            errors.append(f"max_workers: {self.max_workers} must be >= 1")
        if self.profile != "synthetic":
            for name in ("train_path", "dev_path", "test_path"):
                if getattr(self, name) is None:
                    errors.append(f"{name}: required for profile {self.profile!r}")
        return errors

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for json_key, attr in _ALIASES.items():
            out[json_key] = out.pop(attr)
        return out


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a config from JSON data, applying profile defaults first.

    Unknown keys are rejected by name so typos in config files fail loudly.
    """
    raw = dict(raw)
    profile = raw.get("profile", "synthetic")
    merged: dict = dict(PROFILE_DEFAULTS.get(profile, {}))
    for key, value in raw.items():
        merged[_ALIASES.get(key, key)] = value
    merged["profile"] = profile

    synth = merged.pop("synthetic", {})
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(merged) - known
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    if isinstance(synth, dict):
        synth_known = {f.name for f in dataclasses.fields(SyntheticConfig)}
        bad = set(synth) - synth_known
        if bad:
            raise ValueError(f"unknown synthetic config fields: {sorted(bad)}")
        synth = SyntheticConfig(**synth)
    return ExperimentConfig(synthetic=synth, **merged)
