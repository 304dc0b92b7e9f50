"""Linear / one-hidden-layer softmax classifiers over hashed features.

Teachers and students are always instances of the same architecture. The
trainer runs plain mini-batch SGD against the mixed hard/soft objective
from :mod:`dualdistill.losses`, with hand-derived gradients. Sparse
feature rows are stacked into a CSR matrix so batch steps stay vectorized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .features import FeatureVector
from .losses import PROB_CLAMP, softmax

ARCHS = ("linear", "mlp1")
INIT_SCALE = 0.01
MODEL_FORMAT = "dualdistill-model"
MODEL_FORMAT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss goes non-finite; carries the epoch."""

    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


@dataclass
class Model:
    """Classifier parameters.

    linear: weights (n_classes, dim), bias (n_classes,).
    mlp1:   w1 (dim, hidden), w2 (hidden, n_classes) with a tanh hidden
            layer, bias (n_classes,).
    """

    arch: str
    dim: int
    n_classes: int
    seed: int
    params: dict[str, np.ndarray]
    hidden_size: int = 64
    train_losses: list[float] = field(default_factory=list, compare=False, repr=False)

    def check_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.params.values())


@dataclass
class TrainSample:
    """One training row: features plus a hard label and/or teacher logits."""

    features: FeatureVector
    hard_label: int | None = None
    teacher_logits: list[np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.hard_label is None and not self.teacher_logits:
            raise ValueError("sample needs a hard label or teacher logits")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture choice shared by teachers and student."""

    arch: str = "linear"
    dim: int = 1 << 18
    hidden_size: int = 64

    def __post_init__(self) -> None:
        if self.arch not in ARCHS:
            raise ValueError(f"unknown arch {self.arch!r}; expected one of {ARCHS}")


@dataclass(frozen=True)
class TrainConfig:
    # 2.0 is the smallest rate that drives the hashed-linear model to full
    # separation of a clean synthetic corpus within the default 10 epochs.
    learning_rate: float = 2.0
    batch_size: int = 20
    epochs: int = 10
    shuffle_seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("learning_rate, batch_size and epochs must be positive")


def init_model(arch: str, dim: int, n_classes: int, seed: int, hidden_size: int = 64) -> Model:
    """Seeded uniform [-0.01, 0.01] weights, zero bias; same args, same bits."""
    if arch not in ARCHS:
        raise ValueError(f"unknown arch {arch!r}; expected one of {ARCHS}")
    if dim < 1 or n_classes < 2:
        raise ValueError(f"invalid sizes dim={dim}, n_classes={n_classes}")
    rng = np.random.default_rng(seed)
    if arch == "linear":
        params = {
            "weights": rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_classes, dim)),
            "bias": np.zeros(n_classes),
        }
    else:
        params = {
            "w1": rng.uniform(-INIT_SCALE, INIT_SCALE, size=(dim, hidden_size)),
            "w2": rng.uniform(-INIT_SCALE, INIT_SCALE, size=(hidden_size, n_classes)),
            "bias": np.zeros(n_classes),
        }
    return Model(arch=arch, dim=dim, n_classes=n_classes, seed=seed,
                 params=params, hidden_size=hidden_size)


def forward(model: Model, features: FeatureVector) -> np.ndarray:
    """Pre-softmax logits for one instance."""
    if features.dim != model.dim:
        raise ValueError(f"feature dim {features.dim} != model dim {model.dim}")
    idx, vals = features.indices, features.values
    if model.arch == "linear":
        return model.params["weights"][:, idx] @ vals + model.params["bias"]
    hidden = np.tanh(vals @ model.params["w1"][idx, :])
    return hidden @ model.params["w2"] + model.params["bias"]


def forward_batch(model: Model, x: sp.csr_matrix) -> np.ndarray:
    """Logits for a CSR batch; row-wise identical to :func:`forward`."""
    if model.arch == "linear":
        return x @ model.params["weights"].T + model.params["bias"]
    hidden = np.tanh((x @ model.params["w1"]))
    return hidden @ model.params["w2"] + model.params["bias"]


def predict_proba(model: Model, features: FeatureVector) -> np.ndarray:
    return softmax(forward(model, features), 1.0)


def predict_proba_batch(model: Model, features: Sequence[FeatureVector]) -> np.ndarray:
    """Row of class probabilities per feature vector."""
    return _softmax_rows(forward_batch(model, stack_features(features)), 1.0)


def predict(model: Model, features: FeatureVector) -> int:
    # np.argmax takes the lowest index on ties.
    return int(np.argmax(predict_proba(model, features)))


def stack_features(features: Sequence[FeatureVector]) -> sp.csr_matrix:
    """Stack sparse vectors into one CSR matrix (rows in given order)."""
    if not features:
        raise ValueError("empty feature list")
    dim = features[0].dim
    indptr = np.zeros(len(features) + 1, dtype=np.int64)
    for i, f in enumerate(features):
        if f.dim != dim:
            raise ValueError("inconsistent feature dims")
        indptr[i + 1] = indptr[i] + len(f.indices)
    indices = np.concatenate([f.indices for f in features])
    data = np.concatenate([f.values for f in features])
    return sp.csr_matrix((data, indices, indptr), shape=(len(features), dim))


def _softmax_rows(z: np.ndarray, temperature: float) -> np.ndarray:
    zt = z / temperature
    zt -= zt.max(axis=1, keepdims=True)
    e = np.exp(zt)
    return e / e.sum(axis=1, keepdims=True)


def _batch_objective(
    z: np.ndarray,
    gold: np.ndarray,
    teacher_z: list[np.ndarray],
    lam: float,
    temperature: float,
) -> tuple[float, np.ndarray]:
    """Mean combined loss over the batch and its gradient w.r.t. logits.

    ``gold`` holds -1 where a sample has no hard label; such samples
    contribute only the soft term. Row-wise this matches
    ``losses.combined_loss`` / ``losses.combined_loss_gradient`` averaged
    over the batch.
    """
    n, _ = z.shape
    loss = 0.0
    dz = np.zeros_like(z)
    has_gold = gold >= 0
    if lam < 1.0 and has_gold.any():
        p = _softmax_rows(z[has_gold], 1.0)
        rows = np.arange(p.shape[0])
        loss += (1.0 - lam) * float(
            -np.log(np.maximum(p[rows, gold[has_gold]], PROB_CLAMP)).sum()
        )
        p[rows, gold[has_gold]] -= 1.0
        dz[has_gold] += (1.0 - lam) * p
    if lam > 0.0 and teacher_z:
        p_s = _softmax_rows(z, temperature)
        log_ps = np.log(np.maximum(p_s, PROB_CLAMP))
        for zt in teacher_z:
            p_t = _softmax_rows(zt, temperature)
            terms = np.where(p_t > 0, p_t * (np.log(np.maximum(p_t, PROB_CLAMP)) - log_ps), 0.0)
            loss += lam * float(np.maximum(terms.sum(axis=1), 0.0).sum())
            dz += (lam / temperature) * (p_s - p_t)
    return loss / n, dz / n


def _apply_sparse_grad(weight: np.ndarray, x: sp.csr_matrix, dz: np.ndarray,
                       lr: float, input_axis: int) -> None:
    """SGD step touching only the feature columns present in the batch.

    ``input_axis`` is the axis of ``weight`` indexed by feature id: 1 for
    the linear (n_classes, dim) matrix, 0 for the mlp1 (dim, hidden) one.
    """
    coo = x.tocoo()
    if coo.nnz == 0:
        return
    cols, inv = np.unique(coo.col, return_inverse=True)
    contrib = dz[coo.row] * coo.data[:, None]
    grad = np.zeros((len(cols), dz.shape[1]))
    np.add.at(grad, inv, contrib)
    if input_axis == 1:
        weight[:, cols] -= lr * grad.T
    else:
        weight[cols, :] -= lr * grad


def _prepare_arrays(
    model: Model, samples: Sequence[TrainSample], lam: float
) -> tuple[sp.csr_matrix, np.ndarray, list[np.ndarray]]:
    """CSR features, gold labels (-1 where absent), stacked teacher logits."""
    x = stack_features([s.features for s in samples])
    if x.shape[1] != model.dim:
        raise ValueError(f"feature dim {x.shape[1]} != model dim {model.dim}")
    gold = np.array(
        [s.hard_label if s.hard_label is not None else -1 for s in samples], dtype=np.int64
    )
    teacher_z: list[np.ndarray] = []
    if lam > 0.0:
        counts = {len(s.teacher_logits or []) for s in samples}
        if counts == {0} or len(counts) != 1:
            raise ValueError(
                "distillation weight > 0 requires the same teacher count on every sample"
            )
        n_teachers = counts.pop()
        teacher_z = [
            np.stack([np.asarray(s.teacher_logits[m], dtype=np.float64) for s in samples])
            for m in range(n_teachers)
        ]
    return x, gold, teacher_z


def evaluate_loss(
    model: Model,
    samples: Sequence[TrainSample],
    lam: float = 0.0,
    temperature: float = 1.0,
) -> float:
    """Mean combined loss of the model over the sample set (no updates)."""
    if not samples:
        raise ValueError("no samples")
    x, gold, teacher_z = _prepare_arrays(model, samples, lam)
    loss, _ = _batch_objective(forward_batch(model, x), gold, teacher_z, lam, temperature)
    return loss


def train(
    model: Model,
    samples: Sequence[TrainSample],
    opt: TrainConfig,
    lam: float = 0.0,
    temperature: float = 1.0,
) -> Model:
    """Mini-batch SGD over shuffled epochs; returns a new trained Model.

    The input model is left untouched. Per-epoch mean training loss is
    recorded on the returned model's ``train_losses``. A non-finite batch
    loss raises :class:`TrainingDivergedError` with the epoch index.
    """
    if not samples:
        raise ValueError("no training samples")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"distillation weight must be in [0, 1], got {lam}")

    x, gold, teacher_z = _prepare_arrays(model, samples, lam)
    n = len(samples)
    params = {k: v.copy() for k, v in model.params.items()}
    out = replace(model, params=params, train_losses=[])
    rng = np.random.default_rng(opt.shuffle_seed)
    lr = opt.learning_rate

    for epoch in range(opt.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, opt.batch_size):
            idx = order[start : start + opt.batch_size]
            xb = x[idx]
            tb = [zt[idx] for zt in teacher_z]
            if out.arch == "linear":
                z = xb @ params["weights"].T + params["bias"]
                loss, dz = _batch_objective(z, gold[idx], tb, lam, temperature)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(epoch)
                _apply_sparse_grad(params["weights"], xb, dz, lr, input_axis=1)
                params["bias"] -= lr * dz.sum(axis=0)
            else:
                hidden = np.tanh(xb @ params["w1"])
                z = hidden @ params["w2"] + params["bias"]
                loss, dz = _batch_objective(z, gold[idx], tb, lam, temperature)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(epoch)
                d_hidden = (dz @ params["w2"].T) * (1.0 - hidden * hidden)
                params["w2"] -= lr * hidden.T @ dz
                params["bias"] -= lr * dz.sum(axis=0)
                _apply_sparse_grad(params["w1"], xb, d_hidden, lr, input_axis=0)
            epoch_loss += loss * len(idx)
        out.train_losses.append(epoch_loss / n)
    return out


def save_model(model: Model, path: str | Path) -> None:
    """Write parameters as JSON with full-precision floats."""
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "arch": model.arch,
        "dim": model.dim,
        "n_classes": model.n_classes,
        "seed": model.seed,
        "hidden_size": model.hidden_size,
        "params": {k: v.ravel().tolist() for k, v in model.params.items()},
    }
    Path(path).write_text(json.dumps(payload))


def load_model(path: str | Path) -> Model:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} file")
    if payload.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {payload.get('version')}")
    arch, dim, n_classes = payload["arch"], payload["dim"], payload["n_classes"]
    hidden = payload["hidden_size"]
    shapes = (
        {"weights": (n_classes, dim), "bias": (n_classes,)}
        if arch == "linear"
        else {"w1": (dim, hidden), "w2": (hidden, n_classes), "bias": (n_classes,)}
    )
    params = {
        k: np.asarray(payload["params"][k], dtype=np.float64).reshape(shape)
        for k, shape in shapes.items()
    }
    return Model(arch=arch, dim=dim, n_classes=n_classes, seed=payload["seed"],
                 params=params, hidden_size=hidden)


def param_blocks(model: Model) -> list[tuple[str, np.ndarray, int | None]]:
    """Parameter arrays with the axis that indexes output units.

    Used by the loss-landscape direction normalization: weight matrices are
    normalized per output unit, bias vectors as a whole (axis None).
    """
    if model.arch == "linear":
        return [("weights", model.params["weights"], 0), ("bias", model.params["bias"], None)]
    return [
        ("w1", model.params["w1"], 1),
        ("w2", model.params["w2"], 1),
        ("bias", model.params["bias"], None),
    ]
