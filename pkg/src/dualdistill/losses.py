"""Probability and loss kernels with analytic gradients.

All functions are pure and operate on 1-D numpy vectors over the relation
set. The combined objective mixes a hard-label cross-entropy term with a
soft-label term: the summed KL divergence from each teacher's
temperature-softened distribution to the student's, weighted by ``lam``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Floor applied inside log terms; prevents -inf on degenerate distributions.
PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class LossBreakdown:
    """Per-sample loss split into its hard- and soft-label parts.

    ``combined == (1 - distill_weight) * ground_truth_loss
    + distill_weight * distill_loss`` exactly as computed.
    """

    ground_truth_loss: float
    distill_loss: float
    combined: float
    distill_weight: float


def _as_logits(values) -> np.ndarray:
    z = np.asarray(values, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] < 2:
        raise ValueError(f"logits must be a 1-D vector of length >= 2, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("logits contain non-finite values")
    return z


def softmax(logits, temperature: float = 1.0) -> np.ndarray:
    """Tempered softmax, stabilized by max subtraction.

    A larger temperature flattens the distribution; the argmax (including
    exact ties) is preserved for every temperature.
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = _as_logits(logits) / temperature
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def kl_divergence(p, q) -> float:
    """KL(p || q) with q floored at PROB_CLAMP inside the log.

    Terms with p_i == 0 contribute exactly 0. The result is floored at 0:
    tiny negative values can otherwise arise from the clamp and float
    rounding on near-degenerate inputs.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"distribution length mismatch: {p.shape} vs {q.shape}")
    mask = p > 0
    pm = p[mask]
    total = float(np.sum(pm * (np.log(pm) - np.log(np.maximum(q[mask], PROB_CLAMP)))))
    return max(total, 0.0)


def cross_entropy(gold: int, pred) -> float:
    """-log(pred[gold]) with the probability floored at PROB_CLAMP."""
    pred = np.asarray(pred, dtype=np.float64)
    if not 0 <= gold < pred.shape[0]:
        raise ValueError(f"gold label {gold} out of range [0, {pred.shape[0]})")
    return float(-np.log(max(pred[gold], PROB_CLAMP)))


def _check_combined_args(gold, teacher_logits, lam, temperature) -> None:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"distillation weight must be in [0, 1], got {lam}")
    if lam > 0 and len(teacher_logits) == 0:
        raise ValueError("distillation weight > 0 requires at least one teacher")
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")


def combined_loss(
    student_logits,
    gold: int | None,
    teacher_logits: Sequence[np.ndarray],
    lam: float,
    temperature: float,
    kd_temperature_rescale: bool = False,
) -> LossBreakdown:
    """Mixed hard/soft objective for one sample.

    The hard term is the cross-entropy of the plain (temperature 1) student
    softmax against ``gold``; when ``gold`` is None it contributes 0, which
    is how samples from the teachers' disagreement set enter the objective.
    The soft term sums KL(teacher_m || student) over the given teachers,
    both softened at ``temperature``.

    ``kd_temperature_rescale`` multiplies the soft term by temperature**2
    (off by default; the objective weighs the two terms with ``lam`` alone).
    """
    z_s = _as_logits(student_logits)
    _check_combined_args(gold, teacher_logits, lam, temperature)

    gt = cross_entropy(gold, softmax(z_s, 1.0)) if gold is not None else 0.0

    kd = 0.0
    if teacher_logits:
        p_s = softmax(z_s, temperature)
        for z_t in teacher_logits:
            kd += kl_divergence(softmax(z_t, temperature), p_s)
        if kd_temperature_rescale:
            kd *= temperature * temperature

    return LossBreakdown(
        ground_truth_loss=gt,
        distill_loss=kd,
        combined=(1.0 - lam) * gt + lam * kd,
        distill_weight=lam,
    )


def combined_loss_gradient(
    student_logits,
    gold: int | None,
    teacher_logits: Sequence[np.ndarray],
    lam: float,
    temperature: float,
    kd_temperature_rescale: bool = False,
) -> np.ndarray:
    """Gradient of ``combined_loss(...)`` w.r.t. the student logits.

    Hard part: (1 - lam) * (softmax(z_s) - onehot(gold)).
    Soft part, per teacher: (lam / T) * (softmax(z_s/T) - softmax(z_t/T)).
    Gradients flow only through the student; teacher logits are constants.
    """
    z_s = _as_logits(student_logits)
    _check_combined_args(gold, teacher_logits, lam, temperature)

    grad = np.zeros_like(z_s)
    if lam < 1.0 and gold is not None:
        if not 0 <= gold < z_s.shape[0]:
            raise ValueError(f"gold label {gold} out of range [0, {z_s.shape[0]})")
        g = softmax(z_s, 1.0)
        g[gold] -= 1.0
        grad += (1.0 - lam) * g
    if lam > 0.0:
        p_s = softmax(z_s, temperature)
        scale = lam / temperature
        if kd_temperature_rescale:
            scale *= temperature * temperature
        for z_t in teacher_logits:
            grad += scale * (p_s - softmax(z_t, temperature))
    return grad
