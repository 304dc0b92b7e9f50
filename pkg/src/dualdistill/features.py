"""Sentence featurization: entity markers plus hashed sparse features.

An :class:`Instance` is one pre-tokenized sentence with two entity spans.
Marker tokens are inserted around both spans, then a fixed set of string
templates (n-grams, entity tokens, marker contexts, span geometry) is
hashed into a signed sparse vector of power-of-two width. Any encoder
mapping Instance -> FeatureVector could be swapped in behind this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .hashing import stable_hash64

SUBJ_MARKER = "[E1]"
OBJ_MARKER = "[E2]"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"

MIN_DIM = 1 << 10


@dataclass
class Instance:
    """One sentence with two entity spans and an optional relation label.

    Spans are (start, end) token indices, inclusive-exclusive, and must not
    overlap. ``relation`` indexes into the experiment's label set.
    """

    id: str
    tokens: list[str]
    subj_span: tuple[int, int]
    obj_span: tuple[int, int]
    relation: int | None = None

    def __post_init__(self) -> None:
        for name, (start, end) in (("subj", self.subj_span), ("obj", self.obj_span)):
            if not (0 <= start < end <= len(self.tokens)):
                raise ValueError(
                    f"instance {self.id!r}: {name} span ({start}, {end}) invalid "
                    f"for sentence of {len(self.tokens)} tokens"
                )
        s1, e1 = self.subj_span
        s2, e2 = self.obj_span
        if s1 < e2 and s2 < e1:
            raise ValueError(f"instance {self.id!r}: entity spans overlap")
        if self.relation is not None and self.relation < 0:
            raise ValueError(f"instance {self.id!r}: negative relation index")


@dataclass(frozen=True)
class FeatureVector:
    """Sparse L2-normalized vector; indices strictly increasing, all < dim."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self) -> None:
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values length mismatch")
        if len(self.indices) and (
            np.any(np.diff(self.indices) <= 0) or self.indices[-1] >= self.dim
        ):
            raise ValueError("indices must be strictly increasing and < dim")


def _marked_tokens(inst: Instance) -> tuple[list[str], dict[str, int]]:
    """Marked token sequence plus the position of each of the four markers."""
    (s1, e1), (s2, e2) = inst.subj_span, inst.obj_span
    # At a shared position the earlier span's close precedes the later open.
    inserts = sorted(
        [
            (s1, 1, "e1_open", SUBJ_MARKER),
            (e1, 0, "e1_close", SUBJ_MARKER),
            (s2, 1, "e2_open", OBJ_MARKER),
            (e2, 0, "e2_close", OBJ_MARKER),
        ]
    )
    out = [CLS_TOKEN]
    positions: dict[str, int] = {}
    cursor = 0
    for pos, _, tag, marker in inserts:
        out.extend(inst.tokens[cursor:pos])
        positions[tag] = len(out)
        out.append(marker)
        cursor = pos
    out.extend(inst.tokens[cursor:])
    out.append(SEP_TOKEN)
    return out, positions


def insert_markers(inst: Instance) -> list[str]:
    """Wrap the subject span in [E1] and the object span in [E2] markers,
    with [CLS]/[SEP] framing. Output length is always len(tokens) + 6."""
    return _marked_tokens(inst)[0]


def _distance_bucket(inst: Instance) -> str:
    (s1, e1), (s2, e2) = inst.subj_span, inst.obj_span
    gap = s2 - e1 if s1 < s2 else s1 - e2
    if gap <= 2:
        return str(gap)
    if gap <= 5:
        return "3-5"
    if gap <= 10:
        return "6-10"
    return ">10"


def _templates(inst: Instance) -> list[str]:
    marked, positions = _marked_tokens(inst)
    out = ["u=" + t for t in marked]
    out += [f"b={marked[i]}_{marked[i + 1]}" for i in range(len(marked) - 1)]
    out += ["se=" + t for t in inst.tokens[slice(*inst.subj_span)]]
    out += ["oe=" + t for t in inst.tokens[slice(*inst.obj_span)]]
    for tag in ("e1_open", "e1_close", "e2_open", "e2_close"):
        p = positions[tag]
        for off in (-2, -1, 1, 2):
            if 0 <= p + off < len(marked):
                out.append(f"w={tag}:{off}:{marked[p + off]}")
    out.append("g=" + _distance_bucket(inst))
    out.append("o=subj_first" if inst.subj_span[0] < inst.obj_span[0] else "o=obj_first")
    return out


def featurize(inst: Instance, dim: int, seed: int) -> FeatureVector:
    """Hash the instance's feature templates into a signed sparse vector.

    Each template string maps to an index via a seeded 64-bit hash modulo
    ``dim`` and to a +-1 sign via an independent second hash; colliding
    indices accumulate. The result is L2-normalized counts.
    """
    if dim < MIN_DIM or dim & (dim - 1):
        raise ValueError(f"dim must be a power of two >= {MIN_DIM}, got {dim}")
    accum: dict[int, float] = {}
    for template in _templates(inst):
        idx = stable_hash64(template, seed, b"index") & (dim - 1)
        sign = 1.0 if stable_hash64(template, seed, b"sign") & 1 else -1.0
        accum[idx] = accum.get(idx, 0.0) + sign
    items = sorted((i, v) for i, v in accum.items() if v != 0.0)
    indices = np.array([i for i, _ in items], dtype=np.int64)
    values = np.array([v for _, v in items], dtype=np.float64)
    norm = np.linalg.norm(values)
    if norm > 0:
        values /= norm
    return FeatureVector(indices=indices, values=values, dim=dim)


def featurize_all(
    instances: Sequence[Instance], dim: int, seed: int
) -> dict[str, FeatureVector]:
    """Feature vectors keyed by instance id (computed once, reused everywhere)."""
    return {inst.id: featurize(inst, dim, seed) for inst in instances}
