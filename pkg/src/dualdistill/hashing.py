"""Stable seeded hashing.

Python's builtin ``hash`` is randomized per process, so everything that must
be reproducible across runs and platforms (feature indices, derived seeds)
goes through blake2b instead.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1


def stable_hash64(text: str, seed: int, purpose: bytes = b"") -> int:
    """Deterministic 64-bit hash of ``text`` under ``seed``.

    ``purpose`` selects an independent hash family (e.g. index vs sign).
    """
    key = (seed & _MASK64).to_bytes(8, "little")
    digest = hashlib.blake2b(
        text.encode("utf-8"), digest_size=8, key=key, person=purpose
    ).digest()
    return int.from_bytes(digest, "little")


def mix_seed(*parts: int | str) -> int:
    """Derive a reproducible 63-bit seed from a tuple of parts.

    Used wherever one experiment seed must fan out into independent
    sub-seeds (teacher inits, shuffles per iteration, ...).
    """
    text = "\x1f".join(str(p) for p in parts)
    return stable_hash64(text, seed=0, purpose=b"seedmix") >> 1
