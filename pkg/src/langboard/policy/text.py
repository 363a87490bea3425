"""Hashed bag-of-tokens text embedding frontend.

Instructions are normalized (lowercase, punctuation stripped, whitespace
collapsed), split on spaces, and each token is hashed to a row of a
learned embedding table; the sentence embedding is the mean of its token
rows. The template vocabulary is small and closed, and the hash salt below
gives it zero collisions at the default table size.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .. import tasks

VOCAB_SIZE = 4096
HASH_SALT = 0  # chosen so the template vocabulary has no collisions


class EmptyTextError(ValueError):
    """Instruction text is empty after normalization."""


def token_id(token: str, vocab_size: int = VOCAB_SIZE) -> int:
    digest = hashlib.blake2b(token.encode(), digest_size=8,
                             person=HASH_SALT.to_bytes(8, "little")).digest()
    return int.from_bytes(digest, "little") % vocab_size


def token_ids(text: str, vocab_size: int = VOCAB_SIZE) -> list[int]:
    words = tasks.normalize_text(text).split()
    if not words:
        raise EmptyTextError(f"no tokens left after normalizing {text!r}")
    return [token_id(w, vocab_size) for w in words]


def pad_token_batch(texts, vocab_size: int = VOCAB_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Pad per-text id lists to (B, L) ids plus a float mask."""
    ids_list = [token_ids(t, vocab_size) for t in texts]
    longest = max(len(ids) for ids in ids_list)
    ids = np.zeros((len(ids_list), longest), dtype=np.int64)
    mask = np.zeros((len(ids_list), longest), dtype=np.float64)
    for i, row in enumerate(ids_list):
        ids[i, :len(row)] = row
        mask[i, :len(row)] = 1.0
    return ids, mask


def embed_text(text: str, table: np.ndarray) -> np.ndarray:
    """Mean of the hashed token rows; deterministic in the normalized text."""
    ids = token_ids(text, len(table))
    return table[ids].mean(axis=0)


def collision_rate(words, vocab_size: int = VOCAB_SIZE) -> float:
    """Fraction of distinct words that collide with another word's bucket."""
    words = sorted(set(words))
    buckets: dict[int, list[str]] = {}
    for w in words:
        buckets.setdefault(token_id(w, vocab_size), []).append(w)
    collided = sum(len(v) for v in buckets.values() if len(v) > 1)
    return collided / len(words) if words else 0.0
