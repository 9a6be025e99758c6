"""Deterministic random streams with named, independent substreams.

Every stream is a counter-based Philox generator whose key mixes the user
seed with a hash of a label path.  Substreams therefore need no shared
mutable state: the same (seed, labels) pair always denotes the same stream,
whether it is created in the main process or a worker.
"""

from __future__ import annotations

import hashlib

import numpy as np

from ..errors import InputError

MAX_SEED = 2**64 - 1


def _hash_words(text: str) -> tuple[int, int]:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return (
        int.from_bytes(digest[:8], "little"),
        int.from_bytes(digest[8:16], "little"),
    )


def _check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise InputError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def derive_seed(seed: int, *labels) -> int:
    """Derive a new 64-bit seed from a base seed and a label path.

    Used to hand independent seeds to sweep cells and repeats; the result
    depends only on (seed, labels).
    """
    seed = _check_seed(seed)
    word0, _ = _hash_words("recdrop-seed:" + "/".join(str(x) for x in labels))
    return word0 ^ seed


class Rng:
    """A single-owner random stream, splittable into labeled substreams."""

    def __init__(self, seed: int, _path: tuple = ()):
        self.seed = _check_seed(seed)
        self.path = tuple(_path)
        word0, word1 = _hash_words(
            "recdrop-rng:" + "/".join(str(x) for x in self.path)
        )
        key = np.array([word0 ^ self.seed, word1], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self.path!r})"

    def substream(self, *labels) -> "Rng":
        """A fresh stream for (seed, path + labels), independent of this one."""
        if not labels:
            raise InputError("substream requires at least one label")
        return Rng(self.seed, self.path + labels)

    def uniform_int(self, lo: int, hi: int) -> int:
        """Uniform integer in the inclusive range [lo, hi]."""
        if lo > hi:
            raise InputError(f"empty integer range [{lo}, {hi}]")
        return int(self._gen.integers(lo, hi, endpoint=True))

    def uniform_int_array(self, lo: int, hi: int, size: int) -> np.ndarray:
        if lo > hi:
            raise InputError(f"empty integer range [{lo}, {hi}]")
        return self._gen.integers(lo, hi, size=size, endpoint=True)

    def random(self, size=None):
        """Uniform float64 in [0, 1)."""
        return self._gen.random(size)

    def uniform(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size)


def _check_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise InputError("weights must be a non-empty 1-D vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InputError("weights must be finite and non-negative")
    if abs(w.sum() - 1.0) > 1e-9:
        raise InputError(f"weights must sum to 1 within 1e-9, got {w.sum()!r}")
    return w


def sample_categorical(rng: Rng, weights) -> int:
    """Draw an index with probability ``weights[i]``.

    Ties and zero-probability entries are resolved by a cumulative-sum scan
    with strict inequality, so the draw is a deterministic function of the
    stream state.
    """
    cum = np.cumsum(_check_weights(weights))
    cum /= cum[-1]
    return int(np.searchsorted(cum, rng.random(), side="right"))
