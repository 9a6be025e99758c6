"""Recency dropout: samplers for the dropout count and the input truncation.

The transform removes the most recent N items from a training input, where
N comes from a fixed or discrete-uniform sampler.  It is a training-time
augmentation only; evaluation always sees the raw, untruncated history.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .numerics import Rng
from .simulator import Trajectory

# The truncated input never shrinks below this many items; the model needs
# at least one step.
MIN_KEEP = 1


@dataclass(frozen=True)
class DropoutSampler:
    """Distribution of the dropout count N.

    ``fixed`` is a point mass at n_fixed.  ``uniform`` is a discrete uniform
    on [low, high] or [low, high) depending on the ``inclusive`` flag; both
    conventions occur in practice, so the convention is stored explicitly
    rather than implied.
    """

    variant: str
    n_fixed: int = 0
    low: int = 0
    high: int = 0
    inclusive: bool = True

    def __post_init__(self):
        if self.variant == "fixed":
            if self.n_fixed < 0:
                raise InputError(f"fixed dropout count must be >= 0, got {self.n_fixed}")
        elif self.variant == "uniform":
            hi = self.high if self.inclusive else self.high - 1
            if self.low < 0 or hi < self.low:
                raise InputError(
                    f"empty uniform dropout range: low={self.low}, high={self.high}, "
                    f"inclusive={self.inclusive}"
                )
        else:
            raise InputError(f"unknown dropout variant {self.variant!r}")

    @classmethod
    def fixed(cls, n: int) -> "DropoutSampler":
        return cls(variant="fixed", n_fixed=n)

    @classmethod
    def uniform(cls, low: int, high: int, inclusive: bool = True) -> "DropoutSampler":
        return cls(variant="uniform", low=low, high=high, inclusive=inclusive)

    def support(self) -> range:
        if self.variant == "fixed":
            return range(self.n_fixed, self.n_fixed + 1)
        return range(self.low, self.high + 1 if self.inclusive else self.high)

    def expected_value(self) -> float:
        support = self.support()
        return (support[0] + support[-1]) / 2.0

    def sample(self, rng: Rng) -> int:
        """Draw one dropout count."""
        if self.variant == "fixed":
            return self.n_fixed
        support = self.support()
        return rng.uniform_int(support[0], support[-1])

    def sample_batch(self, rng: Rng, size: int) -> np.ndarray:
        if self.variant == "fixed":
            return np.full(size, self.n_fixed, dtype=np.int64)
        support = self.support()
        return rng.uniform_int_array(support[0], support[-1], size)

    def tag(self) -> str:
        """Short label for file names and plot legends."""
        if self.variant == "fixed":
            return "baseline" if self.n_fixed == 0 else f"fixed_{self.n_fixed}"
        support = self.support()
        if support[-1] == 0:
            return "baseline"
        return f"uniform_{support[0]}_{support[-1]}"


@dataclass(frozen=True)
class AugmentedExample:
    """A truncated training input plus its (never-dropped) target item."""

    input: Trajectory
    target: int
    dropped_count: int


def apply_recency_dropout(history: Trajectory, n: int) -> Trajectory:
    """Remove the last n items from ``history``, keeping at least MIN_KEEP.

    The result is always a prefix of the input; nothing is reordered or
    deleted from the interior.
    """
    if len(history) < 1:
        raise InputError("cannot apply dropout to an empty history")
    if n < 0:
        raise InputError(f"dropout count must be >= 0, got {n}")
    keep = max(len(history) - n, MIN_KEEP)
    if keep == len(history):
        return history
    return Trajectory(history.items[:keep])


def make_training_example(
    full_sequence: Trajectory, sampler: DropoutSampler, rng: Rng
) -> AugmentedExample:
    """Split a sequence into (truncated input, last-item target).

    Only training batches go through here; evaluation feeds raw histories.
    """
    if len(full_sequence) < 2:
        raise InputError(
            f"need at least 2 items to form an example, got {len(full_sequence)}"
        )
    n = sampler.sample(rng)
    history = Trajectory(full_sequence.items[:-1])
    truncated = apply_recency_dropout(history, n)
    return AugmentedExample(
        input=truncated,
        target=int(full_sequence.items[-1]),
        dropped_count=len(history) - len(truncated),
    )
