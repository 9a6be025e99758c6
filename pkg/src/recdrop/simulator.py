"""Clustered Markov-chain user simulator.

The item corpus is partitioned into equal-size clusters and user activity
follows a discrete-time Markov chain whose transition matrix places a fixed
total probability mass on the current item's cluster, spread uniformly, and
the remaining mass uniformly on all other clusters.  Repeated items are
allowed.  The chain's stationary distribution is uniform, which plays the
role of the user's long-term interests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError
from .numerics import Rng, sample_categorical

STATIONARY_TOL = 1e-10
STATIONARY_MAX_ITERS = 10_000


@dataclass(frozen=True)
class ClusterLayout:
    """Partition of the corpus into ``num_clusters`` blocks of equal size.

    Item ids are contiguous: item i belongs to cluster i // items_per_cluster.
    """

    num_clusters: int
    items_per_cluster: int

    def __post_init__(self):
        if self.num_clusters < 1 or self.items_per_cluster < 1:
            raise InputError(
                f"cluster layout must be positive, got K={self.num_clusters}, "
                f"m={self.items_per_cluster}"
            )

    @property
    def total_items(self) -> int:
        return self.num_clusters * self.items_per_cluster

    def cluster_of(self, item) -> np.ndarray | int:
        return item // self.items_per_cluster


@dataclass(frozen=True)
class TransitionSpec:
    """Two-level transition structure: stay mass p_same, uniform elsewhere."""

    layout: ClusterLayout
    p_same: float = 0.7

    def __post_init__(self):
        if not 0.0 < self.p_same <= 1.0:
            raise InputError(f"p_same must be in (0, 1], got {self.p_same}")
        if self.layout.num_clusters < 2 and self.p_same < 1.0:
            raise InputError(
                "cross-cluster mass is undefined with a single cluster; "
                "use p_same=1 or at least two clusters"
            )

    @property
    def same_cluster_prob(self) -> float:
        """Per-entry probability of a specific item in the current cluster."""
        return self.p_same / self.layout.items_per_cluster

    @property
    def cross_cluster_prob(self) -> float:
        """Per-entry probability of a specific item in any other cluster."""
        if self.layout.num_clusters == 1:
            return 0.0
        return (1.0 - self.p_same) / (
            (self.layout.num_clusters - 1) * self.layout.items_per_cluster
        )


@dataclass(frozen=True)
class Trajectory:
    """One simulated user's ordered item-interaction sequence."""

    items: np.ndarray

    def __post_init__(self):
        items = np.asarray(self.items, dtype=np.int64)
        if items.ndim != 1 or items.size < 1:
            raise InputError("trajectory must contain at least one item")
        if items.min() < 0:
            raise InputError("trajectory items must be non-negative ids")
        items.setflags(write=False)
        object.__setattr__(self, "items", items)

    def __len__(self) -> int:
        return self.items.size


def build_transition_matrix(spec: TransitionSpec) -> np.ndarray:
    """The row-stochastic transition matrix implied by ``spec``."""
    m = spec.layout.items_per_cluster
    n = spec.layout.total_items
    p = np.full((n, n), spec.cross_cluster_prob)
    for k in range(spec.layout.num_clusters):
        p[k * m : (k + 1) * m, k * m : (k + 1) * m] = spec.same_cluster_prob
    return p


def validate_stochastic(p, tol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise InputError(f"transition matrix must be square, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InputError("transition matrix entries must be finite and non-negative")
    row_err = np.abs(p.sum(axis=1) - 1.0).max()
    if row_err > tol:
        raise InputError(f"transition matrix rows must sum to 1, max error {row_err!r}")
    return p


def stationary_distribution(
    p,
    tol: float = STATIONARY_TOL,
    max_iters: int = STATIONARY_MAX_ITERS,
) -> np.ndarray:
    """Fixed point pi of pi^T P = pi^T by power iteration from uniform."""
    p = validate_stochastic(p)
    n = p.shape[0]
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iters):
        nxt = pi @ p
        nxt /= nxt.sum()
        residual = np.abs(nxt - pi).max()
        pi = nxt
        if residual <= tol:
            return pi
    raise NumericalError(
        f"power iteration did not reach residual {tol} in {max_iters} iterations",
        last_iterate=pi,
        residual=residual,
    )


def _inverse_cdf_rows(cum_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    # searchsorted(cum, u, side="right") for one row per draw
    return (cum_rows <= u[:, None]).sum(axis=1)


def sample_trajectory(p, length: int, rng: Rng) -> Trajectory:
    """One chain rollout: stationary start, then row-conditional draws."""
    p = validate_stochastic(p)
    if length < 1:
        raise InputError(f"trajectory length must be >= 1, got {length}")
    pi = stationary_distribution(p)
    items = np.empty(length, dtype=np.int64)
    items[0] = sample_categorical(rng, pi)
    cum_rows = np.cumsum(p, axis=1)
    cum_rows /= cum_rows[:, -1:]
    for t in range(1, length):
        cum = cum_rows[items[t - 1]]
        items[t] = np.searchsorted(cum, rng.random(), side="right")
    return Trajectory(items)


def sample_trajectories(p, count: int, length: int, rng: Rng) -> list[Trajectory]:
    """A batch of independent rollouts, vectorized across sequences.

    Follows the same chain law as sample_trajectory; draws are consumed in
    step-major order so the batch is a deterministic function of ``rng``.
    """
    p = validate_stochastic(p)
    if count < 0:
        raise InputError(f"count must be >= 0, got {count}")
    if length < 1:
        raise InputError(f"trajectory length must be >= 1, got {length}")
    if count == 0:
        return []
    pi = stationary_distribution(p)
    cum0 = np.cumsum(pi)
    cum0 /= cum0[-1]
    cum_rows = np.cumsum(p, axis=1)
    cum_rows /= cum_rows[:, -1:]
    items = np.empty((count, length), dtype=np.int64)
    items[:, 0] = np.searchsorted(cum0, rng.random(count), side="right")
    for t in range(1, length):
        items[:, t] = _inverse_cdf_rows(cum_rows[items[:, t - 1]], rng.random(count))
    return [Trajectory(row) for row in items]


def cluster_agreement_probability(spec: TransitionSpec, k: int) -> float:
    """Probability that two items k steps apart share a cluster.

    Computed by the scalar recurrence
    p_1 = p_same,  p_k = p_{k-1}*p_1 + q_{k-1}*q_1/(K-1)  with q = 1 - p,
    which costs O(k) instead of a k-th matrix power.
    """
    if k < 1:
        raise InputError(f"step separation must be >= 1, got {k}")
    if spec.layout.num_clusters == 1:
        return 1.0
    p1 = spec.p_same
    q1 = 1.0 - p1
    denom = spec.layout.num_clusters - 1
    p = p1
    for _ in range(k - 1):
        p = p * p1 + (1.0 - p) * q1 / denom
    return p


def expected_cluster_divergence(sampler, spec: TransitionSpec) -> float:
    """E[q_{N+1}] under the dropout sampler's distribution of N.

    q_k = 1 - cluster_agreement_probability(k) is the probability that the
    prediction target sits in a different cluster than the last kept item, a
    proxy for the difficulty of the training task when the most recent N
    items are dropped.
    """
    total = 0.0
    support = sampler.support()
    for n in support:
        total += 1.0 - cluster_agreement_probability(spec, n + 1)
    return total / len(support)


def trajectories_to_rows(trajectories, layout: ClusterLayout):
    """Yield (sequence_id, position, item_id, cluster_id) CSV rows."""
    for seq_id, traj in enumerate(trajectories):
        for pos, item in enumerate(traj.items):
            yield seq_id, pos, int(item), int(layout.cluster_of(int(item)))
