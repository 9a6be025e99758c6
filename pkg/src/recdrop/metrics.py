"""Evaluation metrics: ranking accuracy, diversity, calibration, and the
recency-bias curve.

Evaluation always feeds the model raw, untruncated histories: each length-L
trajectory becomes a (first L-1 items -> last item) prediction task.  With a
single relevant item per sequence, mAP@k reduces to truncated reciprocal
rank; ranking ties are broken by ascending item id so every number here is
bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .seqmodel import ModelParams, PROB_FLOOR, predict_batch
from .simulator import ClusterLayout, Trajectory


@dataclass(frozen=True)
class MetricReport:
    map1: float
    map10: float
    entropy: float
    kl: float
    map1_se: float | None = None
    map10_se: float | None = None
    entropy_se: float | None = None
    kl_se: float | None = None

    METRIC_FIELDS = ("map1", "map10", "entropy", "kl")


@dataclass
class EvalBatch:
    """Raw evaluation sequences with the model's predictive distributions.

    ``inputs`` are the untruncated histories (all but the last item) and
    ``targets`` the held-out last items; ``probs`` aligns row-for-row.
    """

    sequences: np.ndarray  # (B, L) full trajectories
    inputs: np.ndarray     # (B, L-1)
    targets: np.ndarray    # (B,)
    probs: np.ndarray      # (B, V)

    def __post_init__(self):
        if self.probs.shape[0] != self.sequences.shape[0]:
            raise InputError("one predictive distribution per sequence required")

    @property
    def batch_size(self) -> int:
        return self.sequences.shape[0]

    @property
    def input_length(self) -> int:
        return self.inputs.shape[1]


def make_eval_batch(params: ModelParams, sequences) -> EvalBatch:
    """Score raw trajectories: inputs are all-but-last, targets the last item."""
    rows = []
    for seq in sequences:
        items = seq.items if isinstance(seq, Trajectory) else np.asarray(seq, dtype=np.int64)
        if items.size < 2:
            raise InputError("evaluation sequences need at least 2 items")
        rows.append(items)
    lengths = {r.size for r in rows}
    if len(lengths) != 1:
        raise InputError("evaluation sequences must share one length")
    full = np.stack(rows)
    inputs = full[:, :-1]
    targets = full[:, -1].copy()
    probs = predict_batch(params, list(inputs))
    return EvalBatch(sequences=full, inputs=inputs, targets=targets, probs=probs)


def target_ranks(batch: EvalBatch) -> np.ndarray:
    """1-based rank of each target under descending probability, ties broken
    by ascending item id."""
    b = batch.batch_size
    p_target = batch.probs[np.arange(b), batch.targets]
    higher = (batch.probs > p_target[:, None]).sum(axis=1)
    ids = np.arange(batch.probs.shape[1])
    tied_before = (
        (batch.probs == p_target[:, None]) & (ids[None, :] < batch.targets[:, None])
    ).sum(axis=1)
    return 1 + higher + tied_before


def map_at_k(batch: EvalBatch, k: int) -> float:
    """Mean truncated reciprocal rank: 1/rank if rank <= k, else 0."""
    if k < 1:
        raise InputError(f"k must be >= 1, got {k}")
    ranks = target_ranks(batch)
    scores = np.where(ranks <= k, 1.0 / ranks, 0.0)
    return float(scores.mean())


def predictive_entropy(batch: EvalBatch) -> float:
    """Mean entropy of the predictive distributions, in nats (0 ln 0 = 0)."""
    p = batch.probs
    terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return float(-terms.sum(axis=1).mean())


def kl_from_stationary(batch: EvalBatch, stationary) -> float:
    """Mean KL(stationary || predictive), with predictive floored at 1e-12."""
    u = np.asarray(stationary, dtype=float)
    if u.shape != (batch.probs.shape[1],) or np.any(u <= 0):
        raise InputError("stationary distribution must be strictly positive over the vocab")
    p = np.maximum(batch.probs, PROB_FLOOR)
    kl_rows = (u * (np.log(u) - np.log(p))).sum(axis=1)
    return float(kl_rows.mean())


def evaluate_model(params: ModelParams, sequences, stationary) -> MetricReport:
    """The four headline metrics on raw evaluation sequences."""
    batch = make_eval_batch(params, sequences)
    return MetricReport(
        map1=map_at_k(batch, 1),
        map10=map_at_k(batch, 10),
        entropy=predictive_entropy(batch),
        kl=kl_from_stationary(batch, stationary),
    )


@dataclass(frozen=True)
class BiasCurve:
    """Predictive mass on the cluster of the input item k steps before the
    end, as a function of k."""

    ks: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.ks.shape != self.values.shape:
            raise InputError("bias curve needs one value per k")


def bias_curve(batch: EvalBatch, layout: ClusterLayout, ks) -> BiasCurve:
    """d(k): mean predictive mass on items sharing a cluster with the input
    item consumed k steps before the end (k=1 is the most recent item)."""
    ks = np.asarray(list(ks), dtype=np.int64)
    if ks.size == 0:
        raise InputError("at least one k required")
    if ks.min() < 1 or ks.max() > batch.input_length:
        raise InputError(
            f"every k must lie in [1, {batch.input_length}] for these inputs"
        )
    m = layout.items_per_cluster
    cluster_mass = batch.probs.reshape(
        batch.batch_size, layout.num_clusters, m
    ).sum(axis=2)
    values = np.empty(ks.size)
    rows = np.arange(batch.batch_size)
    for i, k in enumerate(ks):
        ref = batch.inputs[:, batch.input_length - int(k)]
        values[i] = cluster_mass[rows, layout.cluster_of(ref)].mean()
    return BiasCurve(ks=ks, values=values)


def heatmap(batch: EvalBatch, n: int) -> np.ndarray:
    """Predictive probabilities of the first n evaluation sequences (n x V)."""
    if n < 0 or n > batch.batch_size:
        raise InputError(f"heatmap rows must lie in [0, {batch.batch_size}]")
    return batch.probs[:n].copy()


def aggregate_reports(reports) -> MetricReport:
    """Mean and standard error of each metric across seeds."""
    reports = list(reports)
    if not reports:
        raise InputError("cannot aggregate zero reports")
    values = {
        name: np.array([getattr(r, name) for r in reports])
        for name in MetricReport.METRIC_FIELDS
    }
    n = len(reports)
    means = {name: float(v.mean()) for name, v in values.items()}
    ses = {
        f"{name}_se": float(v.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        for name, v in values.items()
    }
    return MetricReport(**means, **ses)
