"""Batch construction, the adaptive-moment optimizer, and the training loop.

Every step draws a fresh batch of simulated trajectories (infinite-data
regime), applies recency dropout to the inputs, and takes one optimizer
step on the mean next-item NLL.  All randomness flows through labeled
substreams of the run seed, so a run is a pure function of its config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import threadpoolctl

from .augmentation import AugmentedExample, DropoutSampler, apply_recency_dropout
from .errors import InputError, NumericalError
from .metrics import MetricReport, evaluate_model
from .numerics import Rng
from .seqmodel import (
    ModelConfig,
    ModelParams,
    Workspace,
    backward_batch,
    batch_loss,
    forward_batch,
    init_params,
)
from .simulator import (
    ClusterLayout,
    TransitionSpec,
    Trajectory,
    build_transition_matrix,
    sample_trajectories,
    stationary_distribution,
)


@dataclass(frozen=True)
class TrainConfig:
    transition: TransitionSpec
    model: ModelConfig
    sampler: DropoutSampler = DropoutSampler.fixed(0)
    steps: int = 500
    batch_size: int = 128
    sequence_length: int = 100
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float = 5.0
    seed: int = 0
    eval_batch_size: int = 1000
    eval_every: int = 100

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise InputError("steps and batch_size must be >= 1")
        if self.sequence_length < 2:
            raise InputError("sequence_length must be >= 2 (input plus target)")
        if self.model.vocab_size != self.transition.layout.total_items:
            raise InputError(
                f"model vocab ({self.model.vocab_size}) must equal the corpus size "
                f"({self.transition.layout.total_items})"
            )


@dataclass
class OptimizerState:
    """First/second-moment accumulators plus the update counter."""

    first: ModelParams
    second: ModelParams
    step_count: int = 0

    @classmethod
    def zeros(cls, config: ModelConfig) -> "OptimizerState":
        return cls(first=ModelParams.zeros(config), second=ModelParams.zeros(config))


def adam_update(
    params: ModelParams,
    grads: ModelParams,
    state: OptimizerState,
    learning_rate: float,
    beta1: float,
    beta2: float,
    epsilon: float,
) -> None:
    """One bias-corrected adaptive-moment update, in place."""
    state.step_count += 1
    t = state.step_count
    correct1 = 1.0 - beta1**t
    correct2 = 1.0 - beta2**t
    for name, tensor in params.tensors():
        g = getattr(grads, name)
        m = getattr(state.first, name)
        v = getattr(state.second, name)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        tensor -= learning_rate * (m / correct1) / (np.sqrt(v / correct2) + epsilon)


def global_grad_norm(grads: ModelParams) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for _, g in grads.tensors()))


def clip_gradients(grads: ModelParams, max_norm: float) -> float:
    """Scale gradients to a global norm of at most max_norm; returns the
    pre-clip norm."""
    norm = global_grad_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for _, g in grads.tensors():
            g *= scale
    return norm


@dataclass(frozen=True)
class Snapshot:
    step: int
    report: MetricReport


@dataclass
class TrainLog:
    losses: list[float] = field(default_factory=list)
    snapshots: list[Snapshot] = field(default_factory=list)

    @property
    def final_report(self) -> MetricReport:
        if not self.snapshots:
            raise InputError("training log has no evaluation snapshots")
        return self.snapshots[-1].report


def make_batch(spec: TransitionSpec, config: TrainConfig, rng: Rng) -> list[AugmentedExample]:
    """One training batch: fresh trajectories, truncated inputs, targets.

    Trajectories and dropout counts come from distinct substreams of ``rng``
    so turning dropout on or off never perturbs the simulated data.
    """
    p = build_transition_matrix(spec)
    trajectories = sample_trajectories(
        p, config.batch_size, config.sequence_length, rng.substream("trajectories")
    )
    counts = config.sampler.sample_batch(rng.substream("dropout"), config.batch_size)
    examples = []
    for traj, n in zip(trajectories, counts):
        history = Trajectory(traj.items[:-1])
        truncated = apply_recency_dropout(history, int(n))
        examples.append(
            AugmentedExample(
                input=truncated,
                target=int(traj.items[-1]),
                dropped_count=len(history) - len(truncated),
            )
        )
    return examples


def train(config: TrainConfig, progress=None) -> tuple[ModelParams, TrainLog]:
    """Run the full training loop; returns final parameters and the log.

    The log carries per-step losses and periodic evaluation snapshots on a
    fixed held-out batch (always including one after the final step).
    BLAS threading is pinned to one thread for the duration: every product
    in this model is far too small to amortize thread handoffs, and sweep
    workers parallelize across runs instead.
    """
    with threadpoolctl.threadpool_limits(limits=1):
        return _train_loop(config, progress)


def _train_loop(config: TrainConfig, progress) -> tuple[ModelParams, TrainLog]:
    root = Rng(config.seed)
    p = build_transition_matrix(config.transition)
    stationary = stationary_distribution(p)
    params = init_params(config.model, root.substream("init"))
    opt = OptimizerState.zeros(config.model)
    eval_sequences = sample_trajectories(
        p, config.eval_batch_size, config.sequence_length, root.substream("eval")
    )
    input_len = config.sequence_length - 1
    workspace = Workspace(config.batch_size, input_len, config.model)
    log = TrainLog()
    for step in range(config.steps):
        batch = make_batch(config.transition, config, root.substream("batch", step))
        trace = forward_batch(
            params,
            [ex.input for ex in batch],
            pad_to=input_len,
            workspace=workspace,
        )
        targets = np.array([ex.target for ex in batch], dtype=np.int64)
        loss = batch_loss(trace, targets)
        if not math.isfinite(loss):
            raise NumericalError(
                f"non-finite loss at step {step}",
                step=step,
                param_norms={n: float(np.abs(t).max()) for n, t in params.tensors()},
            )
        grads = backward_batch(params, trace, targets, workspace=workspace)
        clip_gradients(grads, config.clip_norm)
        adam_update(
            params, grads, opt,
            config.learning_rate, config.beta1, config.beta2, config.epsilon,
        )
        log.losses.append(loss)
        is_last = step == config.steps - 1
        if is_last or (config.eval_every > 0 and (step + 1) % config.eval_every == 0):
            report = evaluate_model(params, eval_sequences, stationary)
            log.snapshots.append(Snapshot(step=step, report=report))
        if progress is not None:
            progress(step, loss)
    return params, log


def _kick_head_biases(params: ModelParams, sequences) -> None:
    # Move every ReLU unit decisively away from its kink so a central
    # difference at eps=1e-3 never straddles it.
    trace = forward_batch(params, sequences)
    params.b1 += 0.1 * np.where(trace.a1_pre.mean(axis=0) >= 0, 1.0, -1.0)
    trace = forward_batch(params, sequences)
    params.b2 += 0.1 * np.where(trace.a2_pre.mean(axis=0) >= 0, 1.0, -1.0)


def gradient_check(config: TrainConfig, eps: float = 1e-3) -> float:
    """Worst relative error of BPTT gradients vs central finite differences.

    Perturbs every parameter entry of a small model in both directions and
    compares (L+ - L-)/(2 eps) against the analytic gradient, with relative
    error |a - fd| / max(|a|, |fd|, 1e-6).  The model is nudged into general
    position first (no head pre-activation within the finite-difference
    step of a ReLU kink), since the comparison is only meaningful where the
    loss is smooth.
    """
    if config.model.vocab_size > 20 or config.model.hidden_dim > 8:
        raise InputError("gradient_check expects a small model (vocab <= 20, dims <= 8)")
    root = Rng(config.seed)
    params = init_params(config.model, root.substream("init"))
    p = build_transition_matrix(config.transition)
    length = min(config.sequence_length, 12)
    trajectories = sample_trajectories(p, 2, length, root.substream("check"))
    # Unequal lengths exercise the masked (right-aligned) batch path.
    sequences = [
        Trajectory(trajectories[0].items[:-1]),
        Trajectory(trajectories[1].items[: max(length - 4, 1)]),
    ]
    targets = np.array(
        [int(trajectories[0].items[-1]), int(trajectories[1].items[-1])], dtype=np.int64
    )
    _kick_head_biases(params, sequences)
    trace = forward_batch(params, sequences)
    kink = min(np.abs(trace.a1_pre).min(), np.abs(trace.a2_pre).min())
    if kink <= 5 * eps:
        raise NumericalError(
            "could not reach general position for the finite-difference check",
            kink_distance=kink,
        )
    grads = backward_batch(params, trace, targets)
    worst = 0.0
    for name, tensor in params.tensors():
        analytic = getattr(grads, name)
        it = np.nditer(tensor, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = tensor[idx]
            tensor[idx] = orig + eps
            loss_plus = batch_loss(forward_batch(params, sequences), targets)
            tensor[idx] = orig - eps
            loss_minus = batch_loss(forward_batch(params, sequences), targets)
            tensor[idx] = orig
            fd = (loss_plus - loss_minus) / (2.0 * eps)
            denom = max(abs(analytic[idx]), abs(fd), 1e-6)
            worst = max(worst, abs(analytic[idx] - fd) / denom)
    return worst


def small_check_config(seed: int = 7) -> TrainConfig:
    """The canonical small configuration for gradient checking."""
    layout = ClusterLayout(num_clusters=4, items_per_cluster=5)
    return TrainConfig(
        transition=TransitionSpec(layout=layout, p_same=0.7),
        model=ModelConfig(
            vocab_size=20, embed_dim=5, hidden_dim=8, head_dims=(8, 7), temperature=0.9
        ),
        steps=1,
        batch_size=2,
        sequence_length=12,
        seed=seed,
    )
