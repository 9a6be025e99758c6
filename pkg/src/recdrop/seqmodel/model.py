"""The sequence model: embeddings, a gated recurrent cell, two ReLU head
layers, and a temperature softmax over the corpus.

The recurrent cell follows the original gating convention

    z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)          (update gate)
    r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)          (reset gate)
    c_t = tanh(W_c x_t + U_c (r_t * h_{t-1}) + b_c)     (candidate)
    h_t = (1 - z_t) * h_{t-1} + z_t * c_t

so the update-gate complement (1 - z) is the carry coefficient on the old
state.  The head is s = relu(W2 relu(W1 h_T + b1) + b2) and the predictive
distribution is softmax(s @ V^T / temperature) over the item vocabulary.

Everything here is float64 and fully deterministic.  Batched passes process
sequences right-aligned with an activity mask, so variable-length inputs
(from recency dropout) share one fixed-shape code path.  All gradients and
Jacobians are analytic; finite differences appear only in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from ..errors import InputError
from ..numerics import Rng
from ..simulator import Trajectory

PROB_FLOOR = 1e-12

TENSOR_FIELDS = (
    "embed",
    "w_z", "u_z", "b_z",
    "w_r", "u_r", "b_r",
    "w_c", "u_c", "b_c",
    "w1", "b1",
    "w2", "b2",
    "out_embed",
)


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 16
    hidden_dim: int = 32
    head_dims: tuple[int, int] = (32, 32)
    temperature: float = 1.0

    def __post_init__(self):
        dims = (self.vocab_size, self.embed_dim, self.hidden_dim, *self.head_dims)
        if any(int(d) < 1 for d in dims):
            raise InputError(f"all model dimensions must be >= 1, got {self}")
        if not self.temperature > 0:
            raise InputError(f"temperature must be positive, got {self.temperature}")
        object.__setattr__(self, "head_dims", tuple(int(d) for d in self.head_dims))

    def tensor_shapes(self) -> dict[str, tuple[int, ...]]:
        v, e, h = self.vocab_size, self.embed_dim, self.hidden_dim
        d1, d2 = self.head_dims
        return {
            "embed": (v, e),
            "w_z": (h, e), "u_z": (h, h), "b_z": (h,),
            "w_r": (h, e), "u_r": (h, h), "b_r": (h,),
            "w_c": (h, e), "u_c": (h, h), "b_c": (h,),
            "w1": (d1, h), "b1": (d1,),
            "w2": (d2, d1), "b2": (d2,),
            "out_embed": (v, d2),
        }


@dataclass
class ModelParams:
    """All parameter tensors.  Also used as the gradient container, since
    gradients share names and shapes with their parameters."""

    config: ModelConfig
    embed: np.ndarray
    w_z: np.ndarray
    u_z: np.ndarray
    b_z: np.ndarray
    w_r: np.ndarray
    u_r: np.ndarray
    b_r: np.ndarray
    w_c: np.ndarray
    u_c: np.ndarray
    b_c: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    out_embed: np.ndarray

    def tensors(self):
        for name in TENSOR_FIELDS:
            yield name, getattr(self, name)

    @classmethod
    def zeros(cls, config: ModelConfig) -> "ModelParams":
        shapes = config.tensor_shapes()
        return cls(config, **{n: np.zeros(s) for n, s in shapes.items()})

    def copy(self) -> "ModelParams":
        return replace(self, **{n: t.copy() for n, t in self.tensors()})

    def validate_shapes(self) -> None:
        for name, expect in self.config.tensor_shapes().items():
            got = getattr(self, name)
            if got.shape != expect:
                raise InputError(f"tensor {name} has shape {got.shape}, expected {expect}")
            if not np.all(np.isfinite(got)):
                raise InputError(f"tensor {name} has non-finite entries")


Gradients = ModelParams


def init_params(config: ModelConfig, rng: Rng) -> ModelParams:
    """Uniform init with per-tensor scale 1/sqrt(fan_in); biases zero.

    fan_in is the tensor's trailing dimension.  Tensors are drawn in the
    fixed TENSOR_FIELDS order, so the result is a pure function of the rng.
    """
    out = {}
    for name, shape in config.tensor_shapes().items():
        if len(shape) == 1:
            out[name] = np.zeros(shape)
        else:
            scale = 1.0 / np.sqrt(shape[-1])
            out[name] = rng.uniform(-scale, scale, shape)
    return ModelParams(config, **out)


@dataclass
class Workspace:
    """Preallocated buffers for fixed-shape batched passes.

    Repeated multi-megabyte allocations dominate the step time otherwise
    (the allocator returns them to the OS each step), so the training loop
    owns one of these and threads it through forward/backward.
    """

    batch: int
    length: int
    config: ModelConfig
    arrays: dict = field(default_factory=dict)

    def __post_init__(self):
        b, l = self.batch, self.length
        e, h = self.config.embed_dim, self.config.hidden_dim
        self.arrays = {
            "xs": np.empty((b, l, e)),
            "xin": np.empty((b * l, 3 * h)),
            "hs": np.empty((l + 1, b, h)),
            "zs": np.empty((l, b, h)),
            "rs": np.empty((l, b, h)),
            "cs": np.empty((l, b, h)),
            "dazs": np.empty((l, b, h)),
            "dars": np.empty((l, b, h)),
            "dacs": np.empty((l, b, h)),
        }

    def fits(self, batch: int, length: int, config: ModelConfig) -> bool:
        return self.batch == batch and self.length == length and self.config == config


@dataclass
class ForwardTrace:
    """Cached activations of one batched forward pass.

    Sequences are right-aligned: mask[b, t] says whether step t is active
    for sequence b, and h_0 (the zero initial state) sits at hs[0].  The
    arrays are laid out step-major, batch-second.
    """

    params: ModelParams
    items: np.ndarray       # (B, L) padded item ids
    mask: np.ndarray        # (B, L) activity mask
    lengths: np.ndarray     # (B,)
    hs: np.ndarray          # (L+1, B, H) hidden states, hs[0] == 0
    zs: np.ndarray          # (L, B, H) update gates
    rs: np.ndarray          # (L, B, H) reset gates
    cs: np.ndarray          # (L, B, H) candidates
    xs: np.ndarray          # (B, L, E) embedded inputs
    a1_pre: np.ndarray      # (B, d1) first head pre-activation
    a2_pre: np.ndarray      # (B, d2) second head pre-activation
    state: np.ndarray       # (B, d2) final state s (post-ReLU)
    logits: np.ndarray      # (B, V)
    probs: np.ndarray       # (B, V)

    @property
    def batch_size(self) -> int:
        return self.items.shape[0]

    @property
    def padded_length(self) -> int:
        return self.items.shape[1]

    def sequence_length(self, seq: int = 0) -> int:
        return int(self.lengths[seq])

    def hidden_states(self, seq: int = 0) -> np.ndarray:
        """h_0 .. h_T for one sequence (active steps only), shape (T+1, H)."""
        offset = self.padded_length - self.sequence_length(seq)
        return self.hs[offset:, seq, :]


def _pad_batch(sequences, vocab_size: int, pad_to: int | None):
    arrays = []
    for seq in sequences:
        items = seq.items if isinstance(seq, Trajectory) else np.asarray(seq, dtype=np.int64)
        if items.ndim != 1 or items.size < 1:
            raise InputError("every sequence must be a non-empty 1-D item array")
        arrays.append(items)
    if not arrays:
        raise InputError("batch must contain at least one sequence")
    lengths = np.array([a.size for a in arrays], dtype=np.int64)
    length = int(lengths.max()) if pad_to is None else int(pad_to)
    if length < lengths.max():
        raise InputError(f"pad_to={pad_to} is shorter than the longest sequence")
    batch = len(arrays)
    items = np.zeros((batch, length), dtype=np.int64)
    mask = np.zeros((batch, length), dtype=bool)
    for b, a in enumerate(arrays):
        if a.min() < 0 or a.max() >= vocab_size:
            raise InputError(
                f"sequence {b} has item ids outside [0, {vocab_size})"
            )
        items[b, length - a.size :] = a
        mask[b, length - a.size :] = True
    return items, mask, lengths


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True)


def _head_forward(params: ModelParams, h_final: np.ndarray):
    a1_pre = h_final @ params.w1.T + params.b1
    a1 = np.maximum(a1_pre, 0.0)
    a2_pre = a1 @ params.w2.T + params.b2
    state = np.maximum(a2_pre, 0.0)
    logits = state @ params.out_embed.T
    probs = _softmax_rows(logits / params.config.temperature)
    return a1_pre, a2_pre, state, logits, probs


def forward_batch(
    params: ModelParams,
    sequences,
    pad_to: int | None = None,
    workspace: Workspace | None = None,
) -> ForwardTrace:
    """Run the model over a batch of sequences, caching everything BPTT needs."""
    cfg = params.config
    items, mask, lengths = _pad_batch(sequences, cfg.vocab_size, pad_to)
    batch, length = items.shape
    hidden = cfg.hidden_dim
    if workspace is None or not workspace.fits(batch, length, cfg):
        workspace = Workspace(batch, length, cfg)
    ws = workspace.arrays

    xs = ws["xs"]
    np.take(params.embed, items, axis=0, out=xs)
    # Input-side pre-activations for all gates and steps in one product.
    w_in = np.concatenate([params.w_z, params.w_r, params.w_c], axis=0)
    b_in = np.concatenate([params.b_z, params.b_r, params.b_c])
    xin = ws["xin"]
    np.matmul(xs.reshape(batch * length, cfg.embed_dim), w_in.T, out=xin)
    xin += b_in
    xin3 = xin.reshape(batch, length, 3 * hidden)
    u_zr = np.concatenate([params.u_z, params.u_r], axis=0)

    hs, zs, rs, cs = ws["hs"], ws["zs"], ws["rs"], ws["cs"]
    hs[0] = 0.0
    h = hs[0]
    all_active = bool(mask.all())
    for t in range(length):
        pre = xin3[:, t]
        hzr = h @ u_zr.T
        z = _sigmoid(pre[:, :hidden] + hzr[:, :hidden])
        r = _sigmoid(pre[:, hidden : 2 * hidden] + hzr[:, hidden:])
        c = np.tanh(pre[:, 2 * hidden :] + (r * h) @ params.u_c.T)
        h_new = h + z * (c - h)
        if not all_active:
            h_new = np.where(mask[:, t][:, None], h_new, h)
        hs[t + 1] = h_new
        zs[t] = z
        rs[t] = r
        cs[t] = c
        h = hs[t + 1]

    a1_pre, a2_pre, state, logits, probs = _head_forward(params, h)
    return ForwardTrace(
        params=params, items=items, mask=mask, lengths=lengths,
        hs=hs, zs=zs, rs=rs, cs=cs, xs=xs,
        a1_pre=a1_pre, a2_pre=a2_pre, state=state, logits=logits, probs=probs,
    )


def forward(params: ModelParams, sequence) -> tuple[ForwardTrace, np.ndarray]:
    """Single-sequence forward pass; returns the trace and the predictive
    distribution over the vocabulary."""
    trace = forward_batch(params, [sequence])
    return trace, trace.probs[0]


def predict_batch(params: ModelParams, sequences, chunk: int = 256) -> np.ndarray:
    """Predictive distributions only, without retaining per-step activations.

    Used on evaluation batches, where no gradients are needed.
    """
    cfg = params.config
    items, mask, lengths = _pad_batch(sequences, cfg.vocab_size, None)
    batch, length = items.shape
    hidden = cfg.hidden_dim
    probs = np.empty((batch, cfg.vocab_size))
    u_zr = np.concatenate([params.u_z, params.u_r], axis=0)
    w_in = np.concatenate([params.w_z, params.w_r, params.w_c], axis=0)
    b_in = np.concatenate([params.b_z, params.b_r, params.b_c])
    for start in range(0, batch, chunk):
        stop = min(start + chunk, batch)
        sub_items = items[start:stop]
        sub_mask = mask[start:stop]
        all_active = bool(sub_mask.all())
        h = np.zeros((stop - start, hidden))
        for t in range(length):
            x = params.embed[sub_items[:, t]]
            pre = x @ w_in.T + b_in
            hzr = h @ u_zr.T
            z = _sigmoid(pre[:, :hidden] + hzr[:, :hidden])
            r = _sigmoid(pre[:, hidden : 2 * hidden] + hzr[:, hidden:])
            c = np.tanh(pre[:, 2 * hidden :] + (r * h) @ params.u_c.T)
            h_new = h + z * (c - h)
            if not all_active:
                h_new = np.where(sub_mask[:, t][:, None], h_new, h)
            h = h_new
        probs[start:stop] = _head_forward(params, h)[4]
    return probs


def loss_nll(dist: np.ndarray, target: int) -> float:
    """Negative log-likelihood of the target under a predictive distribution,
    with a probability floor guarding -log(0)."""
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != 1:
        raise InputError("distribution must be a 1-D probability vector")
    if not 0 <= int(target) < dist.size:
        raise InputError(f"target {target} outside [0, {dist.size})")
    return float(-np.log(max(dist[int(target)], PROB_FLOOR)))


def batch_loss(trace: ForwardTrace, targets) -> float:
    """Mean negative log-likelihood over a batch."""
    targets = np.asarray(targets, dtype=np.int64)
    picked = trace.probs[np.arange(trace.batch_size), targets]
    return float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())


def _check_targets(trace: ForwardTrace, targets) -> np.ndarray:
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (trace.batch_size,):
        raise InputError(
            f"expected {trace.batch_size} targets, got shape {targets.shape}"
        )
    vocab = trace.params.config.vocab_size
    if targets.min() < 0 or targets.max() >= vocab:
        raise InputError(f"targets must lie in [0, {vocab})")
    return targets


def backward_batch(
    params: ModelParams,
    trace: ForwardTrace,
    targets,
    workspace: Workspace | None = None,
    track_hidden_grads: bool = False,
):
    """Analytic gradients of the mean NLL over the batch, by BPTT.

    Returns a Gradients container; with track_hidden_grads=True also returns
    the list of dL/dh_t vectors (t = L .. 0, reverse step order) for
    consistency checks against chained step Jacobians.
    """
    if trace.params is not params:
        raise InputError("trace was produced by different parameters")
    cfg = params.config
    targets = _check_targets(trace, targets)
    batch, length = trace.items.shape
    hidden = cfg.hidden_dim
    if workspace is None or not workspace.fits(batch, length, cfg):
        workspace = Workspace(batch, length, cfg)
    ws = workspace.arrays

    grads = ModelParams.zeros(cfg)
    # Softmax + NLL at temperature T: dL/dlogits = (p - onehot) / (T * B).
    dlogits = trace.probs.copy()
    dlogits[np.arange(batch), targets] -= 1.0
    dlogits /= cfg.temperature * batch
    grads.out_embed[:] = dlogits.T @ trace.state
    dstate = dlogits @ params.out_embed
    da2p = np.where(trace.a2_pre > 0, dstate, 0.0)
    a1 = np.maximum(trace.a1_pre, 0.0)
    grads.w2[:] = da2p.T @ a1
    grads.b2[:] = da2p.sum(axis=0)
    da1 = da2p @ params.w2
    da1p = np.where(trace.a1_pre > 0, da1, 0.0)
    grads.w1[:] = da1p.T @ trace.hs[length]
    grads.b1[:] = da1p.sum(axis=0)
    dh = da1p @ params.w1

    u_zr = np.concatenate([params.u_z, params.u_r], axis=0)
    dazs, dars, dacs = ws["dazs"], ws["dars"], ws["dacs"]
    hidden_grads = [dh.copy()] if track_hidden_grads else None
    all_active = bool(trace.mask.all())
    for t in range(length - 1, -1, -1):
        hp = trace.hs[t]
        z, r, c = trace.zs[t], trace.rs[t], trace.cs[t]
        if all_active:
            dh_act = dh
            passthrough = 0.0
        else:
            m = trace.mask[:, t][:, None]
            dh_act = np.where(m, dh, 0.0)
            passthrough = np.where(m, 0.0, dh)
        daz = dh_act * (c - hp) * z * (1.0 - z)
        dac = dh_act * z * (1.0 - c * c)
        dg = dac @ params.u_c  # grad w.r.t. (r * hp)
        dar = dg * hp * r * (1.0 - r)
        dzr = np.concatenate([daz, dar], axis=1)
        dh = dh_act * (1.0 - z) + dzr @ u_zr + dg * r + passthrough
        dazs[t] = daz
        dars[t] = dar
        dacs[t] = dac
        if track_hidden_grads:
            hidden_grads.append(dh.copy())

    # Parameter gradients accumulate over all steps at once.
    flat = batch * length
    xs_flat = trace.xs.transpose(1, 0, 2).reshape(flat, cfg.embed_dim)
    hp_flat = trace.hs[:-1].reshape(flat, hidden)
    daz_f = dazs.reshape(flat, hidden)
    dar_f = dars.reshape(flat, hidden)
    dac_f = dacs.reshape(flat, hidden)
    grads.w_z[:] = daz_f.T @ xs_flat
    grads.u_z[:] = daz_f.T @ hp_flat
    grads.b_z[:] = daz_f.sum(axis=0)
    grads.w_r[:] = dar_f.T @ xs_flat
    grads.u_r[:] = dar_f.T @ hp_flat
    grads.b_r[:] = dar_f.sum(axis=0)
    grads.w_c[:] = dac_f.T @ xs_flat
    grads.u_c[:] = dac_f.T @ (trace.rs.reshape(flat, hidden) * hp_flat)
    grads.b_c[:] = dac_f.sum(axis=0)
    dx = daz_f @ params.w_z + dar_f @ params.w_r + dac_f @ params.w_c
    np.add.at(grads.embed, trace.items.T.reshape(flat), dx)

    if track_hidden_grads:
        return grads, hidden_grads
    return grads


def backward(params: ModelParams, trace: ForwardTrace, target: int) -> Gradients:
    """Gradients of loss_nll for a single-sequence trace."""
    if trace.batch_size != 1:
        raise InputError("backward expects a single-sequence trace")
    return backward_batch(params, trace, np.array([int(target)]))


def step_jacobian(params: ModelParams, trace: ForwardTrace, i: int, seq: int = 0) -> np.ndarray:
    """Analytic Jacobian dh_{i+1}/dh_i of the recurrent cell at step i.

    Uses the activations cached in the trace; step indices count the active
    steps of the given sequence (0 is the first consumed item).
    """
    if trace.params is not params:
        raise InputError("trace was produced by different parameters")
    length = trace.sequence_length(seq)
    if not 0 <= i < length:
        raise InputError(f"step index {i} outside [0, {length})")
    t = trace.padded_length - length + i
    hp = trace.hs[t, seq]
    z, r, c = trace.zs[t, seq], trace.rs[t, seq], trace.cs[t, seq]
    # dh/dhp = diag(1-z) + diag((c-hp) z(1-z)) U_z
    #          + diag(z(1-c^2)) U_c (diag(r) + diag(hp r(1-r)) U_r)
    inner = r[:, None] * np.eye(params.config.hidden_dim)
    inner += (hp * r * (1.0 - r))[:, None] * params.u_r
    jac = np.diag(1.0 - z).astype(float)
    jac += ((c - hp) * z * (1.0 - z))[:, None] * params.u_z
    jac += (z * (1.0 - c * c))[:, None] * (params.u_c @ inner)
    return jac
