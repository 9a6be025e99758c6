"""Jacobian spectral analysis and the experiment sweep driver.

The spectral analysis chains per-step recurrent Jacobians into the product
dh_T/dh_{T-k} and reads off eigenvalue moduli; the product is accumulated
with a scalar log-scale rescaling so it survives k ~ 100 without under- or
overflow (a uniform scalar factor shifts all eigenvalues alike, preserving
their ratios exactly).

The sweep driver trains every (dropout variant, expected count) cell across
repeated seeds and aggregates the evaluation metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .augmentation import DropoutSampler
from .errors import InputError
from .metrics import MetricReport, aggregate_reports
from .numerics import derive_seed, eigenvalues
from .seqmodel import ModelParams, forward_batch, step_jacobian
from .training import TrainConfig, train


def chained_jacobian_moduli(params: ModelParams, sequence, k: int) -> np.ndarray:
    """Eigenvalue moduli of dh_T/dh_{T-k} along one sequence.

    Runs a forward pass, multiplies the k per-step Jacobians ending at the
    final step (rescaling by the running max-norm, tracking the log factor),
    and returns exp(log factor) times the moduli of the scaled product.
    """
    trace = forward_batch(params, [sequence])
    length = trace.sequence_length(0)
    if not 1 <= k < length:
        raise InputError(f"k must lie in [1, {length}), got {k}")
    hidden = params.config.hidden_dim
    product = np.eye(hidden)
    log_factor = 0.0
    for i in range(length - k, length):
        product = step_jacobian(params, trace, i) @ product
        scale = np.abs(product).max()
        if scale > 0:
            product /= scale
            log_factor += math.log(scale)
    moduli = np.abs(eigenvalues(product))
    return moduli * math.exp(log_factor)


@dataclass(frozen=True)
class SpectrumCurve:
    """Mean eigenvalue modulus of dh_T/dh_{T-k} per k, with the standard
    error over evaluation sequences and the max modulus for inspection."""

    ks: np.ndarray
    mean_modulus: np.ndarray
    stderr: np.ndarray
    max_modulus: np.ndarray


def spectrum_curve(params: ModelParams, eval_sequences, ks) -> SpectrumCurve:
    """Batch-averaged Jacobian spectrum across time separations ``ks``.

    One forward pass and one set of per-step Jacobians per sequence; the
    products for all requested k are snapshots of a single right-to-left
    accumulation.
    """
    ks = np.asarray(sorted(int(k) for k in ks), dtype=np.int64)
    if ks.size == 0:
        raise InputError("at least one k required")
    sequences = list(eval_sequences)
    if not sequences:
        raise InputError("at least one evaluation sequence required")
    hidden = params.config.hidden_dim
    per_seq_mean = np.empty((len(sequences), ks.size))
    per_seq_max = np.empty((len(sequences), ks.size))
    for s, seq in enumerate(sequences):
        trace = forward_batch(params, [seq])
        length = trace.sequence_length(0)
        if ks.max() >= length:
            raise InputError(
                f"k={ks.max()} requires sequences longer than {ks.max()}, got {length}"
            )
        jacobians = [step_jacobian(params, trace, i) for i in range(length)]
        product = np.eye(hidden)
        log_factor = 0.0
        next_k = 0
        # product after j factors equals dh_T/dh_{T-j}
        for j in range(1, length):
            product = product @ jacobians[length - j]
            scale = np.abs(product).max()
            if scale > 0:
                product /= scale
                log_factor += math.log(scale)
            if next_k < ks.size and ks[next_k] == j:
                moduli = np.abs(eigenvalues(product)) * math.exp(log_factor)
                per_seq_mean[s, next_k] = moduli.mean()
                per_seq_max[s, next_k] = moduli.max()
                next_k += 1
            if next_k == ks.size:
                break
    count = len(sequences)
    stderr = (
        per_seq_mean.std(axis=0, ddof=1) / math.sqrt(count)
        if count > 1
        else np.zeros(ks.size)
    )
    return SpectrumCurve(
        ks=ks,
        mean_modulus=per_seq_mean.mean(axis=0),
        stderr=stderr,
        max_modulus=per_seq_max.max(axis=0),
    )


@dataclass(frozen=True)
class SweepCell:
    """One sweep configuration: a dropout variant at a target E[N].

    The two variants are matched through the expected dropout count:
    fixed uses N = e exactly, uniform draws N ~ U[0, 2e] (inclusive), so
    both have E[N] = e.  e = 0 degenerates to the shared baseline.
    """

    variant: str  # "baseline" | "fixed" | "uniform"
    expected_dropout: int

    def __post_init__(self):
        if self.variant not in ("baseline", "fixed", "uniform"):
            raise InputError(f"unknown sweep variant {self.variant!r}")
        if self.expected_dropout < 0:
            raise InputError("expected dropout must be >= 0")
        if self.variant == "baseline" and self.expected_dropout != 0:
            raise InputError("baseline cells must have expected dropout 0")

    def sampler(self) -> DropoutSampler:
        if self.variant == "fixed" or self.variant == "baseline":
            return DropoutSampler.fixed(self.expected_dropout)
        return DropoutSampler.uniform(0, 2 * self.expected_dropout, inclusive=True)


def default_cells(expected_values=(0, 1, 2, 3, 4, 5), share_baseline: bool = True):
    """The standard sweep grid over both variants.

    With share_baseline, E[N]=0 appears once (the two variants are identical
    by construction there); otherwise each variant gets its own E[N]=0 cell.
    """
    cells = []
    for e in expected_values:
        if int(e) == 0:
            if share_baseline:
                cells.append(SweepCell("baseline", 0))
            else:
                cells.append(SweepCell("fixed", 0))
                cells.append(SweepCell("uniform", 0))
        else:
            cells.append(SweepCell("fixed", int(e)))
            cells.append(SweepCell("uniform", int(e)))
    # Deterministic ordering: variant major, E[N] minor.
    order = {"baseline": 0, "fixed": 1, "uniform": 2}
    cells.sort(key=lambda c: (order[c.variant], c.expected_dropout))
    return tuple(cells)


@dataclass(frozen=True)
class SweepPlan:
    cells: tuple[SweepCell, ...]
    base: TrainConfig
    repeats: int = 10

    def __post_init__(self):
        if self.repeats < 1:
            raise InputError("repeats must be >= 1")
        if not self.cells:
            raise InputError("plan needs at least one cell")

    def run_seed(self, cell_index: int, repeat: int) -> int:
        return derive_seed(self.base.seed, "sweep", cell_index, repeat)


@dataclass
class RunRecord:
    """Per-cell sweep outcome: per-seed metric reports plus the aggregate."""

    cell: SweepCell
    seeds: list[int] = field(default_factory=list)
    reports: list[MetricReport] = field(default_factory=list)
    aggregate: MetricReport | None = None
    error: str | None = None


def _run_one(base: TrainConfig, cell: SweepCell, seed: int) -> MetricReport:
    config = replace(base, sampler=cell.sampler(), seed=seed)
    _, log = train(config)
    return log.final_report


def run_sweep(plan: SweepPlan, workers: int = 1, progress=None) -> list[RunRecord]:
    """Train and evaluate every (cell, repeat) combination.

    Seeds derive deterministically from (base seed, cell index, repeat), and
    results aggregate in cell order, so the outcome is independent of the
    worker count.  A failed run aborts its cell with a diagnostic; the other
    cells still complete.
    """
    jobs = [
        (ci, rep, plan.run_seed(ci, rep))
        for ci in range(len(plan.cells))
        for rep in range(plan.repeats)
    ]
    results: dict[tuple[int, int], MetricReport | Exception] = {}
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                (ci, rep): pool.submit(_run_one, plan.base, plan.cells[ci], seed)
                for ci, rep, seed in jobs
            }
            for key, future in futures.items():
                try:
                    results[key] = future.result()
                except Exception as exc:  # recorded per cell below
                    results[key] = exc
                if progress is not None:
                    progress(key)
    else:
        for ci, rep, seed in jobs:
            try:
                results[(ci, rep)] = _run_one(plan.base, plan.cells[ci], seed)
            except Exception as exc:
                results[(ci, rep)] = exc
            if progress is not None:
                progress((ci, rep))
    records = []
    for ci, cell in enumerate(plan.cells):
        record = RunRecord(cell=cell)
        for rep in range(plan.repeats):
            outcome = results[(ci, rep)]
            record.seeds.append(plan.run_seed(ci, rep))
            if isinstance(outcome, Exception):
                record.error = f"repeat {rep} (seed {plan.run_seed(ci, rep)}): {outcome}"
                break
            record.reports.append(outcome)
        if record.error is None:
            record.aggregate = aggregate_reports(record.reports)
        records.append(record)
    return records
