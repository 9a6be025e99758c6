"""Command-line orchestration.

Subcommands cover every experiment in the simulation study:

  simulate    write a batch of simulated trajectories as CSV
  train       train one model; emits a checkpoint and a training log
  eval        score a checkpoint: metric row plus a predictive heatmap
  sweep       train the (variant x E[N] x seed) grid and aggregate metrics
  jacobian    Jacobian spectrum curve of a checkpoint
  bias-curve  recency-bias curve d(k) of a checkpoint

Every command is a pure function of (resolved config, seed): reruns produce
byte-identical outputs, checksummed in the run manifest.  Exit codes:
0 success, 2 configuration/input error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    SweepPlan,
    default_cells,
    run_sweep,
    spectrum_curve,
)
from .config import RunConfig, parse_config_file, parse_int_list, resolve_config
from .errors import ConfigError, InputError, NumericalError, RecdropError
from .manifest import ManifestWriter
from .metrics import (
    bias_curve,
    heatmap,
    kl_from_stationary,
    make_eval_batch,
    map_at_k,
    predictive_entropy,
)
from .numerics import Rng
from .seqmodel import load_checkpoint, save_checkpoint
from .simulator import (
    build_transition_matrix,
    sample_trajectories,
    stationary_distribution,
    trajectories_to_rows,
)
from .training import train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _fmt(value) -> str:
    """Shortest round-trip decimal form; deterministic across runs."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _eval_sequences(config: RunConfig, seed_label: str = "eval"):
    p = build_transition_matrix(config.transition_spec())
    rng = Rng(config["seed"]).substream(seed_label)
    return sample_trajectories(
        p, config["eval.batch_size"], config["train.sequence_length"], rng
    ), p


def cmd_simulate(config: RunConfig, out_dir: Path, manifest: ManifestWriter):
    spec = config.transition_spec()
    p = build_transition_matrix(spec)
    rng = Rng(config["seed"]).substream("simulate")
    trajectories = sample_trajectories(
        p, config["simulate.count"], config["simulate.length"], rng
    )
    rows = trajectories_to_rows(trajectories, spec.layout)
    manifest.add_output(
        _write_csv(
            out_dir / "trajectories.csv",
            ("sequence_id", "position", "item_id", "cluster_id"),
            rows,
        )
    )


def _checkpoint_meta(config: RunConfig) -> dict:
    sampler = config.sampler()
    return {
        "variant": config["dropout.variant"],
        "expected_dropout": sampler.expected_value(),
        "seed": config["seed"],
        "tag": sampler.tag(),
    }


def cmd_train(config: RunConfig, out_dir: Path, manifest: ManifestWriter):
    train_config = config.train_config()
    manifest.note_seed("train", train_config.seed)
    params, log = train(train_config)
    manifest.add_output(
        save_checkpoint(out_dir / "model.ckpt", params, meta=_checkpoint_meta(config))
    )
    by_step = {snap.step: snap.report for snap in log.snapshots}
    rows = []
    for step, loss in enumerate(log.losses):
        report = by_step.get(step)
        metric_values = (
            (report.map1, report.map10, report.entropy, report.kl)
            if report
            else ("", "", "", "")
        )
        rows.append((step, loss, *metric_values))
    manifest.add_output(
        _write_csv(
            out_dir / "train_log.csv",
            ("step", "loss", "map1", "map10", "entropy", "kl"),
            rows,
        )
    )


def _load_checkpoint_arg(args):
    if not args.checkpoint:
        raise ConfigError("this command requires --checkpoint PATH")
    return load_checkpoint(args.checkpoint)


def cmd_eval(config: RunConfig, out_dir: Path, manifest: ManifestWriter, args):
    params, meta = _load_checkpoint_arg(args)
    sequences, p = _eval_sequences(config)
    batch = make_eval_batch(params, sequences)
    stationary = stationary_distribution(p)
    tag = args.tag or meta.get("tag", "model")
    row = (
        meta.get("variant", config["dropout.variant"]),
        meta.get("expected_dropout", config.sampler().expected_value()),
        meta.get("seed", config["seed"]),
        map_at_k(batch, 1),
        map_at_k(batch, 10),
        predictive_entropy(batch),
        kl_from_stationary(batch, stationary),
    )
    manifest.add_output(
        _write_csv(
            out_dir / "metrics.csv",
            ("variant", "expected_dropout", "seed", "map1", "map10", "entropy", "kl"),
            [row],
        )
    )
    n = config["eval.heatmap_rows"]
    grid = heatmap(batch, n)
    header = (
        "row",
        "last_input_item",
        "target_item",
        *(f"item_{i}" for i in range(grid.shape[1])),
    )
    heat_rows = [
        (i, int(batch.inputs[i, -1]), int(batch.targets[i]), *grid[i])
        for i in range(grid.shape[0])
    ]
    manifest.add_output(_write_csv(out_dir / "heatmap.csv", header, heat_rows))
    if config["figures"]:
        from .figures import save_heatmap_figure
        manifest.add_output(save_heatmap_figure(grid, out_dir / "heatmap.png", tag=tag))


def cmd_sweep(config: RunConfig, out_dir: Path, manifest: ManifestWriter):
    cells = default_cells(
        config["sweep.expected_dropout"], config["sweep.share_baseline"]
    )
    plan = SweepPlan(
        cells=cells, base=config.train_config(), repeats=config["sweep.repeats"]
    )
    for ci in range(len(cells)):
        for rep in range(plan.repeats):
            manifest.note_seed(f"cell{ci}_repeat{rep}", plan.run_seed(ci, rep))
    records = run_sweep(plan, workers=max(1, config["threads"]))
    header = (
        "variant", "expected_dropout", "seed",
        "map1", "map10", "entropy", "kl",
        "map1_se", "map10_se", "entropy_se", "kl_se",
    )
    rows = []
    for record in records:
        cell = record.cell
        for seed, report in zip(record.seeds, record.reports):
            rows.append(
                (cell.variant, cell.expected_dropout, seed,
                 report.map1, report.map10, report.entropy, report.kl,
                 "", "", "", "")
            )
        if record.aggregate is not None:
            agg = record.aggregate
            rows.append(
                (cell.variant, cell.expected_dropout, "mean",
                 agg.map1, agg.map10, agg.entropy, agg.kl,
                 agg.map1_se, agg.map10_se, agg.entropy_se, agg.kl_se)
            )
    manifest.add_output(_write_csv(out_dir / "sweep.csv", header, rows))
    if config["figures"]:
        from .figures import save_difficulty_figure, save_sweep_figure

        manifest.add_output(save_sweep_figure(records, out_dir / "sweep_metrics.png"))
        manifest.add_output(
            save_difficulty_figure(
                config.transition_spec(), cells, out_dir / "difficulty.png"
            )
        )
    failures = [r for r in records if r.error]
    if failures:
        details = "; ".join(f"{r.cell.variant}/E{r.cell.expected_dropout}: {r.error}" for r in failures)
        raise NumericalError(f"{len(failures)} sweep cell(s) failed: {details}")


def cmd_jacobian(config: RunConfig, out_dir: Path, manifest: ManifestWriter, args):
    params, meta = _load_checkpoint_arg(args)
    ks = parse_int_list(args.ks) if args.ks else config["eval.spectrum_ks"]
    sequences, _ = _eval_sequences(config)
    tag = args.tag or meta.get("tag", "model")
    curve = spectrum_curve(params, sequences, ks)
    rows = [
        (int(k), m, s, mx, tag)
        for k, m, s, mx in zip(
            curve.ks, curve.mean_modulus, curve.stderr, curve.max_modulus
        )
    ]
    manifest.add_output(
        _write_csv(
            out_dir / "spectrum.csv",
            ("k", "mean_modulus", "stderr", "max_modulus", "model_tag"),
            rows,
        )
    )
    if config["figures"]:
        from .figures import save_spectrum_figure

        manifest.add_output(
            save_spectrum_figure([(tag, curve)], out_dir / "spectrum.png")
        )


def cmd_bias_curve(config: RunConfig, out_dir: Path, manifest: ManifestWriter, args):
    params, meta = _load_checkpoint_arg(args)
    ks = parse_int_list(args.ks) if args.ks else config["eval.bias_ks"]
    sequences, _ = _eval_sequences(config)
    batch = make_eval_batch(params, sequences)
    layout = config.layout()
    tag = args.tag or meta.get("tag", "model")
    curve = bias_curve(batch, layout, ks)
    rows = [(int(k), v, tag) for k, v in zip(curve.ks, curve.values)]
    manifest.add_output(
        _write_csv(out_dir / "bias_curve.csv", ("k", "d_k", "model_tag"), rows)
    )
    if config["figures"]:
        from .figures import save_bias_figure

        uniform_level = layout.items_per_cluster / layout.total_items
        manifest.add_output(
            save_bias_figure([(tag, curve)], uniform_level, out_dir / "bias_curve.png")
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recdrop",
        description="Recency-dropout laboratory: simulate, train, evaluate, analyze.",
    )
    parser.add_argument("--config", type=Path, default=None, help="key=value config file")
    parser.add_argument("--seed", type=int, default=None, help="base seed (u64)")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument(
        "--threads", type=int, default=None,
        help="worker processes for sweep cells; results are identical for any value",
    )
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )
    parser.add_argument(
        "--no-figures", action="store_true", help="skip PNG rendering"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", help="write simulated trajectories as CSV")
    sub.add_parser("train", help="train a model; emits checkpoint + log")
    for name, needs_ks in (("eval", False), ("jacobian", True), ("bias-curve", True)):
        cmd = sub.add_parser(name)
        cmd.add_argument("--checkpoint", type=Path, required=True)
        cmd.add_argument("--tag", type=str, default=None, help="label for CSV/figure")
        if needs_ks:
            cmd.add_argument("--ks", type=str, default=None,
                             help="comma list / a-b ranges of time separations")
    sub.add_parser("sweep", help="train the dropout grid and aggregate metrics")
    return parser


def _collect_overrides(args) -> dict:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.no_figures:
        overrides["figures"] = "false"
    return overrides


def _run(args) -> None:
    file_values = parse_config_file(args.config) if args.config else None
    config = resolve_config(file_values, _collect_overrides(args))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = ManifestWriter(
        command=args.command, resolved_config=config.flat(), out_dir=out_dir
    )
    manifest.note_seed("base", config["seed"])
    try:
        if args.command == "simulate":
            cmd_simulate(config, out_dir, manifest)
        elif args.command == "train":
            cmd_train(config, out_dir, manifest)
        elif args.command == "eval":
            cmd_eval(config, out_dir, manifest, args)
        elif args.command == "sweep":
            cmd_sweep(config, out_dir, manifest)
        elif args.command == "jacobian":
            cmd_jacobian(config, out_dir, manifest, args)
        elif args.command == "bias-curve":
            cmd_bias_curve(config, out_dir, manifest, args)
        else:  # pragma: no cover - argparse enforces the choices
            raise ConfigError(f"unknown command {args.command!r}")
    except BaseException as exc:
        manifest.write(status="error", error=str(exc))
        raise
    manifest.write(status="ok")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _run(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"rejected input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RecdropError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
