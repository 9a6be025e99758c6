"""Run configuration: flat dotted key-value files plus override resolution.

Precedence is defaults < config file < command-line overrides.  Unknown keys
are rejected so typos cannot silently fall back to defaults, and the fully
resolved mapping is exactly what lands in the run manifest.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .augmentation import DropoutSampler
from .errors import ConfigError
from .seqmodel import ModelConfig
from .simulator import ClusterLayout, TransitionSpec
from .training import TrainConfig

DEFAULT_SEED = 2024


@dataclass(frozen=True)
class FieldSpec:
    kind: str  # int | float | bool | str | int_list
    default: object
    help: str


SCHEMA: dict[str, FieldSpec] = {
    "seed": FieldSpec("int", DEFAULT_SEED, "base seed for all random streams"),
    "threads": FieldSpec("int", 1, "worker processes for sweep cells (1 = serial)"),
    "figures": FieldSpec("bool", True, "render PNG figures next to CSV outputs"),
    "sim.clusters": FieldSpec("int", 10, "number of item clusters K"),
    "sim.items_per_cluster": FieldSpec("int", 10, "items per cluster m"),
    "sim.p_same": FieldSpec("float", 0.7, "probability mass of staying in the current cluster"),
    "model.embed_dim": FieldSpec("int", 16, "input embedding dimension"),
    "model.hidden_dim": FieldSpec("int", 32, "recurrent state dimension"),
    "model.head_dim1": FieldSpec("int", 32, "first ReLU head layer width"),
    "model.head_dim2": FieldSpec("int", 32, "second ReLU head layer width"),
    "model.temperature": FieldSpec("float", 1.0, "softmax temperature"),
    "train.steps": FieldSpec("int", 500, "optimizer steps"),
    "train.batch_size": FieldSpec("int", 128, "sequences per step"),
    "train.sequence_length": FieldSpec("int", 100, "items per simulated sequence"),
    "train.learning_rate": FieldSpec("float", 1e-3, "adaptive-moment learning rate"),
    "train.beta1": FieldSpec("float", 0.9, "first-moment decay"),
    "train.beta2": FieldSpec("float", 0.999, "second-moment decay"),
    "train.epsilon": FieldSpec("float", 1e-8, "optimizer denominator floor"),
    "train.clip_norm": FieldSpec("float", 5.0, "global gradient-norm clip (0 disables)"),
    "train.eval_every": FieldSpec("int", 100, "steps between eval snapshots (0 = final only)"),
    "dropout.variant": FieldSpec("str", "none", "none | fixed | uniform"),
    "dropout.n_fixed": FieldSpec("int", 0, "dropout count for the fixed variant"),
    "dropout.low": FieldSpec("int", 0, "uniform lower bound (inclusive)"),
    "dropout.high": FieldSpec("int", 0, "uniform upper bound"),
    "dropout.inclusive": FieldSpec("bool", True, "whether dropout.high is inclusive"),
    "eval.batch_size": FieldSpec("int", 1000, "evaluation sequences"),
    "eval.heatmap_rows": FieldSpec("int", 10, "rows in the heatmap output"),
    "eval.spectrum_ks": FieldSpec("int_list", (1, 2, 5, 10, 20, 50, 99), "time separations for the Jacobian spectrum"),
    "eval.bias_ks": FieldSpec("int_list", tuple(range(1, 91)), "time separations for the bias curve"),
    "sweep.expected_dropout": FieldSpec("int_list", (0, 1, 2, 3, 4, 5), "E[N] grid for the sweep"),
    "sweep.repeats": FieldSpec("int", 10, "seeds per sweep cell"),
    "sweep.share_baseline": FieldSpec("bool", True, "merge the two variants' E[N]=0 cells"),
    "simulate.count": FieldSpec("int", 1000, "trajectories for the simulate command"),
    "simulate.length": FieldSpec("int", 100, "items per simulated trajectory"),
}


def parse_int_list(text: str) -> tuple[int, ...]:
    """Comma-separated non-negative integers; 'a-b' spans an inclusive range."""
    out: list[int] = []
    for piece in str(text).split(","):
        piece = piece.strip()
        if not piece:
            continue
        try:
            if "-" in piece:
                lo_text, hi_text = piece.split("-", 1)
                lo, hi = int(lo_text), int(hi_text)
                if hi < lo:
                    raise ConfigError(f"empty range {piece!r}")
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(piece))
        except ValueError:
            raise ConfigError(f"cannot parse integer list item {piece!r}") from None
    if not out:
        raise ConfigError(f"empty integer list {text!r}")
    return tuple(out)


def _coerce(key: str, raw: object) -> object:
    spec = SCHEMA[key]
    try:
        if spec.kind == "int":
            return int(str(raw))
        if spec.kind == "float":
            return float(str(raw))
        if spec.kind == "bool":
            text = str(raw).strip().lower()
            if text in ("true", "1", "yes", "on"):
                return True
            if text in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if spec.kind == "int_list":
            if isinstance(raw, (tuple, list)):
                return tuple(int(x) for x in raw)
            return parse_int_list(str(raw))
        return str(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def parse_config_file(path) -> dict[str, str]:
    """Read a flat 'key = value' file; '#' starts a comment."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


@dataclass(frozen=True)
class RunConfig:
    """A fully resolved configuration (defaults + file + overrides)."""

    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    def flat(self) -> dict[str, str]:
        """String form of every resolved key, for the run manifest."""
        out = {}
        for key in SCHEMA:
            value = self.values[key]
            if isinstance(value, tuple):
                out[key] = ",".join(str(v) for v in value)
            elif isinstance(value, bool):
                out[key] = "true" if value else "false"
            else:
                out[key] = str(value)
        return out

    def layout(self) -> ClusterLayout:
        return ClusterLayout(self["sim.clusters"], self["sim.items_per_cluster"])

    def transition_spec(self) -> TransitionSpec:
        return TransitionSpec(layout=self.layout(), p_same=self["sim.p_same"])

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            vocab_size=self.layout().total_items,
            embed_dim=self["model.embed_dim"],
            hidden_dim=self["model.hidden_dim"],
            head_dims=(self["model.head_dim1"], self["model.head_dim2"]),
            temperature=self["model.temperature"],
        )

    def sampler(self) -> DropoutSampler:
        variant = self["dropout.variant"]
        if variant == "none":
            return DropoutSampler.fixed(0)
        if variant == "fixed":
            return DropoutSampler.fixed(self["dropout.n_fixed"])
        if variant == "uniform":
            return DropoutSampler.uniform(
                self["dropout.low"], self["dropout.high"], self["dropout.inclusive"]
            )
        raise ConfigError(f"dropout.variant must be none|fixed|uniform, got {variant!r}")

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            transition=self.transition_spec(),
            model=self.model_config(),
            sampler=self.sampler(),
            steps=self["train.steps"],
            batch_size=self["train.batch_size"],
            sequence_length=self["train.sequence_length"],
            learning_rate=self["train.learning_rate"],
            beta1=self["train.beta1"],
            beta2=self["train.beta2"],
            epsilon=self["train.epsilon"],
            clip_norm=self["train.clip_norm"],
            seed=self["seed"],
            eval_batch_size=self["eval.batch_size"],
            eval_every=self["train.eval_every"],
        )


def resolve_config(
    file_values: dict | None = None, overrides: dict | None = None
) -> RunConfig:
    """Merge defaults, file values, and overrides into a RunConfig."""
    values = {key: spec.default for key, spec in SCHEMA.items()}
    for source_name, source in (("config file", file_values), ("override", overrides)):
        if not source:
            continue
        for key, raw in source.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown {source_name} key {key!r}")
            values[key] = _coerce(key, raw)
    config = RunConfig(values=values)
    # Fail fast on inconsistent combinations.
    config.sampler()
    config.train_config()
    return config
