"""Experiment configuration: a flat ``key = value`` text format.

Keys are dotted to group sections (``federated.clients = 10``), ``#``
lines are comments, and nothing else is accepted: an unknown key, a bad
value, or a duplicate is a hard error naming the offending line. Every
key has a default, so the empty file is a valid experiment.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError

ALGORITHMS = ("fedmoeac", "nsga2")
PARTITION_SCHEMES = ("iid", "label_shard")
EVAL_MODES = ("aggregated", "per_client")
LINKAGES = ("centroid", "single", "complete")
DATASET_KINDS = ("synthetic", "mnist")

# execution-only keys: they never change results, so run records omit them
EXECUTION_KEYS = ("run.workers", "run.output_dir")


@dataclass
class ExperimentConfig:
    algorithm: str = "fedmoeac"
    seed: int = 0

    clients: int = 10
    participation: float = 0.4
    local_epochs: int = 2
    batch_size: int = 64
    learning_rate: float = 0.01
    partition: str = "iid"
    objective_eval: str = "aggregated"

    delta: float = 1e-5
    clip: float = 1.0
    budget_ceiling: float = 10.0

    population: int = 10
    generations: int = 12
    mating_clusters: int = 3
    crossover_prob: float = 0.9
    crossover_index: float = 2.0
    mutation_prob: float = 0.1
    mutation_index: float = 20.0
    linkage: str = "centroid"
    fitness_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)

    hidden: tuple[int, ...] = (128,)

    dataset_kind: str = "synthetic"
    holdout_fraction: float = 0.1
    mnist_images: str = ""
    mnist_labels: str = ""
    mnist_limit: int = 0
    synthetic_samples: int = 1200
    synthetic_classes: int = 2
    synthetic_dim: int = 20
    synthetic_separation: float = 6.0

    workers: int = 1
    output_dir: str = ""

    def validate(self) -> None:
        """Cross-field checks; single-field ranges are enforced at parse."""
        if self.mating_clusters > self.population:
            raise ConfigError(
                f"evolution.mating_clusters = {self.mating_clusters} exceeds population {self.population}"
            )
        if int(np.floor(self.participation * self.clients + 0.5)) < 1:
            raise ConfigError(
                f"federated.participation = {self.participation} selects zero of {self.clients} clients"
            )
        if self.dataset_kind == "mnist" and (not self.mnist_images or not self.mnist_labels):
            raise ConfigError("dataset.kind = mnist requires dataset.mnist.images and dataset.mnist.labels")
        if self.dataset_kind == "synthetic" and self.synthetic_dim < self.synthetic_classes:
            raise ConfigError(
                f"dataset.synthetic.dim = {self.synthetic_dim} is below dataset.synthetic.classes = {self.synthetic_classes}"
            )
        if all(w == 0 for w in self.fitness_weights):
            raise ConfigError("evolution.fitness_weights must not be all zero")

    def echo(self) -> dict[str, object]:
        """Resolved experiment-defining keys (execution keys excluded)."""
        out: dict[str, object] = {}
        for key, (attr, _parse, _doc) in sorted(_SCHEMA.items()):
            if key in EXECUTION_KEYS:
                continue
            value = getattr(self, attr)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            out[key] = value
        return out


def _parse_int(minimum: int):
    def parse(text: str) -> int:
        try:
            value = int(text, 10)
        except ValueError:
            raise ValueError(f"expected an integer, got {text!r}")
        if value < minimum:
            raise ValueError(f"must be >= {minimum}, got {value}")
        return value

    return parse


def _parse_float(low: float, high: float = np.inf, *, low_open: bool = False, high_open: bool = False):
    def parse(text: str) -> float:
        try:
            value = float(text)
        except ValueError:
            raise ValueError(f"expected a number, got {text!r}")
        if not np.isfinite(value):
            raise ValueError(f"must be finite, got {text!r}")
        if value < low or (low_open and value == low) or value > high or (high_open and value == high):
            lo = "(" if low_open else "["
            hi = ")" if high_open else "]"
            raise ValueError(f"must lie in {lo}{low}, {high}{hi}, got {value}")
        return value

    return parse


def _parse_choice(options: tuple[str, ...]):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}; got {text!r}")
        return text

    return parse


def _parse_weights(text: str) -> tuple[float, float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected three comma-separated weights, got {text!r}")
    values = []
    for part in parts:
        try:
            value = float(part)
        except ValueError:
            raise ValueError(f"weight {part!r} is not a number")
        if value < 0 or not np.isfinite(value):
            raise ValueError(f"weights must be finite and >= 0, got {part}")
        values.append(value)
    return tuple(values)  # type: ignore[return-value]


def _parse_hidden(text: str) -> tuple[int, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("expected at least one hidden width")
    widths = []
    for part in parts:
        try:
            width = int(part, 10)
        except ValueError:
            raise ValueError(f"hidden width {part!r} is not an integer")
        if width < 1:
            raise ValueError(f"hidden widths must be >= 1, got {width}")
        widths.append(width)
    return tuple(widths)


def _parse_str(text: str) -> str:
    return text


# key -> (attribute, parser, doc)
_SCHEMA: dict[str, tuple[str, object, str]] = {
    "algorithm": ("algorithm", _parse_choice(ALGORITHMS), "search algorithm"),
    "seed": ("seed", _parse_int(0), "master seed"),
    "federated.clients": ("clients", _parse_int(1), "total clients K"),
    "federated.participation": ("participation", _parse_float(0.0, 1.0, low_open=True), "fraction sampled per round"),
    "federated.local_epochs": ("local_epochs", _parse_int(0), "local epochs per round"),
    "federated.batch_size": ("batch_size", _parse_int(1), "local mini-batch size"),
    "federated.learning_rate": ("learning_rate", _parse_float(0.0, low_open=True), "local SGD step size"),
    "federated.partition": ("partition", _parse_choice(PARTITION_SCHEMES), "client data split"),
    "federated.objective_eval": ("objective_eval", _parse_choice(EVAL_MODES), "error objective mode"),
    "privacy.delta": ("delta", _parse_float(0.0, 1.0, low_open=True, high_open=True), "accounting delta"),
    "privacy.clip": ("clip", _parse_float(0.0, low_open=True), "L2 clip threshold"),
    "privacy.budget_ceiling": ("budget_ceiling", _parse_float(0.0, low_open=True), "budget reported for zero noise"),
    "evolution.population": ("population", _parse_int(2), "population size"),
    "evolution.generations": ("generations", _parse_int(0), "generation count"),
    "evolution.mating_clusters": ("mating_clusters", _parse_int(1), "k-means clusters for mating"),
    "evolution.crossover_prob": ("crossover_prob", _parse_float(0.0, 1.0), "SBX per-gene probability"),
    "evolution.crossover_index": ("crossover_index", _parse_float(0.0, low_open=True), "SBX distribution index"),
    "evolution.mutation_prob": ("mutation_prob", _parse_float(0.0, 1.0), "mutation per-gene probability"),
    "evolution.mutation_index": ("mutation_index", _parse_float(0.0, low_open=True), "mutation distribution index"),
    "evolution.linkage": ("linkage", _parse_choice(LINKAGES), "agglomeration linkage"),
    "evolution.fitness_weights": ("fitness_weights", _parse_weights, "scalar fitness weights"),
    "model.hidden": ("hidden", _parse_hidden, "hidden layer widths"),
    "dataset.kind": ("dataset_kind", _parse_choice(DATASET_KINDS), "data source"),
    "dataset.holdout_fraction": ("holdout_fraction", _parse_float(0.0, 0.5, low_open=True), "server holdout share"),
    "dataset.mnist.images": ("mnist_images", _parse_str, "IDX image file"),
    "dataset.mnist.labels": ("mnist_labels", _parse_str, "IDX label file"),
    "dataset.mnist.limit": ("mnist_limit", _parse_int(0), "keep first N samples (0 = all)"),
    "dataset.synthetic.samples": ("synthetic_samples", _parse_int(10), "synthetic sample count"),
    "dataset.synthetic.classes": ("synthetic_classes", _parse_int(2), "synthetic class count"),
    "dataset.synthetic.dim": ("synthetic_dim", _parse_int(2), "synthetic input width"),
    "dataset.synthetic.separation": ("synthetic_separation", _parse_float(0.0, low_open=True), "class mean distance"),
    "run.workers": ("workers", _parse_int(1), "thread fan-out (results identical at any value)"),
    "run.output_dir": ("output_dir", _parse_str, "where run artifacts land"),
}


def parse_config_text(text: str, origin: str = "<config>") -> ExperimentConfig:
    """Parse and validate config text; errors carry ``origin:line``."""
    config = ExperimentConfig()
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r} (first set on line {seen[key]})")
        seen[key] = lineno
        attr, parser, _doc = _SCHEMA[key]
        try:
            setattr(config, attr, parser(value))
        except ValueError as exc:
            raise ConfigError(f"{origin}:{lineno}: {key}: {exc}") from None
    try:
        config.validate()
    except ConfigError as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    return config


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, origin=str(path))


def describe_schema() -> str:
    """Plain-text key reference, used by the CLI's validate backstop."""
    lines = []
    probe = ExperimentConfig()
    for key, (attr, _parser, doc) in sorted(_SCHEMA.items()):
        default = getattr(probe, attr)
        if isinstance(default, tuple):
            default = ",".join(str(v) for v in default)
        lines.append(f"{key:34s} {doc} (default: {default})")
    return "\n".join(lines)


def config_field_names() -> list[str]:
    return [f.name for f in fields(ExperimentConfig)]
