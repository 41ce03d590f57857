"""Client/server simulation: partitioning, local training, noisy aggregation.

One round trains a sampled subset of clients from the current global
model; candidate compression/privacy settings are then scored against
those same local models, so every candidate sees an identical training
outcome. Randomness is drawn from named sub-streams keyed by round,
client, and solution, which keeps results byte-identical no matter how
many workers evaluate concurrently.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, TypeVar

import numpy as np

from .data import Dataset
from .evolution import Solution, decode
from .nn import Batch, ModelWeights, backward, evaluate, sgd_step
from .operators import (
    PrivacyAccountant,
    clip_and_noise,
    comm_overhead,
    privacy_budget,
    quantize_dequantize,
    sparsify,
)
from .rng import substream

T = TypeVar("T")
U = TypeVar("U")

EVAL_AGGREGATED = "aggregated"
EVAL_PER_CLIENT = "per_client"


def ordered_map(fn: Callable[[T], U], items: Iterable[T], workers: int = 1) -> list[U]:
    """Map with optional thread fan-out; result order always matches input."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def partition_indices(
    labels: np.ndarray, num_clients: int, scheme: str, rng: np.random.Generator
) -> list[np.ndarray]:
    """Split sample indices across clients.

    ``iid`` shuffles and deals near-equal shares (sizes differ by at most
    one). ``label_shard`` sorts by label, cuts 2x``num_clients``
    contiguous shards, shuffles the shard order and gives each client two,
    the classic pathological non-IID split that leaves a client with very
    few distinct labels.
    """
    n = len(labels)
    if num_clients < 1:
        raise ValueError(f"need at least one client, got {num_clients}")
    if num_clients > n:
        raise ValueError(f"cannot split {n} samples across {num_clients} clients")

    if scheme == "iid":
        order = rng.permutation(n)
        base, extra = divmod(n, num_clients)
        sizes = [base + (1 if k < extra else 0) for k in range(num_clients)]
        cuts = np.cumsum([0] + sizes)
        return [np.sort(order[cuts[k] : cuts[k + 1]]) for k in range(num_clients)]

    if scheme == "label_shard":
        order = np.argsort(labels, kind="stable")
        shards = np.array_split(order, 2 * num_clients)
        shard_order = rng.permutation(2 * num_clients)
        return [
            np.sort(np.concatenate([shards[shard_order[2 * k]], shards[shard_order[2 * k + 1]]]))
            for k in range(num_clients)
        ]

    raise ValueError(f"unknown partition scheme {scheme!r}")


def partition_dataset(
    dataset: Dataset, num_clients: int, scheme: str, seed: int
) -> list[Dataset]:
    """Materialized per-client datasets for ``partition_indices``."""
    rng = substream(seed, "partition")
    return [dataset.take(idx) for idx in partition_indices(dataset.labels, num_clients, scheme, rng)]


@dataclass
class FederatedState:
    """Everything a round needs: model, data split, round counter, seed."""

    global_model: ModelWeights
    partitions: list[Dataset]
    holdout: Dataset
    master_seed: int
    round: int = 0

    @property
    def num_clients(self) -> int:
        return len(self.partitions)


@dataclass(frozen=True)
class RoundContext:
    """Frozen outcome of one round's local training."""

    round_index: int
    selected: tuple[int, ...]
    local_models: tuple[ModelWeights, ...]


@dataclass(frozen=True)
class ObjectiveSettings:
    participation: float
    delta: float
    budget_ceiling: float
    clip_z: float
    eval_mode: str = EVAL_AGGREGATED

    def __post_init__(self) -> None:
        if not 0 < self.participation <= 1:
            raise ValueError(f"participation must lie in (0, 1], got {self.participation}")
        if self.eval_mode not in (EVAL_AGGREGATED, EVAL_PER_CLIENT):
            raise ValueError(f"unknown objective evaluation mode {self.eval_mode!r}")


def sample_clients(state: FederatedState, participation: float) -> tuple[int, ...]:
    """Uniform sample without replacement of round(v*K) clients, sorted."""
    count = int(np.floor(participation * state.num_clients + 0.5))
    if count < 1:
        raise ValueError(
            f"participation {participation} of {state.num_clients} clients rounds to zero"
        )
    rng = substream(state.master_seed, "round", state.round, "sample")
    picked = rng.choice(state.num_clients, size=count, replace=False)
    return tuple(sorted(int(i) for i in picked))


def run_local_training(
    model: ModelWeights,
    dataset: Dataset,
    epochs: int,
    batch_size: int,
    lr: float,
    rng: np.random.Generator,
) -> ModelWeights:
    """Mini-batch SGD from a copy of ``model``; the input is never touched.

    Each epoch reshuffles; the trailing short batch is kept. Zero epochs
    return an identical copy.
    """
    if epochs < 0:
        raise ValueError(f"epochs must be >= 0, got {epochs}")
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    current = model.copy()
    n = len(dataset)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            take = order[start : start + batch_size]
            batch = Batch(dataset.inputs[take], dataset.labels[take])
            current = sgd_step(current, backward(current, batch), lr)
    return current


def run_round(
    state: FederatedState,
    epochs: int,
    batch_size: int,
    lr: float,
    participation: float,
    workers: int = 1,
) -> RoundContext:
    """Sample clients and train them once; candidates all reuse the result."""
    selected = sample_clients(state, participation)

    def train(client: int) -> ModelWeights:
        rng = substream(state.master_seed, "round", state.round, "client", client)
        return run_local_training(
            state.global_model, state.partitions[client], epochs, batch_size, lr, rng
        )

    local_models = ordered_map(train, selected, workers)
    return RoundContext(state.round, selected, tuple(local_models))


def aggregate(models: list[ModelWeights] | tuple[ModelWeights, ...]) -> ModelWeights:
    """Parameter-wise mean of same-shaped models."""
    if not models:
        raise ValueError("cannot aggregate zero models")
    first = models[0]
    if any(m.architecture != first.architecture for m in models):
        raise ValueError("all models must share one architecture")
    stacked = np.stack([m.flat() for m in models])
    return first.with_flat(stacked.mean(axis=0))


def solution_streams(
    state: FederatedState, round_index: int, solution_id: int, clients: tuple[int, ...]
) -> list[np.random.Generator]:
    return [
        substream(state.master_seed, "round", round_index, "solution", solution_id, "client", k)
        for k in clients
    ]


def apply_solution(
    local_models: tuple[ModelWeights, ...],
    params,
    rngs: list[np.random.Generator],
) -> list[ModelWeights]:
    """Run prune, quantize, clip+noise per client with per-client streams."""
    if len(rngs) != len(local_models):
        raise ValueError(f"{len(local_models)} models but {len(rngs)} noise streams")
    return [
        clip_and_noise(quantize_dequantize(sparsify(m, params.xi), params.q_bits), params.clip_z, params.sigma, rng)
        for m, rng in zip(local_models, rngs)
    ]


def evaluate_objectives(
    solution: Solution,
    ctx: RoundContext,
    state: FederatedState,
    settings: ObjectiveSettings,
) -> np.ndarray:
    """Score one candidate against the round's local models.

    Error is the mean of selected clients' mean losses (of the aggregated
    processed model by default, of each client's own processed model in
    per-client mode). Communication counts the pruned model's surviving
    parameters at the candidate's code width. The privacy term prices the
    rounds realized so far, which is zero before any round completes.
    Neither the state nor the local models are modified.
    """
    params = decode(solution.genes, settings.clip_z)
    sparse = [sparsify(m, params.xi) for m in ctx.local_models]
    f_co = comm_overhead(sparse, [params.q_bits] * len(sparse), list(ctx.local_models))

    rngs = solution_streams(state, ctx.round_index, solution.id, ctx.selected)
    processed = [
        clip_and_noise(quantize_dequantize(s, params.q_bits), params.clip_z, params.sigma, rng)
        for s, rng in zip(sparse, rngs)
    ]
    client_sets = [state.partitions[k] for k in ctx.selected]
    if settings.eval_mode == EVAL_AGGREGATED:
        merged = aggregate(processed)
        losses = [evaluate(merged, client_set).mean_loss for client_set in client_sets]
    else:
        losses = [evaluate(m, client_set).mean_loss for m, client_set in zip(processed, client_sets)]
    f_ge = float(np.mean(losses))

    accountant = PrivacyAccountant(state.round, settings.participation, settings.delta)
    f_pb = privacy_budget(accountant, params.sigma, settings.budget_ceiling)
    return np.array([f_ge, f_co, f_pb])


def advance_round(
    state: FederatedState, ctx: RoundContext, solution: Solution, settings: ObjectiveSettings
) -> FederatedState:
    """Install the chosen candidate's aggregated model and count the round.

    The noise streams are the same ones its evaluation used, so the model
    carried forward is bit-identical to the one that was scored.
    """
    if ctx.round_index != state.round:
        raise ValueError(f"context is for round {ctx.round_index}, state is at {state.round}")
    params = decode(solution.genes, settings.clip_z)
    rngs = solution_streams(state, ctx.round_index, solution.id, ctx.selected)
    processed = apply_solution(ctx.local_models, params, rngs)
    state.global_model = aggregate(processed)
    state.round += 1
    return state
