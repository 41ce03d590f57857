"""Experiment engine: the generation loop, run records, and comparisons.

A run is: initialize clients and a population of compression/privacy
settings; each generation mates candidates (within cosine clusters for
the clustered algorithm), trains the sampled clients once, scores every
candidate against those local models, keeps the best cluster
representatives (or the crowding-based baseline's picks), and carries the
scalar-best candidate's aggregated model into the next round.

Everything logged to ``run.json`` is deterministic for a fixed seed;
wall-clock timings go to a separate sidecar so records stay byte-stable.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .data import Dataset, gen_synthetic, load_mnist_idx
from .errors import ConfigError, DataError
from .evolution import (
    ClusterSet,
    Solution,
    decode,
    direction_vectors,
    environmental_selection,
    fast_nondominated_sort,
    generate_offspring,
    init_population,
    kmeans_cosine,
    nsga2_select,
    scalar_fitness,
)
from .federated import (
    FederatedState,
    ObjectiveSettings,
    advance_round,
    aggregate,
    apply_solution,
    evaluate_objectives,
    ordered_map,
    partition_dataset,
    run_round,
    solution_streams,
)
from .metrics import NormalizationBounds, hypervolume
from .nn import evaluate, init_mlp
from .rng import substream

SCHEMA_VERSION = 1
HV_REFERENCE = np.array([1.0, 1.0, 1.0])


@dataclass
class MemberRecord:
    id: int
    genes: tuple[float, float, float]
    xi: float
    q_bits: int
    sigma: float
    f_ge: float
    f_co: float
    f_pb: float
    fitness: float

    @classmethod
    def from_solution(cls, sol: Solution, clip_z: float) -> "MemberRecord":
        params = decode(sol.genes, clip_z)
        return cls(
            id=sol.id,
            genes=tuple(float(g) for g in sol.genes),
            xi=params.xi,
            q_bits=params.q_bits,
            sigma=params.sigma,
            f_ge=float(sol.objectives[0]),
            f_co=float(sol.objectives[1]),
            f_pb=float(sol.objectives[2]),
            fitness=float(sol.fitness),
        )

    def objectives(self) -> list[float]:
        return [self.f_ge, self.f_co, self.f_pb]


@dataclass
class GenerationRecord:
    generation: int
    chosen_id: int
    population: list[MemberRecord]


@dataclass
class RunRecord:
    algorithm: str
    seed: int
    config: dict[str, object]
    initial_population: list[dict[str, object]]
    generations: list[GenerationRecord]
    hv: list[float]
    normalization: NormalizationBounds | None
    final_front: list[dict[str, object]]
    final_global: dict[str, object]
    timings: list[float] = field(default_factory=list)  # sidecar only

    def logged_objectives(self) -> np.ndarray:
        rows = [m.objectives() for g in self.generations for m in g.population]
        return np.array(rows) if rows else np.empty((0, 3))

    def to_json_dict(self) -> dict[str, object]:
        out: dict[str, object] = {
            "schema_version": SCHEMA_VERSION,
            "algorithm": self.algorithm,
            "seed": self.seed,
            "config": dict(self.config),
            "initial_population": self.initial_population,
            "generations": [
                {
                    "generation": g.generation,
                    "chosen_id": g.chosen_id,
                    "population": [
                        {
                            "id": m.id,
                            "genes": list(m.genes),
                            "xi": m.xi,
                            "q_bits": m.q_bits,
                            "sigma": m.sigma,
                            "objectives": {"f_ge": m.f_ge, "f_co": m.f_co, "f_pb": m.f_pb},
                            "fitness": m.fitness,
                        }
                        for m in g.population
                    ],
                }
                for g in self.generations
            ],
            "hv": self.hv,
            "final_front": self.final_front,
            "final_global": self.final_global,
        }
        if self.normalization is not None:
            out["normalization"] = {
                "ideal": [float(v) for v in self.normalization.ideal],
                "nadir": [float(v) for v in self.normalization.nadir],
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"


def load_run_record(path: str | Path) -> RunRecord:
    """Rebuild a record from ``run.json`` (timings are not recoverable)."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"{path}: unsupported schema_version {raw.get('schema_version')!r}")
    generations = [
        GenerationRecord(
            generation=g["generation"],
            chosen_id=g["chosen_id"],
            population=[
                MemberRecord(
                    id=m["id"],
                    genes=tuple(m["genes"]),
                    xi=m["xi"],
                    q_bits=m["q_bits"],
                    sigma=m["sigma"],
                    f_ge=m["objectives"]["f_ge"],
                    f_co=m["objectives"]["f_co"],
                    f_pb=m["objectives"]["f_pb"],
                    fitness=m["fitness"],
                )
                for m in g["population"]
            ],
        )
        for g in raw["generations"]
    ]
    normalization = None
    if "normalization" in raw:
        normalization = NormalizationBounds(
            np.array(raw["normalization"]["ideal"]), np.array(raw["normalization"]["nadir"])
        )
    return RunRecord(
        algorithm=raw["algorithm"],
        seed=raw["seed"],
        config=raw["config"],
        initial_population=raw["initial_population"],
        generations=generations,
        hv=raw["hv"],
        normalization=normalization,
        final_front=raw["final_front"],
        final_global=raw["final_global"],
    )


def build_dataset(config: ExperimentConfig) -> Dataset:
    if config.dataset_kind == "synthetic":
        return gen_synthetic(
            config.synthetic_samples,
            config.synthetic_classes,
            config.synthetic_dim,
            config.synthetic_separation,
            config.seed,
        )
    try:
        return load_mnist_idx(config.mnist_images, config.mnist_labels, config.mnist_limit)
    except OSError as exc:
        raise DataError(f"cannot read dataset: {exc}") from None


def split_holdout(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded (train, holdout) split taken before any client partitioning."""
    n = len(dataset)
    held = max(1, int(np.floor(n * fraction)))
    if held >= n:
        raise DataError(f"holdout of {held} leaves no training data out of {n}")
    order = substream(seed, "holdout").permutation(n)
    return dataset.take(np.sort(order[held:])), dataset.take(np.sort(order[:held]))


def _mating_clusters(
    population: list[Solution], config: ExperimentConfig, generation: int
) -> ClusterSet:
    if config.algorithm != "fedmoeac":
        return ClusterSet([list(range(len(population)))])
    if all(s.evaluated for s in population):
        basis = np.array([s.objectives for s in population])
    else:
        # first generation: no scores exist yet, group by gene similarity
        basis = np.array([s.genes for s in population])
    rng = substream(config.seed, "gen", generation, "kmeans")
    return kmeans_cosine(direction_vectors(basis), config.mating_clusters, rng)


def _holdout_metrics(state: FederatedState) -> dict[str, object]:
    result = evaluate(state.global_model, state.holdout)
    return {
        "holdout_accuracy": result.accuracy,
        "holdout_loss": result.mean_loss,
        "round": state.round,
    }


def run_search(config: ExperimentConfig, dataset: Dataset | None = None) -> RunRecord:
    """Execute one full optimization run and return its record."""
    record, _ = execute_run(config, dataset)
    return record


def execute_run(
    config: ExperimentConfig, dataset: Dataset | None = None
) -> tuple[RunRecord, FederatedState]:
    """Like ``run_search`` but also hands back the final federated state."""
    config.validate()
    if dataset is None:
        dataset = build_dataset(config)
    train, holdout = split_holdout(dataset, config.holdout_fraction, config.seed)
    if len(train) < config.clients:
        raise DataError(f"{len(train)} training samples cannot cover {config.clients} clients")

    partitions = partition_dataset(train, config.clients, config.partition, config.seed)
    architecture = (dataset.dim, *config.hidden, dataset.num_classes)
    state = FederatedState(
        global_model=init_mlp(architecture, substream(config.seed, "init", "model")),
        partitions=partitions,
        holdout=holdout,
        master_seed=config.seed,
    )
    settings = ObjectiveSettings(
        participation=config.participation,
        delta=config.delta,
        budget_ceiling=config.budget_ceiling,
        clip_z=config.clip,
        eval_mode=config.objective_eval,
    )

    population = init_population(config.population, substream(config.seed, "init", "population"))
    initial = [
        {"id": s.id, "genes": [float(g) for g in s.genes]} for s in population
    ]
    next_id = config.population

    generations: list[GenerationRecord] = []
    timings: list[float] = []
    final_ctx = None
    for gen in range(config.generations):
        started = time.perf_counter()
        clusters = _mating_clusters(population, config, gen)
        offspring = generate_offspring(
            population,
            clusters,
            substream(config.seed, "gen", gen, "mating"),
            start_id=next_id,
            count=config.population,
            crossover_prob=config.crossover_prob,
            crossover_eta=config.crossover_index,
            mutation_prob=config.mutation_prob,
            mutation_eta=config.mutation_index,
        )
        next_id += len(offspring)
        union = population + offspring

        ctx = run_round(
            state,
            config.local_epochs,
            config.batch_size,
            config.learning_rate,
            config.participation,
            config.workers,
        )
        final_ctx = ctx
        scores = ordered_map(
            lambda sol: evaluate_objectives(sol, ctx, state, settings), union, config.workers
        )
        for sol, objectives in zip(union, scores):
            sol.objectives = objectives
        bounds = NormalizationBounds.from_points(np.array(scores))
        for sol in union:
            sol.fitness = scalar_fitness(sol.objectives, bounds, config.fitness_weights)

        if config.algorithm == "fedmoeac":
            population = environmental_selection(
                union, config.population, config.linkage, config.fitness_weights
            )
        else:
            population = nsga2_select(union, config.population)

        chosen = min(population, key=lambda s: (s.fitness, s.id))
        advance_round(state, ctx, chosen, settings)
        generations.append(
            GenerationRecord(
                generation=gen,
                chosen_id=chosen.id,
                population=[MemberRecord.from_solution(s, config.clip) for s in population],
            )
        )
        timings.append(time.perf_counter() - started)

    record = RunRecord(
        algorithm=config.algorithm,
        seed=config.seed,
        config=config.echo(),
        initial_population=initial,
        generations=generations,
        hv=[],
        normalization=None,
        final_front=[],
        final_global=_holdout_metrics(state),
        timings=timings,
    )

    if generations:
        record.normalization = NormalizationBounds.from_points(record.logged_objectives())
        record.hv = [
            run_hv(gen_record, record.normalization) for gen_record in record.generations
        ]
        record.final_front = _final_front(population, state, final_ctx, settings)
    return record, state


def run_hv(gen_record: GenerationRecord, bounds: NormalizationBounds) -> float:
    """Hypervolume of one logged population under the given bounds."""
    points = bounds.apply(np.array([m.objectives() for m in gen_record.population]))
    return hypervolume(points, HV_REFERENCE)


def _final_front(
    population: list[Solution],
    state: FederatedState,
    ctx,
    settings: ObjectiveSettings,
) -> list[dict[str, object]]:
    objectives = np.array([s.objectives for s in population])
    front = fast_nondominated_sort(objectives)[0]
    out = []
    for index in front:
        sol = population[index]
        params = decode(sol.genes, settings.clip_z)
        rngs = solution_streams(state, ctx.round_index, sol.id, ctx.selected)
        model = aggregate(apply_solution(ctx.local_models, params, rngs))
        result = evaluate(model, state.holdout)
        out.append(
            {
                "id": sol.id,
                "f_ge": float(sol.objectives[0]),
                "f_co": float(sol.objectives[1]),
                "f_pb": float(sol.objectives[2]),
                "holdout_accuracy": result.accuracy,
                "holdout_loss": result.mean_loss,
            }
        )
    return out


def write_run_outputs(record: RunRecord, outdir: str | Path) -> Path:
    """Persist run.json, fronts.csv, hv.csv, and the timing sidecar."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "run.json").write_text(record.to_json(), encoding="utf-8")

    with open(outdir / "fronts.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["generation", "solution_id", "xi", "q_bits", "sigma", "f_ge", "f_co", "f_pb", "fitness"]
        )
        for gen_record in record.generations:
            for m in gen_record.population:
                writer.writerow(
                    [
                        gen_record.generation,
                        m.id,
                        repr(m.xi),
                        m.q_bits,
                        repr(m.sigma),
                        repr(m.f_ge),
                        repr(m.f_co),
                        repr(m.f_pb),
                        repr(m.fitness),
                    ]
                )

    with open(outdir / "hv.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["generation", "hv"])
        for gen_record, value in zip(record.generations, record.hv):
            writer.writerow([gen_record.generation, repr(value)])

    with open(outdir / "timings.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["generation", "seconds"])
        for gen_record, seconds in zip(record.generations, record.timings):
            writer.writerow([gen_record.generation, f"{seconds:.6f}"])
    return outdir


@dataclass
class ComparisonReport:
    seeds: list[int]
    algorithm_a: str
    algorithm_b: str
    per_seed: list[dict[str, object]]
    median_final_a: float
    median_final_b: float

    def to_json_dict(self) -> dict[str, object]:
        return {
            "schema_version": SCHEMA_VERSION,
            "seeds": self.seeds,
            "algorithm_a": self.algorithm_a,
            "algorithm_b": self.algorithm_b,
            "per_seed": self.per_seed,
            "median_final_a": self.median_final_a,
            "median_final_b": self.median_final_b,
        }


def pair_trajectories(
    record_a: RunRecord, record_b: RunRecord
) -> tuple[list[float], list[float], NormalizationBounds]:
    """Both runs' HV trajectories under bounds shared by the pair."""
    objs_a, objs_b = record_a.logged_objectives(), record_b.logged_objectives()
    if len(objs_a) == 0 or len(objs_b) == 0:
        raise ValueError("cannot compare runs with no evaluated generations")
    bounds = NormalizationBounds.from_points(np.vstack([objs_a, objs_b]))
    hv_a = [run_hv(g, bounds) for g in record_a.generations]
    hv_b = [run_hv(g, bounds) for g in record_b.generations]
    return hv_a, hv_b, bounds


def compare_runs(
    config_a: ExperimentConfig,
    config_b: ExperimentConfig,
    seeds: list[int],
    outdir: str | Path | None = None,
) -> ComparisonReport:
    """Run both configs across seeds and report shared-scale HV curves.

    The two configs must agree on everything except ``algorithm`` so the
    comparison is apples to apples.
    """
    if not seeds:
        raise ValueError("need at least one seed")
    echo_a = {k: v for k, v in config_a.echo().items() if k not in ("algorithm", "seed")}
    echo_b = {k: v for k, v in config_b.echo().items() if k not in ("algorithm", "seed")}
    if echo_a != echo_b:
        differing = sorted(k for k in echo_a if echo_a[k] != echo_b[k])
        raise ConfigError(f"compare configs differ outside 'algorithm': {', '.join(differing)}")
    if config_a.generations < 1:
        raise ConfigError("compare needs at least one generation")

    per_seed = []
    outdir = Path(outdir) if outdir is not None else None
    for seed in seeds:
        records = []
        for config in (config_a, config_b):
            run_config = ExperimentConfig(**{**config.__dict__, "seed": seed})
            record = run_search(run_config)
            if outdir is not None:
                write_run_outputs(record, outdir / "runs" / f"{config.algorithm}-seed{seed}")
            records.append(record)
        hv_a, hv_b, bounds = pair_trajectories(records[0], records[1])
        per_seed.append(
            {
                "seed": seed,
                "hv_a": hv_a,
                "hv_b": hv_b,
                "final_a": hv_a[-1],
                "final_b": hv_b[-1],
                "ideal": [float(v) for v in bounds.ideal],
                "nadir": [float(v) for v in bounds.nadir],
            }
        )

    report = ComparisonReport(
        seeds=list(seeds),
        algorithm_a=config_a.algorithm,
        algorithm_b=config_b.algorithm,
        per_seed=per_seed,
        median_final_a=float(np.median([row["final_a"] for row in per_seed])),
        median_final_b=float(np.median([row["final_b"] for row in per_seed])),
    )
    if outdir is not None:
        write_comparison_outputs(report, outdir)
    return report


def write_comparison_outputs(report: ComparisonReport, outdir: str | Path) -> Path:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    payload = json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n"
    (outdir / "comparison.json").write_text(payload, encoding="utf-8")

    generations = len(report.per_seed[0]["hv_a"])
    with open(outdir / "comparison.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["algorithm", "seed"] + [f"hv_{g}" for g in range(generations)])
        for algorithm, key in ((report.algorithm_a, "hv_a"), (report.algorithm_b, "hv_b")):
            for row in report.per_seed:
                writer.writerow([algorithm, row["seed"]] + [repr(v) for v in row[key]])
    return outdir
