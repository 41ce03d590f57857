"""Federated learning simulator with evolutionary trade-off search.

The package simulates FedAvg-style training over simulated clients,
compresses and privatizes client updates with per-solution settings
(magnitude pruning, min-max quantization, clipped Gaussian noise), and
searches those settings as a three-objective minimization of global
error, communication payload, and privacy budget.
"""

from .config import ExperimentConfig, load_config, parse_config_text
from .data import Dataset, gen_synthetic, load_mnist_idx
from .errors import ConfigError, DataError
from .evolution import (
    ClusterSet,
    Solution,
    decode,
    environmental_selection,
    fast_nondominated_sort,
    generate_offspring,
    hierarchical_cluster,
    init_population,
    kmeans_cosine,
    nsga2_select,
    polynomial_mutation,
    sbx_crossover,
    scalar_fitness,
)
from .federated import (
    FederatedState,
    ObjectiveSettings,
    RoundContext,
    advance_round,
    aggregate,
    apply_solution,
    evaluate_objectives,
    partition_dataset,
    run_local_training,
    run_round,
)
from .metrics import NormalizationBounds, dominates, hypervolume, normalize
from .nn import (
    Batch,
    EvalResult,
    Gradients,
    LayerWeights,
    ModelWeights,
    backward,
    evaluate,
    forward,
    init_mlp,
    sgd_step,
)
from .operators import (
    CompressionParams,
    PrivacyAccountant,
    clip_and_noise,
    comm_overhead,
    privacy_budget,
    quantize_dequantize,
    sparsify,
)
from .runner import RunRecord, compare_runs, load_run_record, run_search, write_run_outputs
from .search import FedMoeacSearch, Nsga2Search

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "ClusterSet",
    "CompressionParams",
    "ConfigError",
    "DataError",
    "Dataset",
    "EvalResult",
    "ExperimentConfig",
    "FedMoeacSearch",
    "FederatedState",
    "Gradients",
    "LayerWeights",
    "ModelWeights",
    "NormalizationBounds",
    "Nsga2Search",
    "ObjectiveSettings",
    "PrivacyAccountant",
    "RoundContext",
    "RunRecord",
    "Solution",
    "advance_round",
    "aggregate",
    "apply_solution",
    "backward",
    "clip_and_noise",
    "comm_overhead",
    "compare_runs",
    "decode",
    "dominates",
    "environmental_selection",
    "evaluate",
    "evaluate_objectives",
    "fast_nondominated_sort",
    "forward",
    "gen_synthetic",
    "generate_offspring",
    "hierarchical_cluster",
    "hypervolume",
    "init_mlp",
    "init_population",
    "kmeans_cosine",
    "load_config",
    "load_mnist_idx",
    "load_run_record",
    "normalize",
    "nsga2_select",
    "parse_config_text",
    "partition_dataset",
    "polynomial_mutation",
    "privacy_budget",
    "quantize_dequantize",
    "run_local_training",
    "run_round",
    "run_search",
    "sbx_crossover",
    "scalar_fitness",
    "sgd_step",
    "sparsify",
    "write_run_outputs",
]
