"""Estimator front end for the two search algorithms.

``FedMoeacSearch`` / ``Nsga2Search`` wrap the experiment engine in the
familiar fit/predict shape: ``fit(X, y)`` runs the whole federated
optimization on the given samples, after which the trade-off front and
hypervolume history hang off trailing-underscore attributes and
``predict`` classifies with the final carried global model.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .config import ExperimentConfig
from .data import Dataset
from .errors import ConfigError, DataError
from .nn import Batch, forward
from .runner import execute_run


class _FederatedSearch(ClassifierMixin, BaseEstimator):
    _algorithm = ""

    def __init__(
        self,
        population_size: int = 10,
        generations: int = 12,
        clients: int = 10,
        participation: float = 0.4,
        local_epochs: int = 2,
        batch_size: int = 64,
        learning_rate: float = 0.01,
        hidden_layer_sizes: tuple[int, ...] = (16,),
        partition: str = "iid",
        objective_eval: str = "aggregated",
        delta: float = 1e-5,
        clip: float = 1.0,
        budget_ceiling: float = 10.0,
        mating_clusters: int = 3,
        crossover_prob: float = 0.9,
        crossover_index: float = 2.0,
        mutation_prob: float = 0.1,
        mutation_index: float = 20.0,
        linkage: str = "centroid",
        fitness_weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
        holdout_fraction: float = 0.1,
        workers: int = 1,
        random_state: int = 0,
    ) -> None:
        self.population_size = population_size
        self.generations = generations
        self.clients = clients
        self.participation = participation
        self.local_epochs = local_epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.hidden_layer_sizes = hidden_layer_sizes
        self.partition = partition
        self.objective_eval = objective_eval
        self.delta = delta
        self.clip = clip
        self.budget_ceiling = budget_ceiling
        self.mating_clusters = mating_clusters
        self.crossover_prob = crossover_prob
        self.crossover_index = crossover_index
        self.mutation_prob = mutation_prob
        self.mutation_index = mutation_index
        self.linkage = linkage
        self.fitness_weights = fitness_weights
        self.holdout_fraction = holdout_fraction
        self.workers = workers
        self.random_state = random_state

    def _to_config(self) -> ExperimentConfig:
        return ExperimentConfig(
            algorithm=self._algorithm,
            seed=self.random_state,
            clients=self.clients,
            participation=self.participation,
            local_epochs=self.local_epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            partition=self.partition,
            objective_eval=self.objective_eval,
            delta=self.delta,
            clip=self.clip,
            budget_ceiling=self.budget_ceiling,
            population=self.population_size,
            generations=self.generations,
            mating_clusters=self.mating_clusters,
            crossover_prob=self.crossover_prob,
            crossover_index=self.crossover_index,
            mutation_prob=self.mutation_prob,
            mutation_index=self.mutation_index,
            linkage=self.linkage,
            fitness_weights=tuple(self.fitness_weights),
            hidden=tuple(self.hidden_layer_sizes),
            holdout_fraction=self.holdout_fraction,
            workers=self.workers,
        )

    def fit(self, X, y) -> "_FederatedSearch":
        """Run the federated search on (X, y); returns self."""
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        dataset = Dataset(X, encoded.astype(np.int64), num_classes=len(self.classes_))
        try:
            record, state = execute_run(self._to_config(), dataset)
        except (ConfigError, DataError) as exc:
            raise ValueError(str(exc)) from exc
        self.n_features_in_ = X.shape[1]
        self.record_ = record
        self.model_ = state.global_model
        self.hv_ = np.array(record.hv)
        self.front_ = np.array(
            [[row["f_ge"], row["f_co"], row["f_pb"]] for row in record.final_front]
        ).reshape(-1, 3)
        self.front_solutions_ = list(record.final_front)
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        dummy = np.zeros(len(X), dtype=np.int64)
        logits, _ = forward(self.model_, Batch(X, dummy))
        return logits

    def predict(self, X) -> np.ndarray:
        """Labels from the final global model (ties to the lowest class)."""
        logits = self.decision_function(X)
        return self.classes_[logits.argmax(axis=1)]


class FedMoeacSearch(_FederatedSearch):
    """Cluster-guided evolutionary search over compression/privacy settings."""

    _algorithm = "fedmoeac"


class Nsga2Search(_FederatedSearch):
    """Same engine, selection by nondominated sorting + crowding."""

    _algorithm = "nsga2"
