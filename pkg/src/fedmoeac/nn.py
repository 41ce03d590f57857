"""Dense softmax classifier as pure functions over value-semantic weights.

Nothing here holds hidden state: forward/backward/sgd_step take weights in
and hand new values out, so concurrent evaluation of many candidate models
can never interfere. All arrays are float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ConfigError

FULLY_CONNECTED = "fully_connected"


@dataclass
class LayerWeights:
    weights: np.ndarray  # [fan_in, fan_out]
    bias: np.ndarray  # [fan_out]
    role: str = FULLY_CONNECTED

    def __post_init__(self) -> None:
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ValueError(
                f"layer arrays must be 2-D weights + 1-D bias, got {self.weights.shape}/{self.bias.shape}"
            )
        if self.weights.shape[1] != self.bias.shape[0]:
            raise ValueError(
                f"bias length {self.bias.shape[0]} does not match fan-out {self.weights.shape[1]}"
            )

    def copy(self) -> "LayerWeights":
        return LayerWeights(self.weights.copy(), self.bias.copy(), self.role)


@dataclass
class ModelWeights:
    layers: list[LayerWeights] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError("a model needs at least one layer")
        for earlier, later in zip(self.layers, self.layers[1:]):
            if earlier.weights.shape[1] != later.weights.shape[0]:
                raise ValueError(
                    f"layer fan-out {earlier.weights.shape[1]} feeds fan-in {later.weights.shape[0]}"
                )

    @property
    def architecture(self) -> tuple[int, ...]:
        return (self.layers[0].weights.shape[0],) + tuple(l.weights.shape[1] for l in self.layers)

    @property
    def num_params(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers)

    def copy(self) -> "ModelWeights":
        return ModelWeights([l.copy() for l in self.layers])

    def flat(self) -> np.ndarray:
        """All parameters as one vector, layer by layer, weights then bias."""
        return np.concatenate([a.ravel() for l in self.layers for a in (l.weights, l.bias)])

    def with_flat(self, vector: np.ndarray) -> "ModelWeights":
        """Rebuild a model of this shape from a flat parameter vector."""
        if vector.shape != (self.num_params,):
            raise ValueError(f"expected flat vector of length {self.num_params}, got {vector.shape}")
        out, at = [], 0
        for l in self.layers:
            w = vector[at : at + l.weights.size].reshape(l.weights.shape)
            at += l.weights.size
            b = vector[at : at + l.bias.size].copy()
            at += l.bias.size
            out.append(LayerWeights(w.copy(), b, l.role))
        return ModelWeights(out)


@dataclass(frozen=True)
class Batch:
    inputs: np.ndarray  # [n, dim]
    labels: np.ndarray  # [n] ints in [0, classes)

    def __post_init__(self) -> None:
        if self.inputs.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("batch needs 2-D inputs and 1-D labels")
        if len(self.inputs) != len(self.labels):
            raise ValueError(f"{len(self.inputs)} inputs vs {len(self.labels)} labels")
        if len(self.inputs) == 0:
            raise ValueError("empty batch")


@dataclass
class Gradients:
    layers: list[LayerWeights]


@dataclass(frozen=True)
class EvalResult:
    mean_loss: float
    accuracy: float


def init_mlp(architecture: tuple[int, ...], rng: np.random.Generator) -> ModelWeights:
    """Glorot-uniform weights, zero biases, one dense layer per width pair."""
    if len(architecture) < 2 or any(w < 1 for w in architecture):
        raise ValueError(f"architecture needs >= 2 positive widths, got {architecture}")
    layers = []
    for fan_in, fan_out in zip(architecture, architecture[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append(LayerWeights(weights, np.zeros(fan_out)))
    return ModelWeights(layers)


def _check_batch(model: ModelWeights, batch: Batch) -> None:
    want = model.layers[0].weights.shape[0]
    if batch.inputs.shape[1] != want:
        raise ConfigError(
            f"batch width {batch.inputs.shape[1]} does not match model input width {want}"
        )
    classes = model.layers[-1].weights.shape[1]
    if batch.labels.min() < 0 or batch.labels.max() >= classes:
        raise ConfigError(f"labels must lie in [0, {classes})")


def _activations(model: ModelWeights, inputs: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    # pre[i] is layer i's pre-activation, post[i] its output fed to layer i+1
    pre, post = [], [inputs]
    for i, layer in enumerate(model.layers):
        z = post[-1] @ layer.weights + layer.bias
        pre.append(z)
        post.append(np.maximum(z, 0.0) if i < len(model.layers) - 1 else z)
    return pre, post


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward(model: ModelWeights, batch: Batch) -> tuple[np.ndarray, float]:
    """Logits and mean cross-entropy of the batch under the model."""
    _check_batch(model, batch)
    _, post = _activations(model, batch.inputs)
    logits = post[-1]
    log_probs = _log_softmax(logits)
    loss = float(-log_probs[np.arange(len(batch.labels)), batch.labels].mean())
    return logits, loss


def backward(model: ModelWeights, batch: Batch) -> Gradients:
    """Gradients of the mean cross-entropy with respect to every parameter."""
    _check_batch(model, batch)
    pre, post = _activations(model, batch.inputs)
    n = len(batch.labels)
    probs = np.exp(_log_softmax(post[-1]))
    delta = probs
    delta[np.arange(n), batch.labels] -= 1.0
    delta /= n

    grads: list[LayerWeights] = [None] * len(model.layers)  # type: ignore[list-item]
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        grads[i] = LayerWeights(post[i].T @ delta, delta.sum(axis=0), layer.role)
        if i > 0:
            delta = (delta @ layer.weights.T) * (pre[i - 1] > 0)
    return Gradients(grads)


def sgd_step(model: ModelWeights, grads: Gradients, lr: float) -> ModelWeights:
    """One descent step; the input model is untouched."""
    if lr < 0:
        raise ValueError(f"learning rate must be >= 0, got {lr}")
    if len(grads.layers) != len(model.layers):
        raise ValueError("gradient structure does not match the model")
    layers = []
    for layer, grad in zip(model.layers, grads.layers):
        if grad.weights.shape != layer.weights.shape:
            raise ValueError("gradient shapes do not match the model")
        layers.append(
            LayerWeights(layer.weights - lr * grad.weights, layer.bias - lr * grad.bias, layer.role)
        )
    return ModelWeights(layers)


def evaluate(model: ModelWeights, dataset: Dataset) -> EvalResult:
    """Mean loss and argmax accuracy over a whole dataset.

    Ties in the argmax go to the lowest class index.
    """
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    batch = Batch(dataset.inputs, dataset.labels)
    logits, loss = forward(model, batch)
    predicted = logits.argmax(axis=1)
    return EvalResult(mean_loss=loss, accuracy=float((predicted == dataset.labels).mean()))
