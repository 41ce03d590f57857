"""Model compression and privacy operators applied between client and server.

Three per-client transforms (magnitude pruning, min-max quantization with
dequantize, norm clipping plus Gaussian noise) and the two bookkeeping
functions that price them: payload size as a fraction of the dense float32
model, and the accumulated privacy budget of the noise mechanism.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import FULLY_CONNECTED, LayerWeights, ModelWeights

ALLOWED_BITS = (8, 16, 32)
DENSE_BITS = 32


@dataclass(frozen=True)
class CompressionParams:
    """Decoded per-solution knobs: prune threshold, code width, noise scale."""

    xi: float
    q_bits: int
    sigma: float
    clip_z: float = 1.0

    def __post_init__(self) -> None:
        if self.xi < 0:
            raise ValueError(f"pruning threshold must be >= 0, got {self.xi}")
        if self.q_bits not in ALLOWED_BITS:
            raise ValueError(f"q_bits must be one of {ALLOWED_BITS}, got {self.q_bits}")
        if self.sigma < 0:
            raise ValueError(f"noise scale must be >= 0, got {self.sigma}")
        if self.clip_z <= 0:
            raise ValueError(f"clip threshold must be > 0, got {self.clip_z}")


@dataclass(frozen=True)
class PrivacyAccountant:
    """Inputs of the budget formula: rounds so far, sampling rate, delta."""

    rounds_t: int
    sampling_rate: float
    delta: float

    def __post_init__(self) -> None:
        if self.rounds_t < 0:
            raise ValueError(f"rounds_t must be >= 0, got {self.rounds_t}")
        if not 0 < self.sampling_rate <= 1:
            raise ValueError(f"sampling rate must lie in (0, 1], got {self.sampling_rate}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


def sparsify(model: ModelWeights, xi: float) -> ModelWeights:
    """Zero every parameter with magnitude strictly below ``xi``.

    Applies to layers tagged fully connected (weights and biases alike);
    other layers pass through untouched. The boundary ``|w| == xi`` is
    kept. ``xi = 0`` therefore only drops parameters that are already
    exactly zero, i.e. it changes no values.
    """
    if xi < 0:
        raise ValueError(f"pruning threshold must be >= 0, got {xi}")
    layers = []
    for layer in model.layers:
        if layer.role != FULLY_CONNECTED:
            layers.append(layer.copy())
            continue
        layers.append(
            LayerWeights(
                np.where(np.abs(layer.weights) >= xi, layer.weights, 0.0),
                np.where(np.abs(layer.bias) >= xi, layer.bias, 0.0),
                layer.role,
            )
        )
    return ModelWeights(layers)


def _quantize_array(values: np.ndarray, lo: float, hi: float, levels: int) -> np.ndarray:
    codes = np.floor((values - lo) / (hi - lo) * levels + 0.5)  # round half up
    return lo + codes / levels * (hi - lo)


def quantize_dequantize(model: ModelWeights, q_bits: int) -> ModelWeights:
    """Simulate q-bit min-max quantization per fully connected layer.

    Each layer's range [min, max] is taken over all of its parameters
    (weights and bias together, pruned zeros included) and split into
    ``2**q_bits - 1`` steps; every value snaps to its nearest step with
    halves rounding up. A constant layer (max == min) passes through
    unchanged. Any ``q_bits >= 1`` is accepted here; the {8, 16, 32} menu
    is enforced where solutions are decoded.
    """
    if q_bits < 1:
        raise ValueError(f"q_bits must be >= 1, got {q_bits}")
    levels = 2**q_bits - 1
    layers = []
    for layer in model.layers:
        if layer.role != FULLY_CONNECTED:
            layers.append(layer.copy())
            continue
        lo = float(min(layer.weights.min(), layer.bias.min()))
        hi = float(max(layer.weights.max(), layer.bias.max()))
        if hi == lo:
            layers.append(layer.copy())
            continue
        layers.append(
            LayerWeights(
                _quantize_array(layer.weights, lo, hi, levels),
                _quantize_array(layer.bias, lo, hi, levels),
                layer.role,
            )
        )
    return ModelWeights(layers)


def clip_and_noise(
    model: ModelWeights, clip_z: float, sigma: float, rng: np.random.Generator
) -> ModelWeights:
    """Clip the whole parameter vector to L2 norm ``clip_z``, then add noise.

    Clipping rescales by ``1 / max(1, |w| / clip_z)`` over the flattened
    model (all layers), so a model already inside the ball is untouched.
    Noise is per-component Gaussian with standard deviation
    ``sigma * clip_z``; ``sigma = 0`` adds nothing and draws nothing from
    ``rng``.
    """
    if clip_z <= 0:
        raise ValueError(f"clip threshold must be > 0, got {clip_z}")
    if sigma < 0:
        raise ValueError(f"noise scale must be >= 0, got {sigma}")
    flat = model.flat()
    norm = float(np.linalg.norm(flat))
    flat = flat / max(1.0, norm / clip_z)
    if sigma > 0:
        flat = flat + rng.normal(0.0, sigma * clip_z, size=flat.shape)
    return model.with_flat(flat)


def comm_overhead(
    processed: list[ModelWeights], q_bits: list[int], originals: list[ModelWeights]
) -> float:
    """Payload fraction: q-bit codes for surviving parameters vs dense float32.

    A pruned (exactly zero) parameter costs nothing, because the wire
    format is a mask plus codes for survivors. The numerator is therefore
    nonzero-count times code width, the denominator total-count times 32.
    Always in [0, 1] for code widths up to 32.
    """
    if not processed or not originals:
        raise ValueError("need at least one model on each side")
    if not (len(processed) == len(q_bits) == len(originals)):
        raise ValueError(
            f"length mismatch: {len(processed)} processed, {len(q_bits)} widths, {len(originals)} originals"
        )
    sent = 0
    dense = 0
    for model, bits, original in zip(processed, q_bits, originals):
        if bits < 1:
            raise ValueError(f"q_bits must be >= 1, got {bits}")
        if model.architecture != original.architecture:
            raise ValueError("processed/original architectures differ")
        sent += int(np.count_nonzero(model.flat())) * bits
        dense += original.num_params * DENSE_BITS
    return sent / dense


def privacy_budget(accountant: PrivacyAccountant, sigma: float, ceiling: float = 10.0) -> float:
    """Accumulated (epsilon, delta) budget of T noisy rounds.

    ``sqrt(2 T ln(1/delta)) / (v sigma)``: grows with the root of the
    round count, shrinks as sampling rate or noise grow. ``sigma = 0``
    means unbounded leakage and returns the configured ceiling instead of
    diverging; zero rounds cost zero budget.
    """
    if sigma < 0:
        raise ValueError(f"noise scale must be >= 0, got {sigma}")
    if ceiling <= 0:
        raise ValueError(f"budget ceiling must be > 0, got {ceiling}")
    if sigma == 0:
        return ceiling
    if accountant.rounds_t == 0:
        return 0.0
    numerator = np.sqrt(2.0 * accountant.rounds_t * np.log(1.0 / accountant.delta))
    return float(numerator / (accountant.sampling_rate * sigma))
