"""Shared-weight twin feed-forward network, pair losses, and gradients.

There is exactly one parameter set: both twins are the same object, so
weight sharing is structural rather than synchronised. Embeddings are
produced by a plain MLP (hidden activations, linear output); pair distance
is the Euclidean norm between the two embeddings.

Two losses are supported:

* contrastive: similar pairs contribute d^2, dissimilar pairs
  max(margin - d, 0)^2; the batch loss is the sum over pairs.
* regularized_log: the distance is mapped to a similarity s in (0, 1)
  (default exp(-d)), the batch loss is the negated log-likelihood
  -sum(y log s + (1-y) log(1-s)) plus an L2 weight penalty added once
  per batch.

Gradients are exact analytic derivatives of those batch sums, with both
twins' contributions accumulated into the shared parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .pairgen import PairBatch, Similarity

CLAMP_EPS = 1e-12
CHECKPOINT_FORMAT = "twin-embedding-checkpoint"
CHECKPOINT_VERSION = 1

CONTRASTIVE = "contrastive"
REGULARIZED_LOG = "regularized_log"

_ACTIVATIONS = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z: (z > 0.0).astype(float)),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "sigmoid": (
        lambda z: 1.0 / (1.0 + np.exp(-z)),
        lambda z: (s := 1.0 / (1.0 + np.exp(-z))) * (1.0 - s),
    ),
    "linear": (lambda z: z, lambda z: np.ones_like(z)),
}

# distance -> similarity maps for the regularized log loss: (f, df/dd)
_SIMILARITY_MAPS = {
    "exp_neg": (lambda d: np.exp(-d), lambda d: -np.exp(-d)),
}


@dataclass(frozen=True)
class LossConfig:
    kind: str = CONTRASTIVE
    margin: float = 1.0
    l2: float = 1e-4
    similarity_map: str = "exp_neg"

    def __post_init__(self):
        if self.kind not in (CONTRASTIVE, REGULARIZED_LOG):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == CONTRASTIVE and not self.margin > 0:
            raise ValueError("contrastive loss requires margin > 0")
        if self.l2 < 0:
            raise ValueError("l2 coefficient must be nonnegative")
        if self.similarity_map not in _SIMILARITY_MAPS:
            raise ValueError(f"unknown similarity map {self.similarity_map!r}")


@dataclass
class SiameseModel:
    """One parameter set serving both twins (f1 and f2 are identical)."""

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]      # weights[k]: (layer_sizes[k], layer_sizes[k+1])
    biases: list[np.ndarray]
    activation: str = "sigmoid"

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def input_width(self) -> int:
        return self.layer_sizes[0]

    @property
    def embedding_width(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "SiameseModel":
        return SiameseModel(
            self.layer_sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )


def init_model(
    layer_sizes: Sequence[int],
    activation: str = "sigmoid",
    rng: int | np.random.Generator = 0,
) -> SiameseModel:
    """Scaled-uniform weight init (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2:
        raise ValueError(f"need at least input and embedding widths, got {list(sizes)}")
    if any(s <= 0 for s in sizes):
        raise ValueError(f"layer widths must be positive, got {list(sizes)}")
    if activation not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return SiameseModel(sizes, weights, biases, activation)


def _forward_trace(model: SiameseModel, x: np.ndarray):
    """Forward pass keeping per-layer pre-activations and activations."""
    act_fn, _ = _ACTIVATIONS[model.activation]
    last = model.n_layers - 1
    acts = [x]
    pres = []
    a = x
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        with np.errstate(over="ignore", invalid="ignore"):
            z = a @ w + b
        if not np.all(np.isfinite(z)):
            raise FloatingPointError(f"numerical overflow in layer {k}")
        pres.append(z)
        a = z if k == last else act_fn(z)
        acts.append(a)
    return acts, pres


def embed(model: SiameseModel, x: np.ndarray) -> np.ndarray:
    """Embed one vector (1-D) or a batch (2-D); output layer is linear."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.shape[1] != model.input_width:
        raise ValueError(f"input width {batch.shape[1]} != model input width {model.input_width}")
    out = _forward_trace(model, batch)[0][-1]
    return out[0] if single else out


def distance(model: SiameseModel, x1: np.ndarray, x2: np.ndarray) -> float:
    """Euclidean distance between the twin embeddings of x1 and x2."""
    return float(np.linalg.norm(embed(model, x1) - embed(model, x2)))


def _target_values(targets) -> np.ndarray:
    if isinstance(targets, Similarity):
        targets = [targets]
    if isinstance(targets, np.ndarray) and targets.dtype != object:
        return targets.astype(float)
    return np.array([1.0 if t is Similarity.SIMILAR else 0.0 for t in targets])


def contrastive_loss(d, targets, margin: float = 1.0):
    """Per-pair contrastive terms: y*d^2 + (1-y)*max(margin-d, 0)^2.

    Accepts scalars or arrays; the batch loss is the sum of these terms.
    """
    scalar = np.ndim(d) == 0
    d = np.atleast_1d(np.asarray(d, dtype=float))
    y = _target_values(targets)
    slack = np.maximum(margin - d, 0.0)
    out = y * d**2 + (1.0 - y) * slack**2
    return float(out[0]) if scalar else out


def regularized_log_loss(mapped, targets, l2: float, model: SiameseModel) -> float:
    """Negated log-likelihood of mapped similarities plus L2 weight penalty.

    `mapped` must already be similarity values in (0, 1); values at the
    boundaries are clamped to [CLAMP_EPS, 1 - CLAMP_EPS]. The penalty
    l2 * sum(w^2) is added once per batch (weights only, not biases).
    """
    s = np.clip(np.atleast_1d(np.asarray(mapped, dtype=float)), CLAMP_EPS, 1.0 - CLAMP_EPS)
    y = _target_values(targets)
    nll = -np.sum(y * np.log(s) + (1.0 - y) * np.log(1.0 - s))
    return float(nll + l2 * sum(float(np.sum(w**2)) for w in model.weights))


@dataclass
class Gradients:
    d_weights: list[np.ndarray]
    d_biases: list[np.ndarray]

    def scaled(self, factor: float) -> "Gradients":
        return Gradients(
            [g * factor for g in self.d_weights],
            [g * factor for g in self.d_biases],
        )

    def max_abs(self) -> float:
        parts = self.d_weights + self.d_biases
        return max(float(np.max(np.abs(g))) for g in parts)


def _zero_gradients(model: SiameseModel) -> Gradients:
    return Gradients(
        [np.zeros_like(w) for w in model.weights],
        [np.zeros_like(b) for b in model.biases],
    )


def _pair_terms(d: np.ndarray, y: np.ndarray, loss: LossConfig, model: SiameseModel):
    """Per-pair losses and the coefficient c with dL/d(e1-e2) = c * (e1-e2)."""
    if loss.kind == CONTRASTIVE:
        slack = np.maximum(loss.margin - d, 0.0)
        losses = y * d**2 + (1.0 - y) * slack**2
        with np.errstate(divide="ignore", invalid="ignore"):
            repel = np.where(d > 0.0, slack / d, 0.0)
        coeff = 2.0 * y - 2.0 * (1.0 - y) * repel
        return losses, coeff, 0.0
    sim_map, sim_map_deriv = _SIMILARITY_MAPS[loss.similarity_map]
    raw = sim_map(d)
    s = np.clip(raw, CLAMP_EPS, 1.0 - CLAMP_EPS)
    losses = -(y * np.log(s) + (1.0 - y) * np.log(1.0 - s))
    clamped = (raw <= CLAMP_EPS) | (raw >= 1.0 - CLAMP_EPS)
    dl_ds = np.where(clamped, 0.0, -(y / s - (1.0 - y) / (1.0 - s)))
    dl_dd = dl_ds * sim_map_deriv(d)
    with np.errstate(divide="ignore", invalid="ignore"):
        coeff = np.where(d > 0.0, dl_dd / d, 0.0)
    penalty = loss.l2 * sum(float(np.sum(w**2)) for w in model.weights)
    return losses, coeff, penalty


def _backprop(model: SiameseModel, acts, pres, upstream, grads: Gradients) -> None:
    _, act_deriv = _ACTIVATIONS[model.activation]
    delta = upstream
    for k in range(model.n_layers - 1, -1, -1):
        grads.d_weights[k] += acts[k].T @ delta
        grads.d_biases[k] += delta.sum(axis=0)
        if k > 0:
            delta = (delta @ model.weights[k].T) * act_deriv(pres[k - 1])


def batch_loss(model: SiameseModel, batch: PairBatch, loss: LossConfig) -> float:
    """Batch loss only (sum over pairs, plus penalty for regularized_log)."""
    e1 = embed(model, batch.left_features)
    e2 = embed(model, batch.right_features)
    d = np.linalg.norm(e1 - e2, axis=1)
    losses, _, penalty = _pair_terms(d, batch.target_values(), loss, model)
    return float(np.sum(losses) + penalty)


def batch_gradients(
    model: SiameseModel, batch: PairBatch, loss: LossConfig
) -> tuple[Gradients, float]:
    """Exact gradients of the batch loss for every weight and bias.

    Both twins backpropagate into the same parameter set. Returns the
    gradients together with the batch loss value.
    """
    if len(batch) == 0:
        raise ValueError("batch is empty")
    acts1, pres1 = _forward_trace(model, batch.left_features)
    acts2, pres2 = _forward_trace(model, batch.right_features)
    diff = acts1[-1] - acts2[-1]
    d = np.linalg.norm(diff, axis=1)
    losses, coeff, penalty = _pair_terms(d, batch.target_values(), loss, model)
    upstream = coeff[:, None] * diff

    grads = _zero_gradients(model)
    _backprop(model, acts1, pres1, upstream, grads)
    _backprop(model, acts2, pres2, -upstream, grads)
    if loss.kind == REGULARIZED_LOG and loss.l2 > 0:
        for k, w in enumerate(model.weights):
            grads.d_weights[k] += 2.0 * loss.l2 * w
    for k, g in enumerate(grads.d_weights):
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"numerical overflow in layer {k}")
    return grads, float(np.sum(losses) + penalty)


@dataclass
class MomentumState:
    """Classic momentum: v <- momentum*v + g; param <- param - lr*v."""

    momentum: float
    velocity_w: list[np.ndarray] = field(default_factory=list)
    velocity_b: list[np.ndarray] = field(default_factory=list)


def init_momentum_state(model: SiameseModel, momentum: float = 0.9) -> MomentumState:
    return MomentumState(
        momentum,
        [np.zeros_like(w) for w in model.weights],
        [np.zeros_like(b) for b in model.biases],
    )


def apply_update(
    model: SiameseModel,
    grads: Gradients,
    state: MomentumState,
    learning_rate: float,
) -> tuple[SiameseModel, MomentumState]:
    """One momentum gradient-descent step, updating the model in place."""
    for k in range(model.n_layers):
        state.velocity_w[k] = state.momentum * state.velocity_w[k] + grads.d_weights[k]
        state.velocity_b[k] = state.momentum * state.velocity_b[k] + grads.d_biases[k]
        model.weights[k] -= learning_rate * state.velocity_w[k]
        model.biases[k] -= learning_rate * state.velocity_b[k]
    return model, state


def save_model(model: SiameseModel, path: str | Path) -> None:
    """Text checkpoint; float64 parameters round-trip exactly."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(model.layer_sizes),
        "activation": model.activation,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_model(path: str | Path) -> SiameseModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')!r}")
    return SiameseModel(
        tuple(payload["layer_sizes"]),
        [np.array(w, dtype=float) for w in payload["weights"]],
        [np.array(b, dtype=float) for b in payload["biases"]],
        payload["activation"],
    )
