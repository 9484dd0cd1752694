"""Flat-parameter softmax classifiers with analytic gradients.

Two desk-scale architectures: multinomial logistic regression and a
ReLU multilayer perceptron. Parameters live in a single float64 vector
(per layer: weight matrix row-major, then biases) so the federated
machinery can treat models, updates, and noise uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Tuple, Union

import numpy as np

from .data import ClientPartition, Dataset
from .errors import DimensionError, ParameterError
from .rng import as_generator, rng_stream
from .vectors import as_vector, check_finite

__all__ = ["ModelSpec", "ModelState", "init_params", "forward_logits",
           "loss_and_gradient", "sgd_local_train"]


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description; the parameter count is a pure function of it."""

    kind: str  # "logistic" or "mlp"
    input_dim: int
    num_classes: int
    hidden_dims: Tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.kind not in ("logistic", "mlp"):
            raise ParameterError(f"unknown model kind: {self.kind!r}")
        if self.input_dim < 1 or self.num_classes < 2:
            raise ParameterError("need input_dim >= 1 and num_classes >= 2")
        if self.kind == "logistic" and self.hidden_dims:
            raise ParameterError("logistic models take no hidden layers")
        if self.kind == "mlp" and not self.hidden_dims:
            raise ParameterError("mlp models need at least one hidden layer")
        if any(h < 1 for h in self.hidden_dims):
            raise ParameterError("hidden layer widths must be >= 1")

    def layer_shapes(self) -> Iterator[Tuple[int, int]]:
        """(fan_out, fan_in) per layer, input to output."""
        sizes = (self.input_dim,) + self.hidden_dims + (self.num_classes,)
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            yield fan_out, fan_in

    @property
    def param_count(self) -> int:
        return sum(out * inp + out for out, inp in self.layer_shapes())


@dataclass(frozen=True)
class ModelState:
    """An architecture plus one concrete parameter vector."""

    spec: ModelSpec
    params: np.ndarray

    def __post_init__(self) -> None:
        params = as_vector(self.params)
        if params.shape[0] != self.spec.param_count:
            raise DimensionError(
                f"spec wants {self.spec.param_count} parameters, got {params.shape[0]}"
            )
        check_finite(params, "model parameters")
        object.__setattr__(self, "params", params)

    def with_params(self, params: np.ndarray) -> "ModelState":
        return replace(self, params=params)


def _unpack(spec: ModelSpec, params: np.ndarray) -> list:
    layers = []
    pos = 0
    for out, inp in spec.layer_shapes():
        w = params[pos : pos + out * inp].reshape(out, inp)
        pos += out * inp
        b = params[pos : pos + out]
        pos += out
        layers.append((w, b))
    return layers


def init_params(spec: ModelSpec, seed: int) -> ModelState:
    """Glorot-uniform weights, zero biases; deterministic per seed."""
    rng = rng_stream(seed, "model-init")
    chunks = []
    for out, inp in spec.layer_shapes():
        bound = np.sqrt(6.0 / (inp + out))
        chunks.append(rng.uniform(-bound, bound, size=out * inp))
        chunks.append(np.zeros(out))
    return ModelState(spec, np.concatenate(chunks))


def forward_logits(model: ModelState, features) -> np.ndarray:
    """Pre-softmax scores; accepts a single feature vector or an (n, dim) batch."""
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.spec.input_dim:
        raise DimensionError(f"expected {model.spec.input_dim} features, got {x.shape[1]}")
    act = x
    layers = _unpack(model.spec, model.params)
    for w, b in layers[:-1]:
        act = np.maximum(act @ w.T + b, 0.0)
    w, b = layers[-1]
    logits = act @ w.T + b
    return logits[0] if single else logits


def _loss_grad_arrays(model: ModelState, x: np.ndarray, y: np.ndarray):
    layers = _unpack(model.spec, model.params)
    acts = [x]
    pre = []
    act = x
    for w, b in layers[:-1]:
        z = act @ w.T + b
        pre.append(z)
        act = np.maximum(z, 0.0)
        acts.append(act)
    w, b = layers[-1]
    logits = act @ w.T + b

    n = x.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_z - shifted[np.arange(n), y]))

    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads = [None] * len(layers)
    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        grads[li] = (delta.T @ acts[li], delta.sum(axis=0))
        if li > 0:
            delta = (delta @ w) * (pre[li - 1] > 0.0)

    flat = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])
    return loss, flat


def loss_and_gradient(model: ModelState, batch: Union[Dataset, ClientPartition]):
    """Mean softmax cross-entropy over a batch and its analytic gradient."""
    data = getattr(batch, "data", batch)
    if len(data) == 0:
        raise ParameterError("loss requires a non-empty batch")
    if data.dim != model.spec.input_dim:
        raise DimensionError(f"model expects {model.spec.input_dim} features, data has {data.dim}")
    return _loss_grad_arrays(model, data.features, data.labels)


def sgd_local_train(
    model: ModelState,
    part: Union[ClientPartition, Dataset],
    epochs: int,
    batch_size: int,
    lr: float,
    seed,
) -> Tuple[np.ndarray, float]:
    """Run local mini-batch SGD and return (update, final training loss).

    The update is (initial - final) / lr, the effective gradient a server
    undoes with one step of size lr, which keeps the server-side model
    arithmetic exact for any local epoch count. ``seed`` may be an int or
    a numpy Generator; shuffling is deterministic either way.
    """
    if epochs < 1 or batch_size < 1:
        raise ParameterError("epochs and batch_size must be >= 1")
    if lr < 0:
        raise ParameterError("learning rate must be non-negative")
    data = getattr(part, "data", part)
    if len(data) == 0:
        raise ParameterError("cannot train on an empty partition")

    rng = as_generator(seed)
    params = model.params.copy()
    work = model.with_params(params)
    n = len(data)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            rows = order[start : start + batch_size]
            _, grad = _loss_grad_arrays(work, data.features[rows], data.labels[rows])
            params -= lr * grad
    final_loss, _ = _loss_grad_arrays(work, data.features, data.labels)
    if lr == 0.0:
        return np.zeros_like(params), final_loss
    return (model.params - params) / lr, final_loss
