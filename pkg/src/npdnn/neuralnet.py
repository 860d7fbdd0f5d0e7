"""Dense feed-forward networks trained by backpropagation.

Everything works on float64 arrays. ``forward`` and ``backward`` accept a
single input vector or a batch with one sample per row; the activations
returned by ``forward`` are all ``backward`` needs, because every supported
activation derivative can be written in terms of the activation output.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._random import make_rng
from ._validation import check_int, check_real
from .exceptions import (
    BadArchitecture,
    BadHyperparams,
    DimensionMismatch,
    DivergedLoss,
    LossActivationMismatch,
)

ACTIVATIONS = ("relu", "tanh", "sigmoid", "linear", "softmax")
LOSSES = ("mse", "cross_entropy")
OPTIMIZERS = ("sgd", "adam")


def softmax(z):
    """Softmax along the last axis, shifted by the max for stability."""
    z = np.asarray(z, dtype=float)
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def activate(kind, z):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return expit(z)
    if kind == "linear":
        return z
    if kind == "softmax":
        return softmax(z)
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(kind, a, grad_a):
    """Map dL/da to dL/dz using only the activation output ``a``."""
    if kind == "relu":
        return grad_a * (a > 0)
    if kind == "tanh":
        return grad_a * (1.0 - a * a)
    if kind == "sigmoid":
        return grad_a * a * (1.0 - a)
    if kind == "linear":
        return grad_a
    if kind == "softmax":
        # Jacobian-vector product of softmax: a * (g - <g, a>)
        return a * (grad_a - np.sum(grad_a * a, axis=-1, keepdims=True))
    raise ValueError(f"unknown activation {kind!r}")


@dataclass(eq=False)
class DenseLayer:
    """``activation(weights @ x + bias)`` with ``weights`` of shape (out, in)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "linear"

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=float, ndmin=2)
        self.bias = np.array(self.bias, dtype=float, ndmin=1)
        if self.activation not in ACTIVATIONS:
            raise BadArchitecture(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise BadArchitecture(
                f"weights {self.weights.shape} and bias {self.bias.shape} do not match"
            )
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise BadArchitecture("layer parameters must be finite")

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]

    def __eq__(self, other):
        if not isinstance(other, DenseLayer):
            return NotImplemented
        return (
            self.activation == other.activation
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.bias, other.bias)
        )


@dataclass(eq=False)
class MlpNetwork:
    layers: list

    def __post_init__(self):
        self.layers = list(self.layers)
        if not self.layers:
            raise BadArchitecture("a network needs at least one layer")
        for i, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.out_dim != b.in_dim:
                raise BadArchitecture(
                    f"layer {i} outputs {a.out_dim} values but layer {i + 1} expects {b.in_dim}"
                )
        for layer in self.layers[:-1]:
            if layer.activation == "softmax":
                raise BadArchitecture("softmax is only allowed on the final layer")

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    @property
    def layer_dims(self):
        return [self.input_dim] + [layer.out_dim for layer in self.layers]

    def parameters(self):
        """Flat list ``[W0, b0, W1, b1, ...]`` of the live parameter arrays."""
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.bias))
        return out

    def copy(self):
        return copy.deepcopy(self)

    def __eq__(self, other):
        if not isinstance(other, MlpNetwork):
            return NotImplemented
        return len(self.layers) == len(other.layers) and all(
            a == b for a, b in zip(self.layers, other.layers)
        )

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "layers": [
                {
                    "activation": layer.activation,
                    "weights": layer.weights.tolist(),
                    "bias": layer.bias.tolist(),
                }
                for layer in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, data):
        layers = [
            DenseLayer(
                np.array(d["weights"], dtype=float).reshape(len(d["bias"]), -1),
                d["bias"],
                d["activation"],
            )
            for d in data["layers"]
        ]
        net = cls(layers)
        if net.input_dim != data["input_dim"]:
            raise BadArchitecture("stored input_dim does not match first layer")
        return net


@dataclass
class Gradients:
    weights: list
    biases: list

    def as_list(self):
        """Interleaved ``[dW0, db0, dW1, db1, ...]`` matching ``MlpNetwork.parameters``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 32
    optimizer: str = "adam"
    seed: int = 0
    loss: str = "mse"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        check_real("learning_rate", self.learning_rate, 0.0, 1.0, low_open=True)
        check_int("epochs", self.epochs, 1)
        check_int("batch_size", self.batch_size, 1)
        if self.optimizer not in OPTIMIZERS:
            raise BadHyperparams(f"optimizer must be one of {OPTIMIZERS}")
        if self.loss not in LOSSES:
            raise BadHyperparams(f"loss must be one of {LOSSES}")


def init_network(layer_dims, activations, seed=0):
    """Glorot-uniform weights, zero biases.

    ``layer_dims`` lists the input width followed by each layer's output width,
    so it is one longer than ``activations``.
    """
    layer_dims = list(layer_dims)
    activations = list(activations)
    if len(layer_dims) != len(activations) + 1 or not activations:
        raise BadArchitecture(
            f"{len(layer_dims)} dims need {len(layer_dims) - 1} activations, got {len(activations)}"
        )
    if any(int(d) != d or d < 1 for d in layer_dims):
        raise BadArchitecture(f"layer widths must be positive integers: {layer_dims}")
    rng = make_rng(seed, "init_network")
    layers = []
    for fan_in, fan_out, act in zip(layer_dims, layer_dims[1:], activations):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-bound, bound, size=(int(fan_out), int(fan_in)))
        layers.append(DenseLayer(weights, np.zeros(int(fan_out)), act))
    return MlpNetwork(layers)


def _as_input(x, width):
    x = np.asarray(x, dtype=float)
    if x.ndim not in (1, 2) or x.shape[-1] != width:
        raise DimensionMismatch(f"input of shape {x.shape} does not fit width {width}")
    return x


def dense_forward(layer, x):
    x = _as_input(x, layer.in_dim)
    return activate(layer.activation, x @ layer.weights.T + layer.bias)


def forward(net, x):
    """Return ``[x, a_1, ..., a_L]``; the last entry is the network output."""
    activations = [_as_input(x, net.input_dim)]
    for layer in net.layers:
        activations.append(dense_forward(layer, activations[-1]))
    return activations


def predict(net, x):
    return forward(net, x)[-1]


def loss_value(output, target, loss="mse"):
    if loss == "mse":
        return float(np.mean((output - target) ** 2))
    batch = output.shape[0] if output.ndim == 2 else 1
    return float(-np.sum(target * np.log(np.maximum(output, 1e-300))) / batch)


def output_delta(net, output, target, loss="mse"):
    """dL/dz for the final layer's pre-activation."""
    if loss == "cross_entropy":
        if net.layers[-1].activation != "softmax":
            raise LossActivationMismatch("cross_entropy requires a softmax output layer")
        batch = output.shape[0] if output.ndim == 2 else 1
        return (output - target) / batch
    if loss != "mse":
        raise ValueError(f"unknown loss {loss!r}")
    grad_out = 2.0 * (output - target) / output.size
    return activation_backward(net.layers[-1].activation, output, grad_out)


def backprop(net, activations, delta):
    """Propagate the output-layer delta back through ``net``.

    Returns the parameter gradients and dL/d(input), the latter so that a
    network can sit downstream of another one.
    """
    grads_w = [None] * len(net.layers)
    grads_b = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        a_in = activations[i]
        if delta.ndim == 2:
            grads_w[i] = delta.T @ a_in
            grads_b[i] = delta.sum(axis=0)
        else:
            grads_w[i] = np.outer(delta, a_in)
            grads_b[i] = delta.copy()
        grad_in = delta @ layer.weights
        if i > 0:
            delta = activation_backward(net.layers[i - 1].activation, a_in, grad_in)
    return Gradients(grads_w, grads_b), grad_in


def backward(net, activations, target, loss="mse"):
    """Loss and its gradients with respect to every weight and bias.

    ``mse`` averages the squared error over output dimensions (and over the
    batch when ``activations`` come from a batched forward pass).
    """
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}")
    if len(activations) != len(net.layers) + 1:
        raise DimensionMismatch("activations do not come from this network")
    output = activations[-1]
    target = np.asarray(target, dtype=float)
    if target.shape != output.shape:
        raise DimensionMismatch(f"target shape {target.shape} != output shape {output.shape}")
    delta = output_delta(net, output, target, loss)
    grads, _ = backprop(net, activations, delta)
    return loss_value(output, target, loss), grads


class SGD:
    def __init__(self, learning_rate):
        self.learning_rate = learning_rate

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.learning_rate * g


class Adam:
    """Adam with bias correction; keeps one moment pair per parameter array."""

    def __init__(self, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(config):
    if config.optimizer == "sgd":
        return SGD(config.learning_rate)
    return Adam(config.learning_rate, config.beta1, config.beta2, config.eps)


def _as_targets(targets, out_dim):
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    if targets.shape[1] != out_dim:
        raise DimensionMismatch(f"targets have width {targets.shape[1]}, network outputs {out_dim}")
    return targets


def train(net, windows, config):
    """Minibatch training on ``windows.inputs -> windows.targets``.

    Works on a copy of ``net``. Sample order is reshuffled every epoch from a
    generator seeded by ``config.seed``. The returned history holds the loss
    over the full training set after each epoch.
    """
    inputs = np.asarray(windows.inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != net.input_dim:
        raise DimensionMismatch(
            f"window width {inputs.shape[-1]} does not match network input {net.input_dim}"
        )
    if len(inputs) == 0:
        raise DimensionMismatch("no training samples")
    targets = _as_targets(windows.targets, net.output_dim)
    if config.loss == "cross_entropy" and net.layers[-1].activation != "softmax":
        raise LossActivationMismatch("cross_entropy requires a softmax output layer")
    net = net.copy()
    params = net.parameters()
    optimizer = make_optimizer(config)
    rng = make_rng(config.seed, "train_shuffle")
    n = len(inputs)
    history = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            acts = forward(net, inputs[idx])
            loss, grads = backward(net, acts, targets[idx], config.loss)
            if not np.isfinite(loss):
                raise DivergedLoss("non-finite loss during training")
            optimizer.step(params, grads.as_list())
        epoch_loss = loss_value(predict(net, inputs), targets, config.loss)
        if not np.isfinite(epoch_loss):
            raise DivergedLoss("non-finite loss during training")
        history.append(epoch_loss)
    return net, history


def extract_features(extractor, window):
    """Final-layer activation of the feature extractor."""
    return forward(extractor, window)[-1]

