"""Network data model and forward propagation.

A network is a stack of fully connected layers.  Each neuron computes
``f(w . x + b)`` where ``f`` is tanh (hidden layers, and by default the output
layer) or the identity.  All arithmetic is float64.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from flightbp.errors import DimensionMismatch, InvalidArchitecture


class ActivationKind(str, enum.Enum):
    TANH = "tanh"
    IDENTITY = "identity"

    @classmethod
    def parse(cls, value: "str | ActivationKind") -> "ActivationKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown activation {value!r} (expected one of: {names})") from None


def activate(kind: ActivationKind, z):
    """Apply the activation to a scalar or array of pre-activations."""
    if kind is ActivationKind.TANH:
        return np.tanh(z)
    if kind is ActivationKind.IDENTITY:
        return z
    raise ValueError(f"unsupported activation {kind!r}")


def activate_derivative(kind: ActivationKind, z):
    """Derivative of the activation evaluated at the pre-activation ``z``."""
    if kind is ActivationKind.TANH:
        t = np.tanh(z)
        return 1.0 - t * t
    if kind is ActivationKind.IDENTITY:
        if np.ndim(z) == 0:
            return 1.0
        return np.ones_like(z, dtype=np.float64)
    raise ValueError(f"unsupported activation {kind!r}")


def _frozen(values, ndim: int, what: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{what} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LayerParams:
    """Weights (n_out x n_in), biases (n_out,) and the layer's activation.

    Arrays are copied to float64 and made read-only on construction.
    """

    weights: np.ndarray
    biases: np.ndarray
    activation: ActivationKind = ActivationKind.TANH

    def __post_init__(self):
        weights = _frozen(self.weights, 2, "weights")
        biases = _frozen(self.biases, 1, "biases")
        if weights.shape[0] != biases.shape[0]:
            raise DimensionMismatch(
                f"weights have {weights.shape[0]} rows but biases have length {biases.shape[0]}"
            )
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)
        object.__setattr__(self, "activation", ActivationKind.parse(self.activation))

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def equals(self, other: "LayerParams") -> bool:
        """Bit-exact equality of parameters and activation."""
        return (
            self.activation is other.activation
            and self.weights.shape == other.weights.shape
            and self.weights.tobytes() == other.weights.tobytes()
            and self.biases.tobytes() == other.biases.tobytes()
        )


@dataclass(frozen=True, eq=False)
class NetworkParams:
    layers: tuple[LayerParams, ...]
    input_dim: int

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if len(layers) < 2:
            raise InvalidArchitecture(
                f"a network needs at least one hidden layer plus an output layer, got {len(layers)} layer(s)"
            )
        if self.input_dim < 1:
            raise InvalidArchitecture(f"input_dim must be positive, got {self.input_dim}")
        width = self.input_dim
        for k, layer in enumerate(layers):
            if layer.n_in != width:
                raise DimensionMismatch(f"layer {k} expects {layer.n_in} inputs but receives {width}")
            width = layer.n_out

    @property
    def dims(self) -> list[int]:
        return [self.input_dim] + [layer.n_out for layer in self.layers]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].n_out

    @property
    def n_params(self) -> int:
        return sum(layer.weights.size + layer.biases.size for layer in self.layers)

    def equals(self, other: "NetworkParams") -> bool:
        return (
            self.input_dim == other.input_dim
            and len(self.layers) == len(other.layers)
            and all(a.equals(b) for a, b in zip(self.layers, other.layers))
        )


@dataclass(frozen=True, eq=False)
class ForwardTrace:
    """Per-layer pre-activations and activations from one forward pass."""

    input: np.ndarray
    pre_activations: tuple[np.ndarray, ...]
    activations: tuple[np.ndarray, ...]

    @property
    def output(self) -> np.ndarray:
        return self.activations[-1]


def layer_forward(layer: LayerParams, x) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (layer.n_in,):
        raise DimensionMismatch(f"layer expects input of length {layer.n_in}, got shape {x.shape}")
    z = layer.weights @ x + layer.biases
    return z, activate(layer.activation, z)


def network_forward(net: NetworkParams, x) -> ForwardTrace:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise DimensionMismatch(f"network expects input of length {net.input_dim}, got shape {x.shape}")
    pre, act = [], []
    a = x
    for layer in net.layers:
        z, a = layer_forward(layer, a)
        pre.append(z)
        act.append(a)
    return ForwardTrace(input=x, pre_activations=tuple(pre), activations=tuple(act))


def predict(net: NetworkParams, x) -> np.ndarray:
    """Output vector of the network for one input (no trace kept)."""
    return network_forward(net, x).output


def init_network(
    layer_dims: Sequence[int],
    hidden_activation: ActivationKind = ActivationKind.TANH,
    output_activation: ActivationKind = ActivationKind.TANH,
    seed: int = 0,
) -> NetworkParams:
    """Seeded network with weights ~ U[-1/sqrt(fan_in), +1/sqrt(fan_in)] and zero biases.

    ``layer_dims`` lists the input width, one or more hidden widths and the
    output width.
    """
    dims = list(layer_dims)
    if len(dims) < 3:
        raise InvalidArchitecture(
            f"layer_dims needs input, at least one hidden and an output width, got {dims}"
        )
    if any(int(d) != d or d < 1 for d in dims):
        raise InvalidArchitecture(f"layer widths must be positive integers, got {dims}")
    dims = [int(d) for d in dims]
    hidden_activation = ActivationKind.parse(hidden_activation)
    output_activation = ActivationKind.parse(output_activation)

    rng = np.random.default_rng(seed)
    layers = []
    for k, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
        limit = 1.0 / np.sqrt(n_in)
        w = rng.uniform(-limit, limit, size=(n_out, n_in))
        kind = output_activation if k == len(dims) - 2 else hidden_activation
        layers.append(LayerParams(w, np.zeros(n_out), kind))
    return NetworkParams(tuple(layers), dims[0])
