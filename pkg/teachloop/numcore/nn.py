"""Multilayer perceptrons built on :mod:`teachloop.numcore.tensor`."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ErrorCode, TeachLoopError
from .tensor import Tensor, as_tensor, linear, relu, tanh

ACTIVATIONS = {"tanh": tanh, "relu": relu}


@dataclass
class Mlp:
    """Fully connected network with identity output.

    Layer ``i`` maps ``layer_dims[i]`` to ``layer_dims[i + 1]``; its weight has
    shape ``(layer_dims[i + 1], layer_dims[i])``.
    """

    layer_dims: list[int]
    activation: str = "tanh"
    weights: list[Tensor] = field(default_factory=list)
    biases: list[Tensor] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.layer_dims) < 2 or any(int(d) < 1 for d in self.layer_dims):
            raise TeachLoopError(
                ErrorCode.DIMENSION_ERROR,
                f"Invalid layer dims {self.layer_dims}; need at least input and output sizes >= 1.",
            )
        if self.activation not in ACTIVATIONS:
            raise TeachLoopError(
                ErrorCode.CONTRACT_ERROR,
                f"Unknown activation '{self.activation}'. Expected one of tanh|relu.",
            )
        if not self.weights:
            self.weights = [
                Tensor(np.zeros((out_dim, in_dim)), requires_grad=True, name=f"w{i}")
                for i, (in_dim, out_dim) in enumerate(zip(self.layer_dims[:-1], self.layer_dims[1:]))
            ]
            self.biases = [
                Tensor(np.zeros(out_dim), requires_grad=True, name=f"b{i}")
                for i, out_dim in enumerate(self.layer_dims[1:])
            ]

    @property
    def input_dim(self) -> int:
        return int(self.layer_dims[0])

    @property
    def output_dim(self) -> int:
        return int(self.layer_dims[-1])

    def parameters(self) -> list[Tensor]:
        params: list[Tensor] = []
        for weight, bias in zip(self.weights, self.biases):
            params.extend([weight, bias])
        return params

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        named: dict[str, Tensor] = {}
        for i, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            named[f"{prefix}w{i}"] = weight
            named[f"{prefix}b{i}"] = bias
        return named

    def copy_from(self, other: "Mlp") -> None:
        if list(other.layer_dims) != list(self.layer_dims):
            raise TeachLoopError(
                ErrorCode.DIMENSION_ERROR,
                f"Cannot copy network {other.layer_dims} into {self.layer_dims}.",
            )
        for mine, theirs in zip(self.parameters(), other.parameters()):
            mine.data = theirs.data.copy()


def init_mlp(
    layer_dims: list[int],
    rng: np.random.Generator,
    activation: str = "tanh",
    output_scale: float = 1.0,
) -> Mlp:
    """Xavier-uniform weights, zero biases; the last layer is scaled by ``output_scale``."""

    net = Mlp(layer_dims=list(int(d) for d in layer_dims), activation=activation)
    last = len(net.weights) - 1
    for i, weight in enumerate(net.weights):
        out_dim, in_dim = weight.shape
        bound = float(np.sqrt(6.0 / (in_dim + out_dim)))
        values = rng.uniform(-bound, bound, size=(out_dim, in_dim))
        if i == last:
            values = values * output_scale
        weight.data = values
    return net


def forward(net: Mlp, inputs, frozen: bool = False) -> Tensor:
    """Evaluate ``net`` on a vector or a batch of row vectors.

    With ``frozen=True`` the weights act as constants: gradients still reach
    ``inputs`` but never the network's own parameters.
    """

    x = as_tensor(inputs)
    if x.data.ndim == 0 or x.shape[-1] != net.input_dim:
        raise TeachLoopError(
            ErrorCode.DIMENSION_ERROR,
            f"Network expects input size {net.input_dim}, got shape {x.shape}.",
        )
    act = ACTIVATIONS[net.activation]
    last = len(net.weights) - 1
    for i, (weight, bias) in enumerate(zip(net.weights, net.biases)):
        if frozen:
            weight, bias = weight.detach(), bias.detach()
        x = linear(x, weight, bias)
        if i < last:
            x = act(x)
    return x
