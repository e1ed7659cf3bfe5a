"""
Finite feed-forward networks and their certified Lipschitz constants.

Data Structures:
- Layer: weight matrix, bias vector, activation
- FeedForwardNetwork: ordered layers, immutable after construction
- LipschitzBound: product of per-layer operator bounds × activation constants

Algorithms:
- Layered forward pass over single inputs or (n, d) batches
- Per-layer operator bound min(safe spectral, Frobenius); biases never enter
- Monte Carlo pair sampling for an empirical lower bound (soundness witness)
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError
from scipy.special import expit

from tailcert.config import ActivationConstants, get_settings
from tailcert.errors import DomainError, NetworkFormatError, ShapeError
from tailcert.fileio import atomic_write_text
from tailcert.numerics import (
    RngStream,
    as_matrix,
    as_vector,
    frobenius_norm,
    operator_norm_bound,
    safe_operator_norm,
)

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class Activation(str, Enum):
    RELU = "relu"
    LOGISTIC = "logistic"
    TANH = "tanh"
    IDENTITY = "identity"

    @property
    def lipschitz_constant(self) -> float:
        return {
            Activation.RELU: ActivationConstants.RELU,
            Activation.LOGISTIC: ActivationConstants.LOGISTIC,
            Activation.TANH: ActivationConstants.TANH,
            Activation.IDENTITY: ActivationConstants.IDENTITY,
        }[self]

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self is Activation.RELU:
            return np.maximum(x, 0.0)
        if self is Activation.LOGISTIC:
            return expit(x)
        if self is Activation.TANH:
            return np.tanh(x)
        return x


class BoundMethod(str, Enum):
    SPECTRAL = "spectral"
    FROBENIUS = "frobenius"
    MIN = "min"


@dataclass(frozen=True, eq=False)
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: Activation

    def __post_init__(self):
        weight = as_matrix(self.weight, "weight")
        bias = as_vector(self.bias, "bias")
        if bias.shape[0] != weight.shape[0]:
            raise ShapeError(f"bias has {bias.shape[0]} entries but weight has {weight.shape[0]} rows")
        weight.setflags(write=False)
        bias.setflags(write=False)
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "activation", Activation(self.activation))

    @property
    def rows(self) -> int:
        return self.weight.shape[0]

    @property
    def cols(self) -> int:
        return self.weight.shape[1]


@dataclass(frozen=True, eq=False)
class FeedForwardNetwork:
    """
    f̂(z) = h_L(... h_1(z)), h_l(z) = σ_l(W_l z + b_l).
    Finiteness (finite depth, finite entries, matching shapes) is checked here.
    """
    layers: Tuple[Layer, ...]
    input_dim: int = 0
    output_dim: int = 0

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ShapeError("a network needs at least one layer")
        input_dim = self.input_dim or layers[0].cols
        output_dim = self.output_dim or layers[-1].rows
        if layers[0].cols != input_dim:
            raise ShapeError(f"expected {input_dim} columns, got {layers[0].cols}", 0)
        for index in range(1, len(layers)):
            if layers[index].cols != layers[index - 1].rows:
                raise ShapeError(
                    f"expected {layers[index - 1].rows} columns, got {layers[index].cols}", index
                )
        if layers[-1].rows != output_dim:
            raise ShapeError(f"expected {output_dim} rows, got {layers[-1].rows}", len(layers) - 1)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "input_dim", input_dim)
        object.__setattr__(self, "output_dim", output_dim)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def widths(self) -> List[int]:
        return [self.input_dim] + [layer.rows for layer in self.layers]


@dataclass(frozen=True)
class LipschitzBound:
    value: float
    per_layer: Tuple[Tuple[float, float], ...] = field(default_factory=tuple)
    method: BoundMethod = BoundMethod.MIN

    def to_record(self) -> dict:
        return {
            "value": self.value,
            "method": self.method.value,
            "per_layer": [
                {"operator_bound": op, "activation_constant": act} for op, act in self.per_layer
            ],
        }


def forward(net: FeedForwardNetwork, z) -> np.ndarray:
    """Evaluate the network on one input (d,) or a batch (n, d)."""
    h = np.asarray(z, dtype=np.float64)
    if h.ndim not in (1, 2) or h.shape[-1] != net.input_dim:
        raise ShapeError(f"input has shape {h.shape}, network expects last dim {net.input_dim}", 0)
    for layer in net.layers:
        h = layer.activation.apply(h @ layer.weight.T + layer.bias)
    return h


def certified_lipschitz(
    net: FeedForwardNetwork, tol: Optional[float] = None, method: BoundMethod = BoundMethod.MIN
) -> LipschitzBound:
    """
    Sound upper bound on sup ||f̂(x) − f̂(y)|| / ||x − y||.

    Lipschitz constants multiply under composition, so the bound is the product
    over layers of act_l × (bound on ||W_l||).
    """
    tol = get_settings().spectral_tol if tol is None else tol
    method = BoundMethod(method)
    per_layer = []
    for layer in net.layers:
        if method is BoundMethod.FROBENIUS:
            operator_bound = frobenius_norm(layer.weight)
        elif method is BoundMethod.SPECTRAL:
            operator_bound = operator_norm_bound(layer.weight, tol)
        else:
            operator_bound = safe_operator_norm(layer.weight, tol)
        per_layer.append((operator_bound, layer.activation.lipschitz_constant))

    value = math.prod(op * act for op, act in per_layer)
    logger.debug(f"[STATS] certified Lipschitz {value:.6g} over {net.depth} layers ({method.value})")
    return LipschitzBound(value=value, per_layer=tuple(per_layer), method=method)


def empirical_lipschitz_lower_bound(
    net: FeedForwardNetwork,
    rng: RngStream,
    n_pairs: int,
    sampling_radius: float = 1.0,
    batch_size: int = 4096,
) -> float:
    """
    Largest observed ||f̂(x) − f̂(y)|| / ||x − y|| over random pairs.

    Pair panel: one axis-aligned perturbation per input coordinate (up to a
    quarter of the budget), then half local pairs (x, x + δ) with Gaussian δ of
    scale sampling_radius, half independent uniform pairs in the cube
    [−sampling_radius, sampling_radius]^d. Pairs with x == y are skipped.
    """
    if n_pairs < 1:
        raise DomainError("n_pairs must be at least 1")
    if sampling_radius <= 0:
        raise DomainError("sampling_radius must be positive")

    gen = rng.generator()
    d = net.input_dim
    r = sampling_radius
    n_axis = min(d, n_pairs // 4)
    n_local = (n_pairs - n_axis) // 2
    n_uniform = n_pairs - n_axis - n_local

    best = 0.0
    if n_axis:
        x = gen.uniform(-r, r, size=(n_axis, d))
        y = x + r * np.eye(d)[:n_axis]
        best = max(best, _max_ratio(net, x, y))

    for count, local in ((n_local, True), (n_uniform, False)):
        remaining = count
        while remaining > 0:
            size = min(batch_size, remaining)
            x = gen.uniform(-r, r, size=(size, d))
            if local:
                y = x + r * gen.standard_normal((size, d))
            else:
                y = gen.uniform(-r, r, size=(size, d))
            best = max(best, _max_ratio(net, x, y))
            remaining -= size
    return best


def _max_ratio(net: FeedForwardNetwork, x: np.ndarray, y: np.ndarray) -> float:
    gap = np.linalg.norm(y - x, axis=1)
    keep = gap > 0
    if not np.any(keep):
        return 0.0
    spread = np.linalg.norm(forward(net, y[keep]) - forward(net, x[keep]), axis=1)
    return float(np.max(spread / gap[keep]))


def random_network(
    rng: RngStream,
    widths: Sequence[int],
    activation: Activation = Activation.RELU,
    weight_scale: float = 1.0,
    output_activation: Optional[Activation] = None,
) -> FeedForwardNetwork:
    """
    Gaussian(0, weight_scale² / fan_in) weights, zero biases.
    output_activation defaults to the hidden activation.
    """
    widths = [int(w) for w in widths]
    if len(widths) < 2 or min(widths) < 1:
        raise DomainError(f"need at least two positive widths, got {widths}")
    if weight_scale < 0:
        raise DomainError("weight_scale must be nonnegative")

    activation = Activation(activation)
    last = activation if output_activation is None else Activation(output_activation)
    gen = rng.generator()
    layers = []
    for index, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        weight = gen.standard_normal((fan_out, fan_in)) * (weight_scale / math.sqrt(fan_in))
        act = last if index == len(widths) - 2 else activation
        layers.append(Layer(weight=weight, bias=np.zeros(fan_out), activation=act))
    return FeedForwardNetwork(layers=tuple(layers))


def concat(first: FeedForwardNetwork, second: FeedForwardNetwork) -> FeedForwardNetwork:
    """second ∘ first"""
    if first.output_dim != second.input_dim:
        raise ShapeError(
            f"cannot feed {first.output_dim} outputs into {second.input_dim} inputs", first.depth
        )
    return FeedForwardNetwork(layers=first.layers + second.layers)


def generator_widths(depth: int = 4, latent_dim: int = 64, output_dim: int = 2) -> List[int]:
    """
    Generator shapes of the sensitivity study: depth 4 is (d, 128, 256, p) and
    each extra layer is another width-256 hidden layer.
    """
    if depth < 4:
        raise DomainError(f"generator depth must be at least 4, got {depth}")
    return [latent_dim, 128, 256] + [256] * (depth - 4) + [output_dim]


def noise_net_widths(p: int, hidden: Sequence[int] = (128, 128)) -> List[int]:
    """Noise-prediction shape (p + 1, hidden..., p): state plus time coordinate in."""
    return [p + 1, *hidden, p]


# ---------------------------------------------------------------------------
# Network file format
# ---------------------------------------------------------------------------

class LayerRecord(BaseModel):
    rows: int = Field(gt=0)
    cols: int = Field(gt=0)
    weights: List[float]
    bias: List[float]
    activation: str


class NetworkRecord(BaseModel):
    format_version: int
    input_dim: int = Field(gt=0)
    output_dim: int = Field(gt=0)
    layers: List[LayerRecord] = Field(min_length=1)


def network_to_record(net: FeedForwardNetwork) -> dict:
    return NetworkRecord(
        format_version=FORMAT_VERSION,
        input_dim=net.input_dim,
        output_dim=net.output_dim,
        layers=[
            LayerRecord(
                rows=layer.rows,
                cols=layer.cols,
                weights=layer.weight.ravel().tolist(),
                bias=layer.bias.tolist(),
                activation=layer.activation.value,
            )
            for layer in net.layers
        ],
    ).model_dump()


def network_from_record(data: dict) -> FeedForwardNetwork:
    """Build a network from its parsed JSON record, enforcing every format rule."""
    try:
        record = NetworkRecord.model_validate(data)
    except ValidationError as e:
        raise _format_error(e)

    if record.format_version != FORMAT_VERSION:
        raise NetworkFormatError("format_version", f"unsupported version {record.format_version}")

    layers = []
    expected_cols = record.input_dim
    for index, item in enumerate(record.layers):
        if item.cols != expected_cols:
            raise NetworkFormatError("cols", f"expected {expected_cols}, got {item.cols}", index)
        if len(item.weights) != item.rows * item.cols:
            raise NetworkFormatError(
                "weights", f"expected {item.rows * item.cols} entries, got {len(item.weights)}", index
            )
        if len(item.bias) != item.rows:
            raise NetworkFormatError("bias", f"expected {item.rows} entries, got {len(item.bias)}", index)
        if not all(math.isfinite(v) for v in item.weights):
            raise NetworkFormatError("weights", "non-finite entry", index)
        if not all(math.isfinite(v) for v in item.bias):
            raise NetworkFormatError("bias", "non-finite entry", index)
        try:
            activation = Activation(item.activation)
        except ValueError:
            raise NetworkFormatError("activation", f"unknown activation {item.activation!r}", index)

        weight = np.array(item.weights, dtype=np.float64).reshape(item.rows, item.cols)
        layers.append(Layer(weight=weight, bias=np.array(item.bias, dtype=np.float64), activation=activation))
        expected_cols = item.rows

    if expected_cols != record.output_dim:
        raise NetworkFormatError(
            "rows", f"last layer has {expected_cols} rows, output_dim is {record.output_dim}",
            len(record.layers) - 1,
        )
    return FeedForwardNetwork(layers=tuple(layers), input_dim=record.input_dim, output_dim=record.output_dim)


def _format_error(error: ValidationError) -> NetworkFormatError:
    first = error.errors()[0]
    loc = list(first["loc"])
    if len(loc) >= 3 and loc[0] == "layers" and isinstance(loc[1], int):
        return NetworkFormatError(str(loc[2]), first["msg"], loc[1])
    return NetworkFormatError(".".join(str(part) for part in loc) or "network", first["msg"])


def load_network(path: Union[str, Path]) -> FeedForwardNetwork:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise NetworkFormatError("network", f"{path} is not valid JSON: {e}")
    net = network_from_record(data)
    logger.info(f"[OK] Loaded network {path.name}: widths {net.widths}")
    return net


def save_network(net: FeedForwardNetwork, path: Union[str, Path]) -> None:
    atomic_write_text(Path(path), json.dumps(network_to_record(net), indent=2))
