"""Permutation-invariant point encoder and the two-layer projection head.

The encoder applies a shared per-point MLP (linear + ReLU stacks) and
max-pools over the point axis into a single global feature. The projector
maps that feature into the embedding space used by the losses; there is no
output normalization, standardization happens batch-wise in the loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .errors import ConfigError
from .geometry import PointCloud


@dataclass(frozen=True)
class EncoderConfig:
    point_mlp_widths: tuple[int, ...] = (3, 32, 64, 64)
    feature_dim: int = 64
    projector_hidden: int = 64
    embed_dim: int = 16

    def __post_init__(self):
        if any(w < 1 for w in self.point_mlp_widths):
            raise ConfigError("all MLP widths must be >= 1")
        if self.point_mlp_widths[0] != 3:
            raise ConfigError("per-point MLP must start at width 3 (x, y, z)")
        if self.point_mlp_widths[-1] != self.feature_dim:
            raise ConfigError("last MLP width must equal feature_dim")
        if self.projector_hidden < 1:
            raise ConfigError("projector_hidden must be >= 1")
        if self.embed_dim < 2:
            raise ConfigError("embed_dim must be >= 2 for moment losses")

    def layer_shapes(self) -> list[tuple[str, int, int]]:
        shapes = []
        widths = self.point_mlp_widths
        for i in range(len(widths) - 1):
            shapes.append((f"encoder.layer{i}", widths[i], widths[i + 1]))
        shapes.append(("projector.layer0", self.feature_dim, self.projector_hidden))
        shapes.append(("projector.layer1", self.projector_hidden, self.embed_dim))
        return shapes


ModelParams = dict[str, Node]


def init_params(config: EncoderConfig, rng: np.random.Generator) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    params: ModelParams = {}
    for name, fan_in, fan_out in config.layer_shapes():
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"{name}.w"] = ad.variable(rng.uniform(-limit, limit, (fan_in, fan_out)))
        params[f"{name}.b"] = ad.variable(np.zeros(fan_out))
    return params


def encoder_layer_count(params: ModelParams) -> int:
    i = 0
    while f"encoder.layer{i}.w" in params:
        i += 1
    return i


def feature_dim_of(params: ModelParams) -> int:
    last = encoder_layer_count(params) - 1
    return params[f"encoder.layer{last}.w"].value.shape[1]


def embed_dim_of(params: ModelParams) -> int:
    return params["projector.layer1.w"].value.shape[1]


def encode_batch_node(params: ModelParams, batch_points: np.ndarray) -> Node:
    """Differentiable encoder over a (B, N, 3) stack of same-size clouds."""
    b, n, _ = batch_points.shape
    x = ad.constant(batch_points.reshape(b * n, 3))
    for i in range(encoder_layer_count(params)):
        x = ad.matmul(x, params[f"encoder.layer{i}.w"])
        x = ad.add(x, params[f"encoder.layer{i}.b"])
        x = ad.relu(x)
    per_point = ad.reshape(x, (b, n, feature_dim_of(params)))
    return ad.max_over_axis(per_point, axis=1)


def project_node(params: ModelParams, feats: Node) -> Node:
    """Differentiable projector: linear, ReLU, linear."""
    x = ad.matmul(feats, params["projector.layer0.w"])
    x = ad.add(x, params["projector.layer0.b"])
    x = ad.relu(x)
    x = ad.matmul(x, params["projector.layer1.w"])
    return ad.add(x, params["projector.layer1.b"])


def encode_batch_values(params: ModelParams, batch_points: np.ndarray) -> np.ndarray:
    """Inference-only batched encoder; bitwise-matches the graph path."""
    b, n, _ = batch_points.shape
    x = batch_points.reshape(b * n, 3)
    for i in range(encoder_layer_count(params)):
        x = x @ params[f"encoder.layer{i}.w"].value
        x = x + params[f"encoder.layer{i}.b"].value
        x = np.maximum(x, 0.0)
    return x.reshape(b, n, -1).max(axis=1)


def encoder_forward(params: ModelParams, pc: PointCloud) -> np.ndarray:
    """Inference-only encoder for one cloud."""
    return encode_batch_values(params, pc.points[None, :, :])[0]


def projector_forward(params: ModelParams, feat: np.ndarray) -> np.ndarray:
    """Inference-only projector for a (F,) feature or (B, F) batch."""
    x = feat @ params["projector.layer0.w"].value
    x = x + params["projector.layer0.b"].value
    x = np.maximum(x, 0.0)
    x = x @ params["projector.layer1.w"].value
    return x + params["projector.layer1.b"].value


def param_tensors(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: node.value for name, node in params.items()}


def load_param_values(params: ModelParams, tensors: dict[str, np.ndarray]) -> None:
    """Replace parameter values in place from a checkpoint tensor dict."""
    for name, node in params.items():
        if name not in tensors:
            raise KeyError(f"missing parameter {name!r} in checkpoint")
        arr = np.asarray(tensors[name], dtype=np.float64)
        if arr.shape != node.value.shape:
            raise ValueError(f"parameter {name!r} shape mismatch")
        node.value = arr.copy()
