"""Cross-net attention between teacher and student block features.

Teacher and student features are first projected into a shared channel
width, then mixed along two axes: a channel interaction built from the
C x C similarity of projected maps, and a spatial interaction built from
the N x N similarity of flattened pixel columns. Both return maps shaped
like the student feature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor


@dataclass
class FeatureMap:
    """A (C, H, W) activation plus its flattened (C, H*W) matrix view."""

    values: Tensor

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ShapeError(f"FeatureMap expects (C,H,W), got shape {self.values.shape}")
        if min(self.values.shape) < 1:
            raise ShapeError(f"FeatureMap extents must be >= 1, got {self.values.shape}")

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def pixels(self) -> int:
        return self.height * self.width

    def matrix(self) -> Tensor:
        """Row-major (C, N) view; a reshape, never a reordering copy."""
        return T.reshape(self.values, (self.channels, self.pixels))


@dataclass
class LambdaPolicy:
    """Temperature for attention logits: sqrt of the contraction dimension
    of the logit product, or a fixed constant override."""

    kind: str = "sqrt_dim"
    value: float | None = None

    def __post_init__(self):
        if self.kind not in ("sqrt_dim", "constant"):
            raise ConfigError(f"unknown lambda policy kind {self.kind!r}")
        if self.kind == "constant" and (self.value is None or self.value <= 0):
            raise ConfigError("constant lambda policy needs a positive value")

    def resolve(self, contraction_dim: int) -> float:
        if self.kind == "constant":
            return float(self.value)
        return math.sqrt(contraction_dim)


@dataclass
class Projector:
    """Per-block 1x1 channel map aligning a feature into the shared width."""

    weight: Tensor  # (d_u, c_src)
    bias: Tensor    # (d_u,)
    trainable: bool = True

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    def params(self) -> list[Tensor]:
        return [self.weight, self.bias]


def make_projector(c_src: int, d_u: int, rng: np.random.Generator,
                   trainable: bool = True) -> Projector:
    scale = 1.0 / math.sqrt(c_src)
    weight = Tensor(rng.normal(scale=scale, size=(d_u, c_src)), requires_grad=trainable)
    bias = Tensor(np.zeros(d_u), requires_grad=trainable)
    return Projector(weight, bias, trainable)


def project(p: Projector, f: FeatureMap) -> FeatureMap:
    """Linear per-pixel channel map plus bias.

    Frozen-teacher handling lives in the caller: teacher features are
    detached before being passed here, so only the projector itself (and,
    on the student path, the upstream network) receives gradients.
    """
    if p.in_channels != f.channels:
        raise ShapeError(
            f"projector expects {p.in_channels} channels, feature has {f.channels}")
    m = T.linear(p.weight, f.matrix(), p.bias)
    return FeatureMap(T.reshape(m, (p.out_channels, f.height, f.width)))


def _check_pair(t: FeatureMap, s: FeatureMap) -> None:
    if t.values.shape != s.values.shape:
        raise ShapeError(
            f"cross attention needs matching shapes, got {t.values.shape} and {s.values.shape}")


def channel_attention_matrix(t: FeatureMap, s: FeatureMap,
                             policy: LambdaPolicy = LambdaPolicy()) -> Tensor:
    """(C, C) row-stochastic attention from teacher channels over student channels."""
    _check_pair(t, s)
    lam = policy.resolve(t.pixels)
    logits = T.mul(T.matmul(t.matrix(), T.transpose(s.matrix())), 1.0 / lam)
    return T.softmax_rows(logits)


def channel_cross_attention(t: FeatureMap, s: FeatureMap,
                            policy: LambdaPolicy = LambdaPolicy()) -> FeatureMap:
    a = channel_attention_matrix(t, s, policy)
    out = T.matmul(a, s.matrix())
    return FeatureMap(T.reshape(out, s.values.shape))


def spatial_attention_matrix(t: FeatureMap, s: FeatureMap,
                             policy: LambdaPolicy = LambdaPolicy(),
                             softmax_axis: str = "columns") -> Tensor:
    """(N, N) attention over pixel positions, normalized along `softmax_axis`.

    Column normalization (the default) makes each output column of S @ B a
    convex combination of student pixel columns, mirroring the channel case.
    """
    _check_pair(t, s)
    if softmax_axis not in ("columns", "rows"):
        raise ConfigError(f"softmax_axis must be 'columns' or 'rows', got {softmax_axis!r}")
    lam = policy.resolve(t.channels)
    # scale the (C, N) operand rather than the (N, N) logits: same math,
    # one full pass over the big matrix saved in each direction
    scaled = T.mul(t.matrix(), 1.0 / lam)
    logits = T.matmul(T.transpose(scaled), s.matrix())
    if softmax_axis == "columns":
        return T.softmax_cols(logits)
    return T.softmax_rows(logits)


def spatial_cross_attention(t: FeatureMap, s: FeatureMap,
                            policy: LambdaPolicy = LambdaPolicy(),
                            softmax_axis: str = "columns") -> FeatureMap:
    b = spatial_attention_matrix(t, s, policy, softmax_axis)
    out = T.matmul(s.matrix(), b)
    return FeatureMap(T.reshape(out, s.values.shape))


def cross_net_features(t_raw: FeatureMap, s_raw: FeatureMap,
                       p_t: Projector, p_s: Projector,
                       policy: LambdaPolicy = LambdaPolicy(),
                       softmax_axis: str = "columns"
                       ) -> tuple[FeatureMap, FeatureMap, FeatureMap, FeatureMap]:
    """Project a raw teacher/student pair and run both interactions.

    Returns (s_f, s_fc, s_ft, t_f). The raw teacher map is detached first,
    so the teacher network stays frozen while its projector still trains.
    """
    if p_t.out_channels != p_s.out_channels:
        raise ConfigError(
            f"projector widths differ: teacher {p_t.out_channels}, student {p_s.out_channels}")
    t_f = project(p_t, FeatureMap(t_raw.values.detach()))
    s_f = project(p_s, s_raw)
    s_fc = channel_cross_attention(t_f, s_f, policy)
    s_ft = spatial_cross_attention(t_f, s_f, policy, softmax_axis)
    return s_f, s_fc, s_ft, t_f
