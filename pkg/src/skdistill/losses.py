"""Training objectives: kernel-space feature loss, contrastive output loss,
L1 reconstruction, and their weighted total.

The contrastive term is evaluated in the log domain (log-sum-exp over
cosine/tau logits), which is algebraically identical to the ratio form but
stays finite for arbitrarily small temperatures.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .attention import FeatureMap, LambdaPolicy
from .errors import ConfigError, DegenerateFeatureError, NonFiniteError, RangeError, ShapeError
from .seeding import rng_for
from .tensor import Tensor

GK_MODES = ("raw", "per-element-mean")


@dataclass
class LossWeights:
    """Every scalar knob of the distillation objective."""

    alpha1: float = 0.5
    alpha2: float = 0.2
    alpha3: float = 0.2
    sigma: float = 1.0
    tau: float = 1e-6
    gk_mode: str = "per-element-mean"
    lambda_kind: str = "sqrt_dim"
    lambda_value: float | None = None
    spatial_axis: str = "columns"

    def __post_init__(self):
        if min(self.alpha1, self.alpha2, self.alpha3) < 0:
            raise ConfigError("loss weights must be nonnegative")
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.gk_mode not in GK_MODES:
            raise ConfigError(f"gk_mode must be one of {GK_MODES}, got {self.gk_mode!r}")
        if self.spatial_axis not in ("columns", "rows"):
            raise ConfigError(f"spatial_axis must be 'columns' or 'rows', got {self.spatial_axis!r}")

    def lambda_policy(self) -> LambdaPolicy:
        return LambdaPolicy(self.lambda_kind, self.lambda_value)


def gaussian_kernel_distance(x, y, sigma: float = 1.0,
                             mode: str = "per-element-mean") -> Tensor:
    """1 - exp(-d2 / (2 sigma^2)) with d2 the squared L2 distance; in
    per-element-mean mode d2 is divided by the element count first."""
    x, y = T.as_tensor(x), T.as_tensor(y)
    if x.shape != y.shape:
        raise ShapeError(f"kernel distance needs matching shapes, got {x.shape} and {y.shape}")
    if sigma <= 0:
        raise RangeError(f"sigma must be positive, got {sigma}")
    if mode not in GK_MODES:
        raise ConfigError(f"unknown gk mode {mode!r}")
    diff = T.sub(x, y)
    d2 = T.sum_(T.mul(diff, diff))
    if mode == "per-element-mean":
        d2 = T.mul(d2, 1.0 / x.size)
    return T.sub(1.0, T.exp(T.mul(d2, -1.0 / (2.0 * sigma * sigma))))


def gk_block_loss(s_f: FeatureMap, s_fc: FeatureMap, s_ft: FeatureMap,
                  t_f: FeatureMap, w: LossWeights) -> Tensor:
    """Kernel loss for one distilled block: direct term plus the two
    attention-mixed terms scaled by alpha1."""
    gk = lambda a, b: gaussian_kernel_distance(a.values, b.values, w.sigma, w.gk_mode)
    mixed = T.add(gk(s_fc, t_f), gk(s_ft, t_f))
    return T.add(gk(s_f, t_f), T.mul(mixed, w.alpha1))


def gk_feature_loss(s_f: Sequence[FeatureMap], s_fc: Sequence[FeatureMap],
                    s_ft: Sequence[FeatureMap], t_f: Sequence[FeatureMap],
                    w: LossWeights) -> Tensor:
    """Sum of per-block kernel losses over all distilled blocks."""
    lengths = {len(s_f), len(s_fc), len(s_ft), len(t_f)}
    if len(lengths) != 1:
        raise ConfigError(
            f"feature list lengths differ: s_f={len(s_f)} s_fc={len(s_fc)} "
            f"s_ft={len(s_ft)} t_f={len(t_f)}")
    if not s_f:
        raise ConfigError("gk_feature_loss needs at least one block")
    total = gk_block_loss(s_f[0], s_fc[0], s_ft[0], t_f[0], w)
    for i in range(1, len(s_f)):
        total = T.add(total, gk_block_loss(s_f[i], s_fc[i], s_ft[i], t_f[i], w))
    return total


class PhiExtractor:
    """Frozen seeded conv stack standing in for a pretrained feature net.

    Three stride-2 stages (widths 8, 16, 32) with a smooth nonlinearity;
    weights are deterministic in the seed and never receive gradients.
    """

    widths = (8, 16, 32)

    def __init__(self, in_channels: int = 1, seed: int = 0):
        rng = rng_for(seed, "phi")
        self.in_channels = in_channels
        self.stages = []
        c_prev = in_channels
        for c_out in self.widths:
            scale = 1.0 / np.sqrt(9.0 * c_prev)
            w = Tensor(rng.normal(scale=scale, size=(c_out, c_prev, 3, 3)))
            b = Tensor(np.zeros(c_out))
            self.stages.append((w, b))
            c_prev = c_out

    def __call__(self, image: Tensor) -> Tensor:
        if image.ndim != 3 or image.shape[0] != self.in_channels:
            raise ShapeError(
                f"phi expects ({self.in_channels},H,W), got shape {image.shape}")
        h = image
        for w, b in self.stages:
            h = T.gelu(T.conv2d(h, w, b, stride=2))
        return T.reshape(h, (h.size,))


def cosine_similarity(u: Tensor, v: Tensor) -> Tensor:
    """u.v / (|u||v|); raises if either vector has zero norm."""
    if u.shape != v.shape:
        raise ShapeError(f"cosine needs matching shapes, got {u.shape} and {v.shape}")
    nu = T.sqrt(T.sum_(T.mul(u, u)))
    nv = T.sqrt(T.sum_(T.mul(v, v)))
    if float(nu.data) == 0.0 or float(nv.data) == 0.0:
        raise DegenerateFeatureError("zero-norm feature vector in cosine similarity")
    return T.div(T.sum_(T.mul(u, v)), T.mul(nu, nv))


def nce_loss_from_logits(positive: Tensor, negatives: Sequence[Tensor]) -> Tensor:
    """-log of positive's share of the softmax mass over [positive, *negatives],
    computed as logsumexp(all) - positive."""
    if not negatives:
        raise ConfigError("contrastive loss needs at least one negative")
    logits = T.concat([T.reshape(l, (1,)) for l in (positive, *negatives)])
    shift = float(np.max(logits.data))
    lse = T.add(T.log(T.sum_(T.exp(T.sub(logits, shift)))), shift)
    return T.sub(lse, positive)


def contrastive_loss_from_features(anchor: Tensor, positive: Tensor,
                                   negative_feats: Sequence[Tensor],
                                   tau: float) -> Tensor:
    """Contrastive objective on already-extracted feature vectors."""
    if tau <= 0:
        raise RangeError(f"tau must be positive, got {tau}")
    if not negative_feats:
        raise ConfigError("contrastive loss needs at least one negative")
    inv_tau = 1.0 / tau
    l_pos = T.mul(cosine_similarity(anchor, positive), inv_tau)
    l_neg = [T.mul(cosine_similarity(anchor, feat), inv_tau) for feat in negative_feats]
    return nce_loss_from_logits(l_pos, l_neg)


def contrastive_loss(s_r: Tensor, t_r: Tensor, negatives: Sequence[Tensor],
                     phi: PhiExtractor, tau: float) -> Tensor:
    """Pull the anchor restoration toward the reference output and away from
    the degraded inputs; gradient flows to `s_r` only."""
    if not negatives:
        raise ConfigError("contrastive loss needs at least one negative")
    return contrastive_loss_from_features(
        phi(s_r), phi(t_r.detach()), [phi(img.detach()) for img in negatives], tau)


def reconstruction_loss(s_r: Tensor, g: Tensor) -> Tensor:
    """Mean absolute error over all elements."""
    s_r, g = T.as_tensor(s_r), T.as_tensor(g)
    if s_r.shape != g.shape:
        raise ShapeError(f"reconstruction needs matching shapes, got {s_r.shape} and {g.shape}")
    return T.mean(T.abs_(T.sub(g, s_r)))


def total_loss(l_rec, l_gk, l_cl, w: LossWeights) -> Tensor:
    """l_rec + alpha2 * l_gk + alpha3 * l_cl."""
    parts = [T.as_tensor(v) for v in (l_rec, l_gk, l_cl)]
    for name, part in zip(("l_rec", "l_gk", "l_cl"), parts):
        if not np.all(np.isfinite(part.data)):
            raise NonFiniteError(f"total_loss received non-finite {name}")
    return T.add(parts[0], T.add(T.mul(parts[1], w.alpha2), T.mul(parts[2], w.alpha3)))
