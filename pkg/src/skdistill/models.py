"""Toy encoder-decoder restoration networks with per-level feature taps.

Structure: a U-shaped net with len(level_layers) levels; channels double at
every encoder level and halve back up the decoder. Each level is a dense
group: block j fuses the level input plus all previous block outputs with a
1x1 map, then applies layer-normalized channel self-attention and a
pointwise feed-forward (expansion 2), both residual. Downsampling is a
depthwise-separable strided 3x3; upsampling is nearest-neighbor + depthwise
3x3, with the encoder skip concatenated and fused back by a 1x1 map. The
final 3x3 projection is zero-initialized so a fresh net is the identity
(global residual).

`count_params_flops` walks the same layout arithmetically and must agree
exactly with an instrumented forward trace (1 MAC = 2 FLOPs; only matmuls
and convolutions count).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .attention import FeatureMap
from .errors import ConfigError, ShapeError
from .seeding import rng_for
from .tensor import Tensor

LN_EPS = 1e-5
FFN_EXPANSION = 2


@dataclass
class ModelConfig:
    """Per-level block counts plus channel widths."""

    level_layers: list[int] = field(default_factory=lambda: [1, 1])
    base_channels: int = 8
    unified_dim: int = 8
    input_channels: int = 1

    def __post_init__(self):
        if not self.level_layers:
            raise ConfigError("level_layers must be non-empty")
        if any(int(n) < 1 for n in self.level_layers):
            raise ConfigError(f"all level layer counts must be >= 1, got {self.level_layers}")
        self.level_layers = [int(n) for n in self.level_layers]
        if self.base_channels < 1 or self.unified_dim < 1:
            raise ConfigError("channel widths must be >= 1")
        if self.input_channels not in (1, 3):
            raise ConfigError(f"input_channels must be 1 or 3, got {self.input_channels}")

    @property
    def levels(self) -> int:
        return len(self.level_layers)

    def channels_at(self, level: int) -> int:
        """Width of 1-based level: doubles per encoder level."""
        return self.base_channels * (2 ** (level - 1))

    @property
    def spatial_divisor(self) -> int:
        return 2 ** (self.levels - 1)

    def to_dict(self) -> dict:
        return {
            "level_layers": list(self.level_layers),
            "base_channels": self.base_channels,
            "unified_dim": self.unified_dim,
            "input_channels": self.input_channels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        unknown = set(d) - {"level_layers", "base_channels", "unified_dim", "input_channels"}
        if unknown:
            raise ConfigError(f"unknown ModelConfig fields: {sorted(unknown)}")
        return cls(**d)


def compress_config(teacher: ModelConfig, layer_scale: list[int],
                    channels: int) -> ModelConfig:
    """Student config with reduced per-level depths and base width."""
    if len(layer_scale) != teacher.levels:
        raise ConfigError(
            f"layer_scale has {len(layer_scale)} entries, teacher has {teacher.levels} levels")
    for got, limit in zip(layer_scale, teacher.level_layers):
        if got > limit:
            raise ConfigError(f"student layers {layer_scale} exceed teacher {teacher.level_layers}")
    if channels > teacher.base_channels:
        raise ConfigError(
            f"student base channels {channels} exceed teacher {teacher.base_channels}")
    return ModelConfig(level_layers=list(layer_scale), base_channels=channels,
                       unified_dim=teacher.unified_dim,
                       input_channels=teacher.input_channels)


class RestorationNet:
    """Parameter container plus the forward pass described above."""

    def __init__(self, cfg: ModelConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        self._params: dict[str, Tensor] = {}
        rng = rng_for(seed, "net-init")
        c1 = cfg.base_channels
        self._add_conv3x3(rng, "embed", cfg.input_channels, c1)
        for level in range(1, cfg.levels):
            c = cfg.channels_at(level)
            self._add_group(rng, f"enc{level}", cfg.level_layers[level - 1], c)
            self._add_dw3x3(rng, f"down{level}.dw", c)
            self._add_pw(rng, f"down{level}.pw", c, 2 * c)
        self._add_group(rng, "lat", cfg.level_layers[-1], cfg.channels_at(cfg.levels))
        for level in range(cfg.levels - 1, 0, -1):
            c = cfg.channels_at(level)
            self._add_dw3x3(rng, f"up{level}.dw", 2 * c)
            self._add_pw(rng, f"up{level}.fuse", 3 * c, c)
            self._add_group(rng, f"dec{level}", cfg.level_layers[level - 1], c)
        self._add_conv3x3(rng, "final", c1, cfg.input_channels, zero=True)

    # -- parameter construction -------------------------------------------

    def _add(self, name: str, value: np.ndarray) -> None:
        self._params[name] = Tensor(value, requires_grad=True)

    def _add_conv3x3(self, rng, name: str, c_in: int, c_out: int, zero: bool = False) -> None:
        if zero:
            w = np.zeros((c_out, c_in, 3, 3))
        else:
            w = rng.normal(scale=1.0 / math.sqrt(9.0 * c_in), size=(c_out, c_in, 3, 3))
        self._add(f"{name}.w", w)
        self._add(f"{name}.b", np.zeros(c_out))

    def _add_dw3x3(self, rng, name: str, c: int) -> None:
        self._add(f"{name}.w", rng.normal(scale=1.0 / 3.0, size=(c, 3, 3)))
        self._add(f"{name}.b", np.zeros(c))

    def _add_pw(self, rng, name: str, c_in: int, c_out: int) -> None:
        self._add(f"{name}.w", rng.normal(scale=1.0 / math.sqrt(c_in), size=(c_out, c_in)))
        self._add(f"{name}.b", np.zeros(c_out))

    def _add_ln(self, name: str, c: int) -> None:
        self._add(f"{name}.g", np.ones(c))
        self._add(f"{name}.b", np.zeros(c))

    def _add_group(self, rng, prefix: str, blocks: int, c: int) -> None:
        for j in range(blocks):
            base = f"{prefix}.b{j}"
            self._add_pw(rng, f"{base}.fuse", (j + 1) * c, c)
            self._add_ln(f"{base}.ln1", c)
            for head in ("q", "k", "v", "o"):
                self._add_pw(rng, f"{base}.attn.{head}", c, c)
            self._add_ln(f"{base}.ln2", c)
            self._add_pw(rng, f"{base}.ffn.w1", c, FFN_EXPANSION * c)
            self._add_pw(rng, f"{base}.ffn.w2", FFN_EXPANSION * c, c)

    # -- parameter access ---------------------------------------------------

    def params(self) -> dict[str, Tensor]:
        return self._params

    def param_count(self) -> int:
        return sum(p.size for p in self._params.values())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self._params.items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(arrays)
        extra = {k for k in set(arrays) - set(self._params) if not k.startswith(("opt.", "aux."))}
        if missing or extra:
            raise ConfigError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, p in self._params.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ConfigError(f"parameter {name} has shape {arr.shape}, expected {p.shape}")
            p.data = arr.copy()

    # -- forward helpers ----------------------------------------------------

    def _p(self, name: str) -> Tensor:
        return self._params[name]

    def _pw(self, name: str, m: Tensor) -> Tensor:
        return T.linear(self._p(f"{name}.w"), m, self._p(f"{name}.b"))

    def _ln(self, name: str, m: Tensor, c: int) -> Tensor:
        return T.layer_norm_channels(m, self._p(f"{name}.g"), self._p(f"{name}.b"),
                                     eps=LN_EPS)

    def _attn(self, base: str, m: Tensor, c: int, n: int) -> Tensor:
        q = self._pw(f"{base}.attn.q", m)
        k = self._pw(f"{base}.attn.k", m)
        v = self._pw(f"{base}.attn.v", m)
        logits = T.mul(T.matmul(q, T.transpose(k)), 1.0 / math.sqrt(n))
        mixed = T.matmul(T.softmax_rows(logits), v)
        return self._pw(f"{base}.attn.o", mixed)

    def _ffn(self, base: str, m: Tensor) -> Tensor:
        hidden = T.gelu(self._pw(f"{base}.ffn.w1", m))
        return self._pw(f"{base}.ffn.w2", hidden)

    def _group(self, prefix: str, blocks: int, m: Tensor, c: int, n: int) -> Tensor:
        produced = [m]
        for j in range(blocks):
            base = f"{prefix}.b{j}"
            cat = produced[0] if len(produced) == 1 else T.concat(produced, axis=0)
            u = self._pw(f"{base}.fuse", cat)
            u = T.add(u, self._attn(base, self._ln(f"{base}.ln1", u, c), c, n))
            u = T.add(u, self._ffn(base, self._ln(f"{base}.ln2", u, c)))
            produced.append(u)
        return produced[-1]

    # -- forward --------------------------------------------------------------

    def forward_with_features(self, x: Tensor) -> tuple[Tensor, list[FeatureMap]]:
        cfg = self.cfg
        if x.ndim != 3 or x.shape[0] != cfg.input_channels:
            raise ShapeError(
                f"expected input ({cfg.input_channels},H,W), got shape {x.shape}")
        _, h, w = x.shape
        div = cfg.spatial_divisor
        if h % div or w % div:
            raise ShapeError(
                f"spatial extents {h}x{w} must be divisible by {div} "
                f"for {cfg.levels} levels")
        feats: list[FeatureMap] = []
        skips: list[Tensor] = []
        cur = T.conv2d(x, self._p("embed.w"), self._p("embed.b"))
        ch, cw = h, w
        for level in range(1, cfg.levels):
            c = cfg.channels_at(level)
            m = self._group(f"enc{level}", cfg.level_layers[level - 1],
                            T.reshape(cur, (c, ch * cw)), c, ch * cw)
            cur = T.reshape(m, (c, ch, cw))
            feats.append(FeatureMap(cur))
            skips.append(cur)
            cur = T.depthwise_conv2d(cur, self._p(f"down{level}.dw.w"),
                                     self._p(f"down{level}.dw.b"), stride=2)
            ch, cw = ch // 2, cw // 2
            cur = T.reshape(self._pw(f"down{level}.pw",
                                     T.reshape(cur, (c, ch * cw))), (2 * c, ch, cw))
        c_lat = cfg.channels_at(cfg.levels)
        m = self._group("lat", cfg.level_layers[-1],
                        T.reshape(cur, (c_lat, ch * cw)), c_lat, ch * cw)
        cur = T.reshape(m, (c_lat, ch, cw))
        feats.append(FeatureMap(cur))
        for level in range(cfg.levels - 1, 0, -1):
            c = cfg.channels_at(level)
            ch, cw = ch * 2, cw * 2
            cur = T.upsample2x_nearest(cur)
            cur = T.depthwise_conv2d(cur, self._p(f"up{level}.dw.w"),
                                     self._p(f"up{level}.dw.b"))
            cat = T.concat([T.reshape(cur, (2 * c, ch * cw)),
                            T.reshape(skips[level - 1], (c, ch * cw))], axis=0)
            m = self._pw(f"up{level}.fuse", cat)
            m = self._group(f"dec{level}", cfg.level_layers[level - 1], m, c, ch * cw)
            cur = T.reshape(m, (c, ch, cw))
            feats.append(FeatureMap(cur))
        correction = T.conv2d(cur, self._p("final.w"), self._p("final.b"))
        return T.add(x, correction), feats

    def forward(self, x: Tensor) -> Tensor:
        out, _ = self.forward_with_features(x)
        return out


def build_net(cfg: ModelConfig, seed: int) -> RestorationNet:
    """Deterministically initialized net for (cfg, seed)."""
    return RestorationNet(cfg, seed)


def feature_tap_count(cfg: ModelConfig) -> int:
    """Encoder taps (levels, latent included) plus decoder taps."""
    return 2 * cfg.levels - 1


# -- analytic accounting ------------------------------------------------------


def _group_costs(blocks: int, c: int, n: int) -> tuple[int, int]:
    params = 0
    macs = 0
    for j in range(blocks):
        params += ((j + 1) * c * c + c)            # fuse
        params += 2 * c                            # ln1
        params += 4 * (c * c + c)                  # q, k, v, o
        params += 2 * c                            # ln2
        params += (c * FFN_EXPANSION * c + FFN_EXPANSION * c)
        params += (FFN_EXPANSION * c * c + c)
        macs += (j + 1) * c * c * n                # fuse
        macs += 4 * c * c * n                      # q, k, v, o
        macs += 2 * c * c * n                      # q k^T and A v
        macs += 2 * FFN_EXPANSION * c * c * n      # ffn in + out
    return params, macs


def count_params_flops(cfg: ModelConfig, h: int, w: int) -> tuple[int, int]:
    """Closed-form parameter and FLOP counts for a forward pass at (h, w).

    Matches the instrumented trace of `forward_with_features` exactly under
    the 2-FLOPs-per-MAC convention.
    """
    div = cfg.spatial_divisor
    if h < div or w < div or h % div or w % div:
        raise ShapeError(f"extents {h}x{w} must be positive multiples of {div}")
    params = 0
    macs = 0
    c1 = cfg.base_channels
    params += 9 * cfg.input_channels * c1 + c1
    macs += 9 * cfg.input_channels * c1 * h * w
    ch, cw = h, w
    for level in range(1, cfg.levels):
        c = cfg.channels_at(level)
        p, m = _group_costs(cfg.level_layers[level - 1], c, ch * cw)
        params += p
        macs += m
        ch, cw = ch // 2, cw // 2
        params += (9 * c + c) + (c * 2 * c + 2 * c)
        macs += 9 * c * ch * cw + c * 2 * c * ch * cw
    c_lat = cfg.channels_at(cfg.levels)
    p, m = _group_costs(cfg.level_layers[-1], c_lat, ch * cw)
    params += p
    macs += m
    for level in range(cfg.levels - 1, 0, -1):
        c = cfg.channels_at(level)
        ch, cw = ch * 2, cw * 2
        n = ch * cw
        params += (9 * 2 * c + 2 * c) + (3 * c * c + c)
        macs += 9 * 2 * c * n + 3 * c * c * n
        p, m = _group_costs(cfg.level_layers[level - 1], c, n)
        params += p
        macs += m
    params += 9 * c1 * cfg.input_channels + cfg.input_channels
    macs += 9 * c1 * cfg.input_channels * h * w
    return params, 2 * macs


def reduction_percentages(teacher: ModelConfig, student: ModelConfig,
                          h: int, w: int) -> tuple[float, float]:
    """(param, flop) reductions of student vs teacher, in percent."""
    tp, tf = count_params_flops(teacher, h, w)
    sp, sf = count_params_flops(student, h, w)
    return 100.0 * (1.0 - sp / tp), 100.0 * (1.0 - sf / tf)
