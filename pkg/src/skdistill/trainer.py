"""Optimization loop, schedules, distillation orchestration, evaluation.

Teacher training minimizes the reconstruction term alone. Distillation
optimizes the full weighted objective over the student parameters plus the
per-block projectors; the teacher is loaded frozen and its features enter
the interaction detached, so its bytes never change.

All randomness flows through labelled streams derived from the run seed,
which keeps two runs of the same (config, seed) bitwise identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .attention import Projector, cross_net_features, make_projector
from .checkpoint import Checkpoint
from .config import RunConfig, config_hash
from .data import Sample, batch_indices, make_samples, normalize, denormalize
from .errors import ConfigError, NonFiniteError, RangeError
from .losses import (
    PhiExtractor,
    contrastive_loss_from_features,
    gk_feature_loss,
    reconstruction_loss,
    total_loss,
)
from .metrics import psnr, ssim
from .models import ModelConfig, RestorationNet, build_net, compress_config, \
    count_params_flops, feature_tap_count
from .seeding import derive_seed, rng_for
from .tensor import Tensor


@dataclass
class AdamState:
    """First/second moment buffers aligned with a fixed parameter order."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: list[Tensor]) -> "AdamState":
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params])


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    """One Adam update with bias correction; mutates params in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ConfigError("adam_step: params/grads/state lengths differ")
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter index {i}")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        # direction first: bounded even when the second moment saturates
        p.data = p.data - lr * ((m / bc1) / (np.sqrt(v / bc2) + eps))
    return state


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float) -> float:
    """Half-cosine decay from lr_max at step 0 to lr_min at step == total."""
    if total_steps < 1:
        raise RangeError(f"total_steps must be >= 1, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise RangeError(f"step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[dict] = field(default_factory=list)
    eval_history: list[dict] = field(default_factory=list)
    aborted: bool = False


def _tensor_pair(sample: Sample) -> tuple[Tensor, Tensor]:
    return Tensor(normalize(sample.degraded)), Tensor(normalize(sample.clean))


def _heldout_count(n: int) -> int:
    return max(4, n // 5)


def make_train_heldout(run: RunConfig, threads: int = 1) -> tuple[list[Sample], list[Sample]]:
    """Training samples plus a fresh held-out block after them."""
    train = make_samples(run.data, threads=threads)
    held = make_samples(run.data, first_index=run.data.count,
                        count=_heldout_count(run.data.count), threads=threads)
    return train, held


def _mean_loss(parts: list[Tensor]) -> Tensor:
    total = parts[0]
    for p in parts[1:]:
        total = T.add(total, p)
    return T.mul(total, 1.0 / len(parts))


def _restoration_psnr(net: RestorationNet, samples: list[Sample]) -> dict:
    restored_scores = []
    degraded_scores = []
    for s in samples:
        out = net.forward(Tensor(normalize(s.degraded)))
        restored = np.clip(denormalize(out.data), 0.0, 1.0)
        restored_scores.append(psnr(restored, s.clean, 1.0))
        degraded_scores.append(psnr(s.degraded, s.clean, 1.0))
    return {"psnr_restored": float(np.mean(restored_scores)),
            "psnr_degraded": float(np.mean(degraded_scores))}


def _finalize(net: RestorationNet, aux: dict[str, Tensor], run: RunConfig,
              kind: str, state: AdamState, param_names: list[str], step: int,
              rng_state: dict) -> Checkpoint:
    tensors: dict[str, np.ndarray] = {}
    for name, p in net.params().items():
        tensors[f"net.{name}"] = p.data
    for name, p in aux.items():
        tensors[f"aux.{name}"] = p.data
    for name, m, v in zip(param_names, state.m, state.v):
        tensors[f"opt.m.{name}"] = m
        tensors[f"opt.v.{name}"] = v
    meta = {
        "kind": kind,
        "model": net.cfg.to_dict(),
        "config": run.to_dict(),
        "config_hash": config_hash(run),
        "adam_t": state.t,
    }
    return Checkpoint(step=step, rng_state=rng_state, meta=meta, tensors=tensors)


class _EmaTracker:
    """Exponential moving average of the per-step loss (decay 0.9)."""

    def __init__(self, decay: float = 0.9):
        self.decay = decay
        self.value: float | None = None

    def update(self, x: float) -> float:
        self.value = x if self.value is None else self.decay * self.value + (1 - self.decay) * x
        return self.value


def _train_loop(net: RestorationNet, extra_params: dict[str, Tensor],
                run: RunConfig, loss_fn, kind: str,
                train_samples: list[Sample], heldout: list[Sample]) -> TrainResult:
    """Shared optimization driver.

    `loss_fn(batch) -> (total Tensor, components dict)` closes over whatever
    networks it needs; `net` holds the parameters being optimized together
    with `extra_params` (projectors), in that order.
    """
    cfg = run.train
    names = [f"net.{n}" for n in net.params()] + list(extra_params)
    params = list(net.params().values()) + list(extra_params.values())
    state = AdamState.for_params(params)
    batches_per_epoch = len(train_samples) // cfg.batch_size
    if batches_per_epoch < 1:
        raise ConfigError(
            f"{len(train_samples)} samples cannot fill a batch of {cfg.batch_size}")
    total_steps = cfg.epochs * batches_per_epoch
    trainer_rng = rng_for(cfg.seed, "trainer", kind)
    history: list[dict] = []
    eval_history: list[dict] = []
    ema = _EmaTracker()
    step = 0
    aborted = False
    # the hot loop drops the per-op finiteness scan; divergence is still
    # caught by the per-step loss check and adam's gradient validation
    scan_was_on = T.set_nan_checks(False)
    try:
        for epoch in range(cfg.epochs):
            if aborted:
                break
            for batch_ids in batch_indices(len(train_samples), cfg.batch_size,
                                           cfg.seed, epoch):
                lr = cosine_lr(step, total_steps, cfg.lr_max, cfg.lr_min)
                batch = [train_samples[i] for i in batch_ids]
                try:
                    loss, components = loss_fn(batch)
                    loss_value = loss.item()
                    if not math.isfinite(loss_value):
                        raise NonFiniteError(f"non-finite loss at step {step}")
                    loss.backward(leaves=params)
                    grads = [p.grad for p in params]
                    adam_step(params, grads, state, lr, cfg.beta1, cfg.beta2,
                              cfg.adam_eps)
                except NonFiniteError:
                    # abort with the last good parameters (the failed update
                    # was either not applied or rejected by adam_step)
                    aborted = True
                    break
                trainer_rng.integers(0, 2**32)  # one draw per step: resumable stream
                step += 1
                record = {"step": step, "lr": lr, "loss": loss_value,
                          "ema": ema.update(loss_value)}
                record.update(components)
                history.append(record)
                if step % cfg.eval_interval == 0 and heldout:
                    entry = {"step": step}
                    entry.update(_restoration_psnr(net, heldout))
                    eval_history.append(entry)
        if heldout and (not eval_history or eval_history[-1]["step"] != step):
            entry = {"step": step}
            entry.update(_restoration_psnr(net, heldout))
            eval_history.append(entry)
    finally:
        T.set_nan_checks(scan_was_on)
    ckpt = _finalize(net, extra_params, run, kind, state, names, step,
                     trainer_rng.bit_generator.state)
    return TrainResult(checkpoint=ckpt, history=history,
                       eval_history=eval_history, aborted=aborted)


def train_restoration(model_cfg: ModelConfig, run: RunConfig, role: str,
                      train_samples: list[Sample] | None = None,
                      heldout: list[Sample] | None = None) -> TrainResult:
    """Reconstruction-only training of one net (the teacher, or a plain
    student baseline when role='student')."""
    if train_samples is None or heldout is None:
        train_samples, heldout = make_train_heldout(run)
    net = build_net(model_cfg, derive_seed(run.train.seed, role))

    def loss_fn(batch):
        parts = []
        for sample in batch:
            x, target = _tensor_pair(sample)
            parts.append(reconstruction_loss(net.forward(x), target))
        rec = _mean_loss(parts)
        return rec, {"rec": rec.item(), "gk": 0.0, "cl": 0.0}

    return _train_loop(net, {}, run, loss_fn, f"plain-{role}", train_samples, heldout)


def train_teacher(run: RunConfig,
                  train_samples: list[Sample] | None = None,
                  heldout: list[Sample] | None = None) -> TrainResult:
    return train_restoration(run.model, run, "teacher", train_samples, heldout)


def _tap_channels(cfg: ModelConfig) -> list[int]:
    enc = [cfg.channels_at(l) for l in range(1, cfg.levels + 1)]
    dec = [cfg.channels_at(l) for l in range(cfg.levels - 1, 0, -1)]
    return enc + dec


def load_net(ckpt: Checkpoint) -> RestorationNet:
    """Rebuild the checkpointed net; parameters come from the 'net.' tensors."""
    cfg = ModelConfig.from_dict(ckpt.meta["model"])
    net = build_net(cfg, 0)
    state = {name[len("net."):]: arr for name, arr in ckpt.tensors.items()
             if name.startswith("net.")}
    net.load_state(state)
    return net


def _set_frozen(net: RestorationNet) -> None:
    for p in net.params().values():
        p.requires_grad = False


def distill(run: RunConfig, teacher_ckpt: Checkpoint,
            train_samples: list[Sample] | None = None,
            heldout: list[Sample] | None = None) -> TrainResult:
    """Distill the student against a frozen teacher checkpoint."""
    if run.student_model is None:
        raise ConfigError("distillation needs a student_model section")
    teacher = load_net(teacher_ckpt)
    _set_frozen(teacher)
    # validates level counts and per-knob compression
    compress_config(teacher.cfg, run.student_model.level_layers,
                    run.student_model.base_channels)
    if train_samples is None or heldout is None:
        train_samples, heldout = make_train_heldout(run)
    w = run.train.loss
    student = build_net(run.student_model, derive_seed(run.train.seed, "student"))
    d_u = run.student_model.unified_dim
    taps = list(range(feature_tap_count(run.student_model)))
    if run.train.distill_blocks is not None:
        bad = [i for i in run.train.distill_blocks if i not in taps]
        if bad:
            raise ConfigError(f"distill_blocks {bad} outside tap range {taps[-1]}")
        taps = list(run.train.distill_blocks)
    proj_rng = rng_for(run.train.seed, "projectors")
    t_channels = _tap_channels(teacher.cfg)
    s_channels = _tap_channels(run.student_model)
    projectors: dict[int, tuple[Projector, Projector]] = {}
    extra_params: dict[str, Tensor] = {}
    for i in taps:
        p_t = make_projector(t_channels[i], d_u, proj_rng)
        p_s = make_projector(s_channels[i], d_u, proj_rng)
        projectors[i] = (p_t, p_s)
        extra_params[f"proj{i}.t.w"] = p_t.weight
        extra_params[f"proj{i}.t.b"] = p_t.bias
        extra_params[f"proj{i}.s.w"] = p_s.weight
        extra_params[f"proj{i}.s.b"] = p_s.bias
    phi = PhiExtractor(run.student_model.input_channels,
                       derive_seed(run.train.seed, "phi"))
    policy = w.lambda_policy()
    use_gk = w.alpha2 > 0.0
    use_cl = w.alpha3 > 0.0

    def loss_fn(batch):
        rec_parts: list[Tensor] = []
        gk_parts: list[Tensor] = []
        cl_parts: list[Tensor] = []
        degraded_inputs = [Tensor(normalize(s.degraded)) for s in batch]
        if use_cl:
            negative_feats = [phi(x.detach()) for x in degraded_inputs]
        for sample, x in zip(batch, degraded_inputs):
            target = Tensor(normalize(sample.clean))
            s_out, s_feats = student.forward_with_features(x)
            rec_parts.append(reconstruction_loss(s_out, target))
            if use_gk or use_cl:
                t_out, t_feats = teacher.forward_with_features(x)
            if use_gk:
                s_fs, s_fcs, s_fts, t_fs = [], [], [], []
                for i in taps:
                    p_t, p_s = projectors[i]
                    s_f, s_fc, s_ft, t_f = cross_net_features(
                        t_feats[i], s_feats[i], p_t, p_s, policy, w.spatial_axis)
                    s_fs.append(s_f)
                    s_fcs.append(s_fc)
                    s_fts.append(s_ft)
                    t_fs.append(t_f)
                gk_parts.append(gk_feature_loss(s_fs, s_fcs, s_fts, t_fs, w))
            if use_cl:
                cl_parts.append(contrastive_loss_from_features(
                    phi(s_out), phi(t_out.detach()), negative_feats, w.tau))
        rec = _mean_loss(rec_parts)
        gk = _mean_loss(gk_parts) if gk_parts else 0.0
        cl = _mean_loss(cl_parts) if cl_parts else 0.0
        total = total_loss(rec, gk, cl, w)
        return total, {"rec": rec.item(),
                       "gk": gk.item() if gk_parts else 0.0,
                       "cl": cl.item() if cl_parts else 0.0}

    return _train_loop(student, extra_params, run, loss_fn, "distill",
                       train_samples, heldout)


def evaluate(ckpt: Checkpoint, samples: list[Sample]) -> dict:
    """Deterministic metrics report for a checkpoint over a sample set."""
    if not samples:
        raise ConfigError("evaluate needs at least one sample")
    net = load_net(ckpt)
    _set_frozen(net)
    psnr_scores = []
    ssim_scores = []
    for s in samples:
        out = net.forward(Tensor(normalize(s.degraded)))
        restored = np.clip(denormalize(out.data), 0.0, 1.0)
        psnr_scores.append(psnr(restored, s.clean, 1.0))
        ssim_scores.append(ssim(restored, s.clean, 1.0))
    h, w_ = samples[0].clean.shape[1], samples[0].clean.shape[2]
    params, flops = count_params_flops(net.cfg, h, w_)
    return {
        "task": samples[0].task,
        "psnr": float(np.mean(psnr_scores)),
        "ssim": float(np.mean(ssim_scores)),
        "params": params,
        "flops": flops,
        "steps": ckpt.step,
        "config_hash": ckpt.meta.get("config_hash", ""),
    }
