"""Autoregressive training with the summed-MSE objective, evaluation
metrics, and attention-weight export."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import autodiff as ad
from .attention import AttentionRecord
from .autodiff import Tape, Var, backward
from .config import ModelConfig
from .decoder import rollout
from .encoder import AudioInput, encode
from .errors import DivergenceError, ShapeError
from .formats import atomic_write_text
from .optim import AdamState, adam_step, clip_global_norm
from .params import CONV_SCHEDULE, Params

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingSample:
    """One audio/motion pair with its speaker identity index."""

    audio: AudioInput
    motion: np.ndarray  # T x 3V
    identity: int


def mse_loss(pred, truth) -> Var:
    """Sum over frames and vertices of squared coordinate differences.

    Returns a 1x1 value (taped when a tape is active); use ``.item()`` for the
    float. The per-frame-per-vertex RMSE reported in logs is derived from this
    sum, not part of the objective.
    """
    pred, truth = ad._as_var(pred), ad._as_var(truth)
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction {pred.shape} vs truth {truth.shape}")
    diff = ad.sub(pred, truth)
    return ad.sum_all(ad.mul(diff, diff))


def frame_vertex_rmse(pred: np.ndarray, truth: np.ndarray) -> float:
    """sqrt of the mean squared per-vertex 3-D distance over all frames."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction {pred.shape} vs truth {truth.shape}")
    frames, cols = pred.shape
    sq = np.square(pred - truth).reshape(frames, cols // 3, 3).sum(axis=2)
    return float(np.sqrt(sq.mean()))


def rms_amplitude(motion: np.ndarray) -> float:
    """RMS per-vertex 3-D magnitude of a motion sequence (or stack of them)."""
    return frame_vertex_rmse(motion, np.zeros_like(motion))


class TrainStep(NamedTuple):
    step: int
    epoch: int
    sample: int
    loss: float
    rmse: float


def _target_motion(sample: TrainingSample, cfg: ModelConfig) -> np.ndarray:
    if cfg.output_space == "offset":
        return sample.motion - sample.motion[0:1]
    return sample.motion


def rollout_loss(
    sample: TrainingSample,
    params: Params,
    cfg: ModelConfig,
    detach_feedback: bool = False,
    freeze_extractor: bool = True,
) -> tuple[Var, np.ndarray]:
    """Loss of a full autoregressive rollout against the sample's motion."""
    truth = _target_motion(sample, cfg)
    frames = truth.shape[0]
    enc = encode(
        sample.audio, frames, params, cfg, freeze_extractor=freeze_extractor
    )
    pred = rollout(
        enc, sample.identity, frames, params, cfg, detach_feedback=detach_feedback
    )
    return mse_loss(pred, truth), pred.data


def train(
    dataset: Sequence[TrainingSample],
    params: Params,
    cfg: ModelConfig,
    epochs: int,
    seed: int,
    *,
    lr: float = 1e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    grad_clip: float = 1.0,
    detach_rollout: bool = False,
    freeze_extractor: bool = True,
    stop_rmse: float | None = None,
    keep_best: bool = False,
    on_epoch: Callable[[int, float], None] | None = None,
) -> tuple[Params, list[TrainStep]]:
    """Autoregressive training: one Adam step per sequence per epoch.

    Every epoch visits each sample once in a seed-shuffled order; the full
    sequence is rolled out feeding the model's own predictions, the summed
    MSE is backpropagated through the entire unrolled computation, and one
    optimizer step is applied. Fully deterministic for fixed inputs.

    ``keep_best`` re-evaluates the full training set at every epoch end and
    returns the parameters with the lowest autoregressive RMSE instead of the
    last epoch's (a simple best-loss checkpoint).
    """
    if not dataset:
        raise ShapeError("training needs a nonempty dataset")
    widths = {s.motion.shape[1] for s in dataset}
    if widths != {cfg.motion_dim}:
        raise ShapeError(
            f"motion widths {sorted(widths)} do not all match 3*V = {cfg.motion_dim}"
        )
    for idx, s in enumerate(dataset):
        check_sample_alignment(s, cfg, idx)

    rng = np.random.Generator(np.random.PCG64(seed))
    state = AdamState.fresh(params)
    history: list[TrainStep] = []
    step = 0
    best: tuple[float, Params | None] = (np.inf, None)
    for epoch in range(epochs):
        order = rng.permutation(len(dataset))
        epoch_rmses = []
        for sample_idx in order:
            sample = dataset[int(sample_idx)]
            with Tape():
                loss_var, pred = rollout_loss(
                    sample, params, cfg,
                    detach_feedback=detach_rollout,
                    freeze_extractor=freeze_extractor,
                )
                loss = loss_var.item()
                if not np.isfinite(loss):
                    raise DivergenceError(
                        f"non-finite loss at epoch {epoch}, sample {int(sample_idx)}"
                    )
                grads = backward(loss_var, params)
            grads, norm = clip_global_norm(grads, grad_clip)
            if norm > grad_clip:
                log.debug(
                    "gradient norm %.3g clipped to %.3g (epoch %d sample %d)",
                    norm, grad_clip, epoch, int(sample_idx),
                )
            params, state = adam_step(
                params, grads, state, lr=lr, beta1=beta1, beta2=beta2, eps=eps
            )
            rmse = frame_vertex_rmse(pred, _target_motion(sample, cfg))
            epoch_rmses.append(rmse)
            history.append(TrainStep(step, epoch, int(sample_idx), loss, rmse))
            step += 1
        mean_rmse = float(np.mean(epoch_rmses))
        if keep_best:
            eval_rmse = evaluate_rmse(dataset, params, cfg)
            if eval_rmse < best[0]:
                best = (eval_rmse, {k: Var(v.data.copy()) for k, v in params.items()})
        if on_epoch is not None:
            on_epoch(epoch, mean_rmse)
        if stop_rmse is not None and mean_rmse < stop_rmse:
            log.info("early stop at epoch %d: rollout rmse %.3g", epoch, mean_rmse)
            break
    if keep_best and best[1] is not None:
        params = best[1]
    return params, history


def check_sample_alignment(sample: TrainingSample, cfg: ModelConfig, idx: int) -> None:
    """Motion length must match the audio duration within one frame."""
    if sample.audio.features is not None:
        feature_rows = sample.audio.features.shape[0]
    else:
        # trusting the conv length formula avoids running the extractor here
        rows = sample.audio.waveform.shape[0]
        for width, stride in CONV_SCHEDULE:
            rows = (rows - width) // stride + 1
        feature_rows = rows
    implied = feature_rows * cfg.motion_rate / sample.audio.rate
    frames = sample.motion.shape[0]
    if abs(frames - implied) > 1.0 + 1e-9:
        raise ShapeError(
            f"sample {idx}: motion has {frames} frames but audio implies "
            f"{implied:.2f} at {cfg.motion_rate} fps"
        )


def evaluate_rmse(
    dataset: Sequence[TrainingSample], params: Params, cfg: ModelConfig
) -> float:
    """Pooled autoregressive per-frame-per-vertex RMSE over a corpus."""
    total_sq = 0.0
    total_items = 0
    for sample in dataset:
        truth = _target_motion(sample, cfg)
        frames = truth.shape[0]
        enc = encode(sample.audio, frames, params, cfg)
        pred = rollout(enc, sample.identity, frames, params, cfg).data
        frames, cols = truth.shape
        total_sq += float(np.square(pred - truth).sum())
        total_items += frames * (cols // 3)
    return float(np.sqrt(total_sq / total_items))


def lip_error(pred: np.ndarray, truth: np.ndarray, lips: Sequence[int]) -> float:
    """Mean over frames of the worst lip-vertex Euclidean deviation."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction {pred.shape} vs truth {truth.shape}")
    lips = list(lips)
    if not lips:
        raise ShapeError("lip index set is empty")
    vertices = pred.shape[1] // 3
    if len(set(lips)) != len(lips) or min(lips) < 0 or max(lips) >= vertices:
        raise ShapeError(
            f"lip indices must be unique and in [0, {vertices}), got {lips}"
        )
    frames = pred.shape[0]
    p = pred.reshape(frames, vertices, 3)[:, lips]
    q = truth.reshape(frames, vertices, 3)[:, lips]
    dist = np.sqrt(np.square(p - q).sum(axis=2))
    return float(dist.max(axis=1).mean())


def lip_error_corpus(
    pairs: Sequence[tuple[np.ndarray, np.ndarray]], lips: Sequence[int]
) -> float:
    """Average of per-sequence lip errors, in input order."""
    if not pairs:
        raise ShapeError("corpus is empty")
    return float(np.mean([lip_error(p, t, lips) for p, t in pairs]))


def export_attention(records: Sequence[AttentionRecord], path) -> None:
    """Write head-averaged attention weights as commented CSV sections.

    Each record contributes '#'-prefixed metadata lines followed by one
    comma-separated row per query step; masked entries are exact zeros.
    """
    if not records:
        raise ShapeError("no attention records to export")
    lines: list[str] = []
    for rec in records:
        mean = rec.head_mean()
        lines.append(
            f"# module={rec.module} layer={rec.layer} step={rec.step} "
            f"rows={mean.shape[0]} cols={mean.shape[1]} heads={len(rec.head_weights)}"
        )
        for row in mean:
            lines.append(",".join(format(x, ".17g") for x in row))
    atomic_write_text(path, "\n".join(lines) + "\n")
