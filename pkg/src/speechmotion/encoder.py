"""Audio encoding: feature extraction, linear resampling to the motion
timeline, an unmasked transformer stack, and projection to the model width."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .attention import AttentionProjections, AttentionRecord, mh_attention
from .autodiff import Var
from .config import ModelConfig
from .errors import AudioError
from .params import CONV_SCHEDULE, EXTRACTOR_TOTAL_STRIDE, Params, extractor_min_samples
from .positional import sinusoid_row


@dataclass(frozen=True)
class AudioInput:
    """Either a raw waveform or precomputed feature rows — never both."""

    waveform: np.ndarray | None = None
    sample_rate: float | None = None
    features: np.ndarray | None = None
    feature_rate: float | None = None

    def __post_init__(self):
        has_wave = self.waveform is not None
        has_feat = self.features is not None
        if has_wave == has_feat:
            raise AudioError("exactly one of waveform/features must be set")
        if has_wave and (self.sample_rate is None or self.sample_rate <= 0):
            raise AudioError("waveform input needs a positive sample_rate")
        if has_feat and (self.feature_rate is None or self.feature_rate <= 0):
            raise AudioError("feature input needs a positive feature_rate")

    @classmethod
    def from_waveform(cls, samples, sample_rate: float) -> "AudioInput":
        wave = np.asarray(samples, dtype=np.float64).reshape(-1, 1)
        return cls(waveform=wave, sample_rate=float(sample_rate))

    @classmethod
    def from_features(cls, features, feature_rate: float) -> "AudioInput":
        return cls(
            features=ad.as_matrix(features, "features"),
            feature_rate=float(feature_rate),
        )

    @property
    def rate(self) -> float:
        """Feature rows per second this input produces."""
        if self.features is not None:
            return self.feature_rate
        return self.sample_rate / EXTRACTOR_TOTAL_STRIDE


@dataclass
class EncodedAudio:
    """Contextualized speech rows aligned to the motion timeline."""

    a: Var                # (frame_ratio * motion_len) x dim
    frame_ratio: int
    motion_len: int


def extract_features(audio: AudioInput, params: Params, cfg: ModelConfig) -> Var:
    """Feature rows for the encoder: conv stack on waveforms, passthrough on
    precomputed features."""
    if audio.features is not None:
        return Var(audio.features)
    if audio.waveform.shape[0] < extractor_min_samples():
        raise AudioError(
            f"waveform of {audio.waveform.shape[0]} samples is shorter than the "
            f"extractor receptive field ({extractor_min_samples()})"
        )
    x: Var = Var(audio.waveform)
    for i, (_width, stride) in enumerate(CONV_SCHEDULE):
        x = ad.conv1d_strided(
            x, params[f"extractor.conv{i}.k"], stride, params[f"extractor.conv{i}.b"]
        )
    return x


def resample_linear(features, target_len: int) -> Var:
    """Endpoint-preserving linear interpolation along the time axis."""
    return ad.resample_rows(features, target_len)


def infer_motion_len(feature_rows: int, audio_rate: float, cfg: ModelConfig) -> int:
    """Motion frames covered by the audio: round(T' * f_m / f_a), at least 1."""
    return max(1, int(feature_rows * cfg.motion_rate / audio_rate + 0.5))


def _encoder_layer(x: Var, params: Params, cfg: ModelConfig, i: int,
                   capture: list[AttentionRecord] | None) -> Var:
    p = f"enc.layer{i}"
    proj = AttentionProjections(
        params[f"{p}.attn.wq"], params[f"{p}.attn.wk"],
        params[f"{p}.attn.wv"], params[f"{p}.attn.wo"],
    )
    attn, record = mh_attention(
        x, x, proj, cfg.encoder_heads, base_bias=None, capture=capture is not None
    )
    if record is not None:
        record.module = "encoder.self"
        record.layer = i
        record.step = x.rows - 1
        capture.append(record)
    x = ad.layer_norm(
        ad.add(x, attn), params[f"{p}.ln1.gain"], params[f"{p}.ln1.offset"]
    )
    ff = ad.linear(
        ad.relu(ad.linear(x, params[f"{p}.ff.w1"], params[f"{p}.ff.b1"])),
        params[f"{p}.ff.w2"], params[f"{p}.ff.b2"],
    )
    return ad.layer_norm(
        ad.add(x, ff), params[f"{p}.ln2.gain"], params[f"{p}.ln2.offset"]
    )


def encode(
    audio: AudioInput,
    motion_len: int | None,
    params: Params,
    cfg: ModelConfig,
    capture: list[AttentionRecord] | None = None,
    freeze_extractor: bool = True,
) -> EncodedAudio:
    """Full encoder pass producing frame_ratio * motion_len rows of width dim.

    With ``freeze_extractor`` (the default) the conv stack runs off-tape, so
    its kernels receive no gradients.
    """
    if freeze_extractor and audio.waveform is not None:
        with ad.no_tape():
            feats = extract_features(audio, params, cfg)
        feats = ad.detach(feats)
    else:
        feats = extract_features(audio, params, cfg)
    if feats.cols != cfg.feature_dim:
        raise AudioError(
            f"feature width {feats.cols} does not match configured "
            f"feature_dim {cfg.feature_dim}"
        )
    if motion_len is None:
        motion_len = infer_motion_len(feats.rows, audio.rate, cfg)
    target = cfg.frame_ratio * motion_len
    x = resample_linear(feats, target)
    x = ad.linear(x, params["enc.input_proj.w"], params["enc.input_proj.b"])
    pe = np.concatenate([sinusoid_row(t, cfg.encoder_dim) for t in range(target)])
    x = ad.add_const(x, pe)
    for i in range(cfg.encoder_layers):
        x = _encoder_layer(x, params, cfg, i, capture)
    a = ad.linear(x, params["enc.output_proj.w"], params["enc.output_proj.b"])
    return EncodedAudio(a=a, frame_ratio=cfg.frame_ratio, motion_len=motion_len)
