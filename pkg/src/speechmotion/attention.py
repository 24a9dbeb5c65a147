"""Biased scaled dot-product attention, multi-head wrapper, and a naive
reference oracle used for equivalence testing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .errors import DegenerateRowError, ShapeError
from .positional import BiasMatrix


@dataclass
class AttentionProjections:
    """Query/key/value input projections and the output projection."""

    wq: Var
    wk: Var
    wv: Var
    wo: Var


@dataclass
class AttentionRecord:
    """Per-head attention weights captured during one forward pass."""

    module: str
    layer: int
    step: int
    head_weights: list[np.ndarray] = field(default_factory=list)

    def head_mean(self) -> np.ndarray:
        return np.mean(self.head_weights, axis=0)


def biased_attention(q, k, v, bias: BiasMatrix | None) -> tuple[Var, Var]:
    """softmax(q k^T / sqrt(d_k) + bias) v; returns (output, weights)."""
    q, k, v = ad._as_var(q), ad._as_var(k), ad._as_var(v)
    if q.cols != k.cols:
        raise ShapeError(f"query dim {q.cols} != key dim {k.cols}")
    if k.rows != v.rows:
        raise ShapeError(f"key rows {k.rows} != value rows {v.rows}")
    scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(q.cols))
    if bias is not None:
        if bias.shape != (q.rows, k.rows):
            raise ShapeError(
                f"bias shape {bias.shape} does not match scores {(q.rows, k.rows)}"
            )
        scores = ad.add_const(scores, bias.data)
    weights = ad.softmax_rows(scores)
    return ad.matmul(weights, v), weights


def mh_attention(
    x_q,
    x_kv,
    proj: AttentionProjections,
    heads: int,
    base_bias: BiasMatrix | None,
    slopes: list[float] | None = None,
    capture: bool = False,
) -> tuple[Var, AttentionRecord | None]:
    """Multi-head biased attention.

    Temporal biases require per-head slopes (head h sees base_bias * slope_h);
    alignment biases are shared unscaled across heads, since scaling a
    {0, -inf} matrix changes nothing.
    """
    x_q, x_kv = ad._as_var(x_q), ad._as_var(x_kv)
    temporal = base_bias is not None and base_bias.kind == "temporal"
    if temporal and slopes is None:
        raise ShapeError("temporal bias needs per-head slopes")
    if not temporal and slopes is not None:
        raise ShapeError("slopes are only meaningful for temporal biases")
    if temporal and len(slopes) != heads:
        raise ShapeError(f"got {len(slopes)} slopes for {heads} heads")
    d_k = proj.wq.cols // heads
    d_v = proj.wv.cols // heads
    if proj.wq.cols % heads or proj.wv.cols % heads:
        raise ShapeError(
            f"projection widths {proj.wq.cols}/{proj.wv.cols} not divisible by {heads} heads"
        )
    q_all = ad.matmul(x_q, proj.wq)
    k_all = ad.matmul(x_kv, proj.wk)
    v_all = ad.matmul(x_kv, proj.wv)
    record = AttentionRecord("", 0, 0) if capture else None
    outs = []
    for h in range(heads):
        q = ad.slice_cols(q_all, h * d_k, (h + 1) * d_k)
        k = ad.slice_cols(k_all, h * d_k, (h + 1) * d_k)
        v = ad.slice_cols(v_all, h * d_v, (h + 1) * d_v)
        bias = base_bias.scaled(slopes[h]) if temporal else base_bias
        out, weights = biased_attention(q, k, v, bias)
        outs.append(out)
        if record is not None:
            record.head_weights.append(weights.data.copy())
    return ad.matmul(ad.concat_cols(outs), proj.wo), record


def attention_oracle(q, k, v, bias: BiasMatrix | None) -> np.ndarray:
    """Reference attention computed with explicit scalar loops.

    Deliberately unvectorized so it cannot share bugs with the production
    path; used only by tests.
    """
    qd = np.asarray(q.data if isinstance(q, Var) else q, dtype=np.float64)
    kd = np.asarray(k.data if isinstance(k, Var) else k, dtype=np.float64)
    vd = np.asarray(v.data if isinstance(v, Var) else v, dtype=np.float64)
    t, d_k = qd.shape
    s, d_v = vd.shape
    inv = 1.0 / math.sqrt(d_k)
    out = np.zeros((t, d_v))
    for i in range(t):
        scores = []
        for j in range(s):
            dot = 0.0
            for a in range(d_k):
                dot += qd[i, a] * kd[j, a]
            score = dot * inv
            if bias is not None:
                score += bias.data[i, j]
            scores.append(score)
        finite = [x for x in scores if math.isfinite(x)]
        if not finite:
            raise DegenerateRowError(f"softmax row {i} has no finite entry")
        top = max(finite)
        exps = [math.exp(x - top) if math.isfinite(x) else 0.0 for x in scores]
        denom = sum(exps)
        for b in range(d_v):
            acc = 0.0
            for j in range(s):
                acc += (exps[j] / denom) * vd[j, b]
            out[i, b] = acc
    return out
