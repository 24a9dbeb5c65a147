"""Reverse-mode automatic differentiation over dense float64 matrices.

Every value is a 2-D float64 array wrapped in a :class:`Var`. While a
:class:`Tape` is active (``with Tape() as tape:``) each operation appends one
record ``(output, inputs, vjp)``; the record list is a Wengert list, so
replaying it in reverse and accumulating adjoints in that fixed order yields
gradients that are bitwise reproducible for identical tapes. Outside a tape
the same functions just compute values, which is what inference uses.

``-inf`` is the masking sentinel for attention biases. It may enter the graph
only through ``add_const`` (adding a bias matrix to finite scores) and is
consumed only by ``softmax_rows``, which maps it to exactly zero weight; no
other operation accepts non-finite input.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .errors import DegenerateRowError, GradientError, ShapeError

Array = np.ndarray


def as_matrix(x, name: str = "value") -> Array:
    """Coerce to a 2-D C-contiguous float64 array."""
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return a


class Var:
    """A matrix value, optionally attached to the tape that produced it."""

    __slots__ = ("data", "tape")

    def __init__(self, data, tape: "Tape | None" = None):
        self.data = as_matrix(data)
        self.tape = tape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 value, got {self.data.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        return f"Var(shape={self.data.shape}, taped={self.tape is not None})"


_Record = tuple[Var, tuple[Var, ...], Callable[[Array], tuple[Array | None, ...]]]

_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of executed differentiable operations."""

    __slots__ = ("_records",)

    def __init__(self):
        self._records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()

    def __len__(self) -> int:
        return len(self._records)


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


@contextmanager
def no_tape() -> Iterator[None]:
    """Run a block without recording (frozen submodules, detached values)."""
    saved = _TAPE_STACK[:]
    _TAPE_STACK.clear()
    try:
        yield
    finally:
        _TAPE_STACK.extend(saved)


def detach(v: Var) -> Var:
    """A leaf holding the same data; gradients stop here."""
    return Var(v.data)


def _as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _make(data: Array, inputs: tuple[Var, ...], vjp) -> Var:
    tape = _active_tape()
    out = Var(data, tape)
    if tape is not None:
        tape._records.append((out, inputs, vjp))
    return out


def backward(loss: Var, params: Mapping[str, Var]) -> dict[str, Array]:
    """Gradients of a scalar taped value for every named parameter.

    Parameters not reachable from ``loss`` get zero gradients. Two calls on
    the same tape produce bitwise-identical results.
    """
    if loss.data.shape != (1, 1):
        raise GradientError(f"loss must be a 1x1 scalar, got shape {loss.data.shape}")
    if loss.tape is None:
        raise GradientError("loss was not produced by taped operations")
    grads: dict[int, Array] = {id(loss): np.ones((1, 1))}
    for out, inputs, vjp in reversed(loss.tape._records):
        g = grads.get(id(out))
        if g is None:
            continue
        for inp, contrib in zip(inputs, vjp(g)):
            if contrib is None:
                continue
            acc = grads.get(id(inp))
            # rebind instead of += so aliased contributions stay independent
            grads[id(inp)] = contrib if acc is None else acc + contrib
    return {
        name: grads.get(id(v), np.zeros_like(v.data)) for name, v in params.items()
    }


def grad(loss: Var, wrt: Var) -> Array:
    """Gradient of a scalar taped value for one variable."""
    return backward(loss, {"_": wrt})["_"]


# ---------------------------------------------------------------------------
# elementary operations


def matmul(a, b) -> Var:
    """Matrix product, recorded on the tape when one is active."""
    a, b = _as_var(a), _as_var(b)
    if a.cols != b.rows:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g: Array):
        return g @ bd.T, ad.T @ g

    return _make(ad @ bd, (a, b), vjp)


def transpose(a) -> Var:
    a = _as_var(a)
    return _make(np.ascontiguousarray(a.data.T), (a,), lambda g: (g.T,))


def add(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return _make(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    if a.shape != b.shape:
        raise ShapeError(f"sub shape mismatch: {a.shape} vs {b.shape}")
    return _make(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Var:
    """Elementwise product."""
    a, b = _as_var(a), _as_var(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a, c: float) -> Var:
    a = _as_var(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def add_const(a, const) -> Var:
    """Add a constant matrix; the one sanctioned entry point for -inf biases."""
    a = _as_var(a)
    c = np.asarray(const, dtype=np.float64)
    if a.shape != c.shape:
        raise ShapeError(f"add_const shape mismatch: {a.shape} vs {c.shape}")
    return _make(a.data + c, (a,), lambda g: (g,))


def add_row(a, row) -> Var:
    """Broadcast a 1xC row over all rows of a."""
    a, row = _as_var(a), _as_var(row)
    if row.rows != 1 or row.cols != a.cols:
        raise ShapeError(f"add_row needs 1x{a.cols} row, got {row.shape}")
    return _make(
        a.data + row.data, (a, row), lambda g: (g, g.sum(axis=0, keepdims=True))
    )


def relu(a) -> Var:
    a = _as_var(a)
    mask = a.data > 0.0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sum_all(a) -> Var:
    a = _as_var(a)
    shape = a.shape
    return _make(
        np.array([[a.data.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),)
    )


def linear(x, w, b) -> Var:
    """x @ w + b with b broadcast over rows."""
    return add_row(matmul(x, w), b)


def softmax_rows(a) -> Var:
    """Row-wise softmax, stabilized by finite row-max subtraction.

    ``-inf`` entries get exactly zero weight; a row with no finite entry is a
    fully masked query and raises :class:`DegenerateRowError`.
    """
    a = _as_var(a)
    x = a.data
    finite_any = np.isfinite(x).any(axis=1)
    if not finite_any.all():
        bad = int(np.flatnonzero(~finite_any)[0])
        raise DegenerateRowError(f"softmax row {bad} has no finite entry")
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=1, keepdims=True)

    def vjp(g: Array):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _make(y, (a,), vjp)


def layer_norm(a, gain, offset, eps: float = 1e-5) -> Var:
    """Normalize each row to zero mean / unit variance, then scale and shift."""
    a, gain, offset = _as_var(a), _as_var(gain), _as_var(offset)
    n = a.cols
    if gain.shape != (1, n) or offset.shape != (1, n):
        raise ShapeError(
            f"layer_norm gain/offset must be 1x{n}, got {gain.shape}/{offset.shape}"
        )
    x = a.data
    mu = x.mean(axis=1, keepdims=True)
    var = np.square(x - mu).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    gd = gain.data

    def vjp(g: Array):
        gy = g * gd
        term = gy - gy.mean(axis=1, keepdims=True)
        term -= xhat * (gy * xhat).mean(axis=1, keepdims=True)
        return (
            term * inv,
            (g * xhat).sum(axis=0, keepdims=True),
            g.sum(axis=0, keepdims=True),
        )

    return _make(xhat * gd + offset.data, (a, gain, offset), vjp)


def gather_patches(x, width: int, stride: int) -> Var:
    """Unfold a time x channels matrix into rows of flattened windows.

    Output row u is ``x[u*stride : u*stride+width]`` flattened time-major,
    i.e. column ``o*C + c`` holds channel ``c`` at window offset ``o``.
    """
    x = _as_var(x)
    t, c = x.shape
    if width < 1 or stride < 1:
        raise ShapeError(f"width/stride must be >= 1, got {width}/{stride}")
    if t < width:
        raise ShapeError(f"input length {t} shorter than kernel width {width}")
    t_out = (t - width) // stride + 1
    idx = np.arange(t_out)[:, None] * stride + np.arange(width)[None, :]
    out = x.data[idx].reshape(t_out, width * c)
    shape = x.shape

    def vjp(g: Array):
        gx = np.zeros(shape)
        np.add.at(gx, idx, g.reshape(t_out, width, c))
        return (gx,)

    return _make(out, (x,), vjp)


def conv1d_strided(x, kernels, stride: int, bias=None) -> Var:
    """Valid strided 1-D convolution over the time axis, then a rectifier.

    ``kernels`` is a (width*in_channels) x out_channels matrix laid out to
    match :func:`gather_patches`; output length is (time-width)//stride + 1.
    """
    x, kernels = _as_var(x), _as_var(kernels)
    c_in = x.cols
    if kernels.rows % c_in != 0:
        raise ShapeError(
            f"kernel rows {kernels.rows} not a multiple of input channels {c_in}"
        )
    width = kernels.rows // c_in
    pre = matmul(gather_patches(x, width, stride), kernels)
    if bias is not None:
        pre = add_row(pre, bias)
    return relu(pre)


def resample_rows(x, target_len: int) -> Var:
    """Linear-interpolation resampling along the row (time) axis.

    Row u of the output samples source coordinate u*(T-1)/(target_len-1), so
    endpoints are preserved exactly. Degenerate cases (one source row or one
    target row) repeat / take the first row.
    """
    x = _as_var(x)
    t = x.rows
    if target_len < 1:
        raise ShapeError(f"target_len must be >= 1, got {target_len}")
    if t == 1:
        idx = np.zeros(target_len, dtype=np.intp)
        return slice_rows_gather(x, idx)
    if target_len == 1:
        return slice_rows(x, 0, 1)
    pos = np.arange(target_len) * ((t - 1) / (target_len - 1))
    lo = np.minimum(pos.astype(np.intp), t - 2)
    frac = (pos - lo)[:, None]
    hi = lo + 1
    out = x.data[lo] * (1.0 - frac) + x.data[hi] * frac
    shape = x.shape

    def vjp(g: Array):
        gx = np.zeros(shape)
        np.add.at(gx, lo, g * (1.0 - frac))
        np.add.at(gx, hi, g * frac)
        return (gx,)

    return _make(out, (x,), vjp)


def slice_rows_gather(x, idx: Array) -> Var:
    """Select rows by an index vector (rows may repeat)."""
    x = _as_var(x)
    idx = np.asarray(idx, dtype=np.intp)
    shape = x.shape

    def vjp(g: Array):
        gx = np.zeros(shape)
        np.add.at(gx, idx, g)
        return (gx,)

    return _make(x.data[idx], (x,), vjp)


def slice_rows(x, start: int, stop: int) -> Var:
    x = _as_var(x)
    if not (0 <= start < stop <= x.rows):
        raise ShapeError(f"row slice [{start}:{stop}] out of range for {x.shape}")
    shape = x.shape

    def vjp(g: Array):
        gx = np.zeros(shape)
        gx[start:stop] = g
        return (gx,)

    return _make(x.data[start:stop].copy(), (x,), vjp)


def slice_cols(x, start: int, stop: int) -> Var:
    x = _as_var(x)
    if not (0 <= start < stop <= x.cols):
        raise ShapeError(f"column slice [{start}:{stop}] out of range for {x.shape}")
    shape = x.shape

    def vjp(g: Array):
        gx = np.zeros(shape)
        gx[:, start:stop] = g
        return (gx,)

    return _make(np.ascontiguousarray(x.data[:, start:stop]), (x,), vjp)


def take_row(x, i: int) -> Var:
    return slice_rows(x, i, i + 1)


def concat_rows(parts: Sequence) -> Var:
    parts = [_as_var(p) for p in parts]
    if not parts:
        raise ShapeError("concat_rows needs at least one part")
    cols = parts[0].cols
    if any(p.cols != cols for p in parts):
        raise ShapeError("concat_rows parts disagree on column count")
    splits = np.cumsum([p.rows for p in parts])[:-1]

    def vjp(g: Array):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, splits))

    return _make(np.concatenate([p.data for p in parts]), tuple(parts), vjp)


def concat_cols(parts: Sequence) -> Var:
    parts = [_as_var(p) for p in parts]
    if not parts:
        raise ShapeError("concat_cols needs at least one part")
    rows = parts[0].rows
    if any(p.rows != rows for p in parts):
        raise ShapeError("concat_cols parts disagree on row count")
    splits = np.cumsum([p.cols for p in parts])[:-1]

    def vjp(g: Array):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, splits, axis=1))

    return _make(np.concatenate([p.data for p in parts], axis=1), tuple(parts), vjp)
