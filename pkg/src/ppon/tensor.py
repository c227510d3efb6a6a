"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Every value is a rank-4 float32 array in NCHW layout; scalars live in
1x1x1x1 tensors.  Primitive applications are recorded on a thread-local
tape and `backward` replays that tape in reverse, accumulating gradients
into leaf tensors.  Convolution and dense products run as float64 GEMMs
(im2col) and store float32 results, which keeps the forward numerically
close to a float64 reference and makes finite-difference checks stable.

No general broadcasting: binary operations require exactly matching
shapes, except that either operand may be a scalar (python number or a
1-element tensor).
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "Tape",
    "ShapeError",
    "no_grad",
    "active_tape",
    "scalar",
    "add",
    "sub",
    "mul",
    "div",
    "scalar_mul",
    "mean",
    "tsum",
    "absolute",
    "log",
    "sigmoid",
    "softplus",
    "leaky_relu",
    "pow_const",
    "clamp_min",
    "concat",
    "crop",
    "pad2d",
    "reshape",
    "flatten_spatial",
    "pixel_shuffle",
    "pixel_unshuffle",
    "avg_pool2d",
    "max_pool2d",
    "conv2d",
    "conv2d_output_size",
    "linear",
    "backward",
    "adam_step",
    "kaiming_uniform",
]


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class Tape:
    """Execution-ordered record of primitive applications for one graph.

    Entries are (output tensor, backward closure) pairs appended in forward
    order, so iterating in reverse visits every consumer before its
    producer.  `backward` consumes and clears the tape.
    """

    def __init__(self):
        self.entries = []
        self._no_grad_depth = 0

    @property
    def recording(self):
        return self._no_grad_depth == 0

    def record(self, out, backward_fn):
        self.entries.append((out, backward_fn))

    def clear(self):
        self.entries.clear()


_local = threading.local()


def active_tape() -> Tape:
    """The calling thread's tape (created on first use)."""
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = _local.tape = Tape()
    return tape


@contextmanager
def no_grad():
    """Disable tape recording; forwards inside run as plain array math."""
    tape = active_tape()
    tape._no_grad_depth += 1
    try:
        yield
    finally:
        tape._no_grad_depth -= 1


class Tensor:
    """Rank-4 NCHW float32 array with an optional same-shape gradient."""

    __slots__ = ("data", "requires_grad", "grad", "grad_accums")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim != 4:
            raise ShapeError(f"tensors are rank-4 NCHW, got shape {arr.shape}")
        if any(d < 1 for d in arr.shape):
            raise ShapeError(f"all dimensions must be >= 1, got {arr.shape}")
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        # counts gradient accumulations; frozen parameters must stay at 0
        self.grad_accums = 0

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1-element tensor, got {self.shape}")
        return float(self.data.flat[0])

    def detach(self) -> "Tensor":
        """Same values, no history, no grad requirement."""
        return Tensor(self.data)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g
        self.grad_accums += 1

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __abs__(self):
        return absolute(self)


class Parameter(Tensor):
    """Trainable tensor with Adam state and a freeze switch.

    While frozen the value bytes are never touched by `adam_step` and no
    gradient is ever computed for it (ops skip non-grad inputs).
    """

    __slots__ = ("frozen", "adam_m", "adam_v", "step_count")

    def __init__(self, data):
        super().__init__(data, requires_grad=True)
        self.frozen = False
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.step_count = 0

    def freeze(self):
        self.frozen = True
        self.requires_grad = False

    def unfreeze(self):
        self.frozen = False
        self.requires_grad = True


def scalar(value) -> Tensor:
    """Wrap a python number as a 1x1x1x1 tensor."""
    return Tensor(np.full((1, 1, 1, 1), float(value), dtype=np.float32))


def _coerce(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return scalar(x)
    raise TypeError(f"expected Tensor or number, got {type(x).__name__}")


def _make(out_data, inputs, backward_fn):
    """Build the op output and record it when any input tracks gradients."""
    tape = active_tape()
    needs = tape.recording and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs)
    if needs:
        tape.record(out, backward_fn)
    return out


def _binary_shape(a, b, op_name):
    if a.shape == b.shape:
        return
    if a.size == 1 or b.size == 1:
        return
    raise ShapeError(
        f"{op_name}: shapes {a.shape} and {b.shape} must match exactly "
        f"(only scalar-with-tensor broadcasting is supported)"
    )


def _reduce_to(g, shape):
    """Sum a gradient down to a scalar operand's shape if it was broadcast."""
    if g.shape == shape:
        return g
    return g.sum(dtype=np.float64).astype(np.float32).reshape(1, 1, 1, 1)


# ---------------------------------------------------------------------------
# elementwise & reduction suite


def add(a, b):
    a, b = _coerce(a), _coerce(b)
    _binary_shape(a, b, "add")

    def back(g):
        return [(a, _reduce_to(g, a.shape)), (b, _reduce_to(g, b.shape))]

    return _make(a.data + b.data, (a, b), back)


def sub(a, b):
    a, b = _coerce(a), _coerce(b)
    _binary_shape(a, b, "sub")

    def back(g):
        return [(a, _reduce_to(g, a.shape)), (b, _reduce_to(-g, b.shape))]

    return _make(a.data - b.data, (a, b), back)


def mul(a, b):
    a, b = _coerce(a), _coerce(b)
    _binary_shape(a, b, "mul")

    def back(g):
        out = []
        if a.requires_grad:
            out.append((a, _reduce_to(g * b.data, a.shape)))
        if b.requires_grad:
            out.append((b, _reduce_to(g * a.data, b.shape)))
        return out

    return _make(a.data * b.data, (a, b), back)


def div(a, b):
    a, b = _coerce(a), _coerce(b)
    _binary_shape(a, b, "div")

    def back(g):
        out = []
        if a.requires_grad:
            out.append((a, _reduce_to(g / b.data, a.shape)))
        if b.requires_grad:
            out.append((b, _reduce_to(-g * a.data / (b.data * b.data), b.shape)))
        return out

    return _make(a.data / b.data, (a, b), back)


def scalar_mul(x, s: float):
    s = float(s)

    def back(g):
        return [(x, g * np.float32(s))]

    return _make(x.data * np.float32(s), (x,), back)


def _normalize_axes(axes):
    if axes is None:
        return (0, 1, 2, 3)
    if isinstance(axes, int):
        axes = (axes,)
    axes = tuple(sorted(int(a) for a in axes))
    if any(a < 0 or a > 3 for a in axes):
        raise ShapeError(f"reduction axes must be in 0..3, got {axes}")
    return axes


def mean(x, axes=None):
    """Mean over the given axes (all by default), keeping rank 4.

    Accumulates in float64 so large reductions stay stable in float32
    pipelines.
    """
    axes = _normalize_axes(axes)
    out = x.data.mean(axis=axes, keepdims=True, dtype=np.float64).astype(np.float32)
    count = 1
    for a in axes:
        count *= x.shape[a]

    def back(g):
        return [(x, (np.broadcast_to(g, x.shape) / np.float32(count)).astype(np.float32))]

    return _make(out, (x,), back)


def tsum(x, axes=None):
    """Sum over the given axes (all by default), keeping rank 4."""
    axes = _normalize_axes(axes)
    out = x.data.sum(axis=axes, keepdims=True, dtype=np.float64).astype(np.float32)

    def back(g):
        return [(x, np.ascontiguousarray(np.broadcast_to(g, x.shape)))]

    return _make(out, (x,), back)


def absolute(x):
    def back(g):
        return [(x, g * np.sign(x.data))]

    return _make(np.abs(x.data), (x,), back)


def log(x):
    if np.any(x.data <= 0):
        raise ValueError("log: all elements must be positive")

    def back(g):
        return [(x, g / x.data)]

    return _make(np.log(x.data), (x,), back)


def _sigmoid_array(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(x):
    y = _sigmoid_array(x.data)

    def back(g):
        return [(x, g * y * (1.0 - y))]

    return _make(y, (x,), back)


def softplus(x):
    """log(1 + e^x) computed through the overflow-safe identity."""
    v = x.data
    y = np.maximum(v, 0) + np.log1p(np.exp(-np.abs(v)))

    def back(g):
        return [(x, g * _sigmoid_array(v))]

    return _make(y, (x,), back)


def leaky_relu(x, slope: float):
    if not 0.0 <= slope <= 1.0:
        raise ValueError(f"leaky_relu slope must be in [0, 1], got {slope}")
    y = np.where(x.data > 0, x.data, np.float32(slope) * x.data)

    def back(g):
        # subgradient at exactly 0 is the slope, for determinism
        factor = np.where(x.data > 0, np.float32(1.0), np.float32(slope))
        return [(x, g * factor)]

    return _make(y, (x,), back)


def pow_const(x, p: float):
    """Elementwise x**p for a fixed real exponent; requires x >= 0 for
    non-integer p."""
    p = float(p)
    if p != int(p) and np.any(x.data < 0):
        raise ValueError("pow_const: negative base with non-integer exponent")
    y = np.power(x.data, np.float32(p))

    def back(g):
        return [(x, g * np.float32(p) * np.power(x.data, np.float32(p - 1.0)))]

    return _make(y, (x,), back)


def clamp_min(x, floor_value: float):
    fv = np.float32(floor_value)

    def back(g):
        return [(x, g * (x.data > fv).astype(np.float32))]

    return _make(np.maximum(x.data, fv), (x,), back)


def concat(tensors, axis: int = 1):
    """Concatenate along the channel axis; other dims must match exactly."""
    if axis != 1:
        raise ShapeError("concat supports the channel axis only")
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if (t.shape[0], t.shape[2], t.shape[3]) != (ref[0], ref[2], ref[3]):
            raise ShapeError(
                f"concat: non-channel dims differ, {ref} vs {t.shape}"
            )
    widths = [t.shape[1] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=1)

    def back(g):
        grads = []
        offset = 0
        for t, w in zip(tensors, widths):
            if t.requires_grad:
                grads.append((t, np.ascontiguousarray(g[:, offset : offset + w])))
            offset += w
        return grads

    return _make(out, tuple(tensors), back)


def crop(x, top: int, left: int, height: int, width: int):
    n, c, h, w = x.shape
    if top < 0 or left < 0 or top + height > h or left + width > w:
        raise ShapeError(
            f"crop window ({top},{left},{height},{width}) outside input {h}x{w}"
        )

    def back(g):
        full = np.zeros_like(x.data)
        full[:, :, top : top + height, left : left + width] = g
        return [(x, full)]

    return _make(
        np.ascontiguousarray(x.data[:, :, top : top + height, left : left + width]),
        (x,),
        back,
    )


def pad2d(x, pad):
    """Zero-pad the spatial dims; `pad` is an int or (top, bottom, left, right)."""
    if isinstance(pad, int):
        pt = pb = pl = pr = pad
    else:
        pt, pb, pl, pr = pad
    if min(pt, pb, pl, pr) < 0:
        raise ShapeError(f"pad amounts must be >= 0, got {(pt, pb, pl, pr)}")
    out = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    n, c, h, w = x.shape

    def back(g):
        return [(x, np.ascontiguousarray(g[:, :, pt : pt + h, pl : pl + w]))]

    return _make(out, (x,), back)


def reshape(x, shape):
    shape = tuple(int(s) for s in shape)
    if len(shape) != 4:
        raise ShapeError(f"reshape target must be rank 4, got {shape}")
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"reshape from {x.shape} to {shape} changes element count")

    def back(g):
        return [(x, g.reshape(x.shape))]

    return _make(x.data.reshape(shape), (x,), back)


def flatten_spatial(x):
    """(N, C, H, W) -> (N, C*H*W, 1, 1)."""
    n, c, h, w = x.shape
    return reshape(x, (n, c * h * w, 1, 1))


# ---------------------------------------------------------------------------
# layout ops


def pixel_shuffle(x, r: int):
    """Depth-to-space: (N, C*r*r, H, W) -> (N, C, r*H, r*W)."""
    n, c, h, w = x.shape
    if r < 1:
        raise ShapeError(f"pixel_shuffle factor must be >= 1, got {r}")
    if c % (r * r) != 0:
        raise ShapeError(f"pixel_shuffle: channels {c} not divisible by r^2={r * r}")
    co = c // (r * r)
    out = (
        x.data.reshape(n, co, r, r, h, w)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(n, co, h * r, w * r)
    )

    def back(g):
        gi = (
            g.reshape(n, co, h, r, w, r)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(n, c, h, w)
        )
        return [(x, np.ascontiguousarray(gi))]

    return _make(np.ascontiguousarray(out), (x,), back)


def pixel_unshuffle(x, r: int):
    """Space-to-depth, the exact inverse of `pixel_shuffle`."""
    n, c, h, w = x.shape
    if r < 1:
        raise ShapeError(f"pixel_unshuffle factor must be >= 1, got {r}")
    if h % r != 0 or w % r != 0:
        raise ShapeError(f"pixel_unshuffle: spatial dims {h}x{w} not divisible by {r}")
    ho, wo = h // r, w // r
    out = (
        x.data.reshape(n, c, ho, r, wo, r)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(n, c * r * r, ho, wo)
    )

    def back(g):
        gi = (
            g.reshape(n, c, r, r, ho, wo)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(n, c, h, w)
        )
        return [(x, np.ascontiguousarray(gi))]

    return _make(np.ascontiguousarray(out), (x,), back)


def avg_pool2d(x, k: int = 2):
    """Non-overlapping k x k mean pooling; trailing rows/cols are dropped."""
    n, c, h, w = x.shape
    ho, wo = h // k, w // k
    if ho < 1 or wo < 1:
        raise ShapeError(f"avg_pool2d: input {h}x{w} smaller than window {k}")
    v = x.data[:, :, : ho * k, : wo * k].reshape(n, c, ho, k, wo, k)
    out = v.mean(axis=(3, 5), dtype=np.float64).astype(np.float32)

    def back(g):
        gi = np.zeros_like(x.data)
        expanded = np.repeat(np.repeat(g, k, axis=2), k, axis=3) / np.float32(k * k)
        gi[:, :, : ho * k, : wo * k] = expanded
        return [(x, gi)]

    return _make(out, (x,), back)


def max_pool2d(x, k: int = 2):
    """Non-overlapping k x k max pooling; ties route the gradient to the
    first maximum in row-major window order."""
    n, c, h, w = x.shape
    ho, wo = h // k, w // k
    if ho < 1 or wo < 1:
        raise ShapeError(f"max_pool2d: input {h}x{w} smaller than window {k}")
    windows = (
        x.data[:, :, : ho * k, : wo * k]
        .reshape(n, c, ho, k, wo, k)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, ho, wo, k * k)
    )
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]

    def back(g):
        gw = np.zeros((n, c, ho, wo, k * k), dtype=np.float32)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        gi = np.zeros_like(x.data)
        gi[:, :, : ho * k, : wo * k] = (
            gw.reshape(n, c, ho, wo, k, k)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, ho * k, wo * k)
        )
        return [(x, gi)]

    return _make(np.ascontiguousarray(out), (x,), back)


# ---------------------------------------------------------------------------
# convolution and dense products


def conv2d_output_size(size: int, k: int, stride: int, padding: int, dilation: int) -> int:
    return (size + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def _im2col_view(xp, kh, kw, stride, dilation, ho, wo):
    n, c = xp.shape[:2]
    sn, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, kh, kw, ho, wo),
        strides=(sn, sc, sh * dilation, sw * dilation, sh * stride, sw * stride),
        writeable=False,
    )


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0, dilation: int = 1):
    """2-D cross-correlation with zero padding, implemented as im2col + GEMM.

    `weight` is (Cout, Cin, kH, kW); `bias`, when given, is (Cout, 1, 1, 1).
    Inner products are accumulated in float64.
    """
    if stride < 1 or dilation < 1:
        raise ShapeError(f"stride/dilation must be >= 1, got {stride}/{dilation}")
    if padding < 0:
        raise ShapeError(f"padding must be >= 0, got {padding}")
    n, cin, h, w = x.shape
    cout, cin_w, kh, kw = weight.shape
    if cin != cin_w:
        raise ShapeError(
            f"conv2d: input channels {cin} != weight input channels {cin_w}"
        )
    if bias is not None and bias.shape != (cout, 1, 1, 1):
        raise ShapeError(
            f"conv2d: bias shape {bias.shape} must be ({cout}, 1, 1, 1)"
        )
    ho = conv2d_output_size(h, kh, stride, padding, dilation)
    wo = conv2d_output_size(w, kw, stride, padding, dilation)
    if ho < 1 or wo < 1:
        raise ShapeError(
            f"conv2d: output would be {ho}x{wo} for input {h}x{w}, "
            f"kernel {kh}x{kw}, stride {stride}, pad {padding}, dilation {dilation}"
        )

    if padding:
        xp = np.zeros((n, cin, h + 2 * padding, w + 2 * padding), dtype=np.float32)
        xp[:, :, padding : padding + h, padding : padding + w] = x.data
    else:
        xp = x.data
    cols64 = _im2col_view(xp, kh, kw, stride, dilation, ho, wo).astype(np.float64)
    cols64 = cols64.reshape(n, cin * kh * kw, ho * wo)
    w2_64 = weight.data.reshape(cout, cin * kh * kw).astype(np.float64)
    out = np.matmul(w2_64[None], cols64).astype(np.float32).reshape(n, cout, ho, wo)
    if bias is not None:
        out += bias.data.reshape(1, cout, 1, 1)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    tape = active_tape()
    if not (tape.recording and any(t.requires_grad for t in inputs)):
        return Tensor(out)

    # backward runs in float32; only the forward inner products need the
    # 64-bit accumulation
    cols = cols64.astype(np.float32)
    del cols64
    w2 = weight.data.reshape(cout, cin * kh * kw)

    def back(g):
        grads = []
        gm = g.reshape(n, cout, ho * wo)
        if weight.requires_grad:
            dw = np.matmul(gm, cols.transpose(0, 2, 1)).sum(axis=0)
            grads.append((weight, dw.reshape(weight.shape)))
        if bias is not None and bias.requires_grad:
            db = g.sum(axis=(0, 2, 3), dtype=np.float64)
            grads.append((bias, db.astype(np.float32).reshape(bias.shape)))
        if x.requires_grad:
            dcols = np.matmul(w2.T[None], gm).reshape(n, cin, kh, kw, ho, wo)
            gpad = np.zeros(
                (n, cin, h + 2 * padding, w + 2 * padding), dtype=np.float32
            )
            for ki in range(kh):
                rows = slice(ki * dilation, ki * dilation + (ho - 1) * stride + 1, stride)
                for kj in range(kw):
                    cols_sl = slice(
                        kj * dilation, kj * dilation + (wo - 1) * stride + 1, stride
                    )
                    gpad[:, :, rows, cols_sl] += dcols[:, :, ki, kj]
            gx = gpad[:, :, padding : padding + h, padding : padding + w]
            grads.append((x, np.ascontiguousarray(gx)))
        return grads

    return _make(out, inputs, back)


def linear(x, weight, bias=None):
    """Dense layer on (N, Cin, 1, 1); weight is (Cout, Cin, 1, 1)."""
    n, cin, h, w = x.shape
    if (h, w) != (1, 1):
        raise ShapeError(f"linear expects (N, C, 1, 1) input, got {x.shape}")
    cout, cin_w = weight.shape[0], weight.shape[1]
    if weight.shape[2:] != (1, 1) or cin_w != cin:
        raise ShapeError(
            f"linear: weight shape {weight.shape} incompatible with input {x.shape}"
        )
    if bias is not None and bias.shape != (cout, 1, 1, 1):
        raise ShapeError(f"linear: bias shape {bias.shape} must be ({cout}, 1, 1, 1)")
    x2 = x.data.reshape(n, cin).astype(np.float64)
    w2 = weight.data.reshape(cout, cin).astype(np.float64)
    out = (x2 @ w2.T).astype(np.float32).reshape(n, cout, 1, 1)
    if bias is not None:
        out += bias.data.reshape(1, cout, 1, 1)

    inputs = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        grads = []
        g2 = g.reshape(n, cout).astype(np.float64)
        if x.requires_grad:
            grads.append((x, (g2 @ w2).astype(np.float32).reshape(x.shape)))
        if weight.requires_grad:
            grads.append((weight, (g2.T @ x2).astype(np.float32).reshape(weight.shape)))
        if bias is not None and bias.requires_grad:
            db = g2.sum(axis=0).astype(np.float32).reshape(bias.shape)
            grads.append((bias, db))
        return grads

    return _make(out, inputs, back)


# ---------------------------------------------------------------------------
# backward pass and optimizer


def backward(loss):
    """Run reverse-mode accumulation from a scalar loss.

    Gradients are accumulated (+=) into every reachable leaf with
    `requires_grad`; the tape is consumed.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a 1-element loss, got shape {loss.shape}")
    tape = active_tape()
    if not tape.entries:
        raise RuntimeError("backward: tape is empty")
    produced = {id(out) for out, _ in tape.entries}
    if id(loss) not in produced:
        tape.clear()
        raise RuntimeError("backward: loss was not produced by recorded operations")

    grads = {id(loss): np.ones_like(loss.data)}
    try:
        for out, back_fn in reversed(tape.entries):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for t, gt in back_fn(g):
                if gt is None or not t.requires_grad:
                    continue
                if id(t) in produced:
                    prev = grads.get(id(t))
                    grads[id(t)] = gt if prev is None else prev + gt
                else:
                    t._accumulate(gt)
    finally:
        tape.clear()


def adam_step(params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """Bias-corrected Adam update; frozen parameters are skipped entirely
    and processed gradients are cleared."""
    for p in params:
        if p.frozen:
            continue
        if p.grad is None:
            continue
        g = p.grad
        p.step_count += 1
        t = p.step_count
        p.adam_m += (1.0 - beta1) * (g - p.adam_m)
        p.adam_v += (1.0 - beta2) * (g * g - p.adam_v)
        m_hat = p.adam_m / (1.0 - beta1**t)
        v_hat = p.adam_v / (1.0 - beta2**t)
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(np.float32)
        p.grad = None


def kaiming_uniform(rng, shape, fan_in: int, slope: float = 0.2):
    """Fan-in scaled uniform init with the leaky-rectifier gain."""
    gain = math.sqrt(2.0 / (1.0 + slope * slope))
    bound = gain * math.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)
