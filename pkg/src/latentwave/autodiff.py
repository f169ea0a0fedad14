"""Minimal reverse-mode automatic differentiation over dense numpy tensors.

The engine is a tape: primitives execute eagerly on numpy arrays and, when a
``Graph`` is active and an input requires gradients, append a backward
closure to the tape.  ``Graph.backward`` replays the tape in exact reverse
order, so accumulation order is deterministic for a fixed forward pass.

Conventions
-----------
* float32 for training, float64 for verification; operands of one
  primitive must share a dtype.
* No implicit broadcasting except (a) python/0-d scalars and (b) a
  smaller operand whose shape aligns with the trailing axes of the other
  (extents equal or 1).  Anything else needs an explicit ``reshape``.
* A non-finite result raises :class:`NumericError` while finite checks are
  enabled (they are by default; the training loop disables them inside the
  hot path and checks losses and gradients per step instead).
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager

import numpy as np
from scipy.special import erf

from .errors import ContractError, NumericError

NORM_EPS = 1e-6  # std floor shared with the autoregression engine

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

_state = threading.local()


def _graph_stack():
    stack = getattr(_state, "graphs", None)
    if stack is None:
        stack = []
        _state.graphs = stack
    return stack


_finite_checks = True


def set_finite_checks(enabled: bool) -> bool:
    """Toggle per-operation finiteness validation; returns the old value."""
    global _finite_checks
    old = _finite_checks
    _finite_checks = bool(enabled)
    return old


@contextmanager
def finite_checks(enabled: bool):
    old = set_finite_checks(enabled)
    try:
        yield
    finally:
        set_finite_checks(old)


class Tensor:
    """A dense array with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data: np.ndarray, requires_grad: bool = False):
        self.data = data
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    """Create a leaf tensor; validates finiteness of the initial data."""
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericError("tensor creation from non-finite data")
    return Tensor(arr, requires_grad)


class Graph:
    """An ordered tape of op records; backward replays it exactly reversed."""

    def __init__(self):
        self._tape = []  # list of (op name, backward closure)
        self._consumed = False

    def __enter__(self):
        _graph_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _graph_stack()
        if not stack or stack[-1] is not self:
            raise ContractError("graph context exited out of order")
        stack.pop()
        return False

    @property
    def ops(self):
        return [name for name, _ in self._tape]

    def backward(self, output: Tensor, seed=1.0):
        """Accumulate d<seed, output>/d(leaf) into each leaf's ``grad``.

        Raises on a second call: gradients never accumulate silently
        across backward passes.
        """
        if self._consumed:
            raise ContractError("backward already ran on this graph; build a new graph")
        self._consumed = True
        if np.isscalar(seed):
            seed_arr = np.full(output.data.shape, seed, dtype=output.data.dtype)
        else:
            seed_arr = np.asarray(seed, dtype=output.data.dtype)
            if seed_arr.shape != output.data.shape:
                raise ContractError(
                    f"seed shape {seed_arr.shape} does not match output shape {output.data.shape}"
                )
        output.grad = seed_arr if output.grad is None else output.grad + seed_arr
        for _, fn in reversed(self._tape):
            fn()


def _active() -> Graph | None:
    stack = _graph_stack()
    return stack[-1] if stack else None


def _check_finite(arr: np.ndarray, op: str):
    if _finite_checks and not np.all(np.isfinite(arr)):
        raise NumericError(f"{op}: non-finite values in result")


def _accum(t: Tensor, g: np.ndarray):
    t.grad = g if t.grad is None else t.grad + g


def _result(op: str, data: np.ndarray, inputs, backward_builder) -> Tensor:
    """Wrap a primitive result; records a backward closure when tracking."""
    _check_finite(data, op)
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires)
    graph = _active()
    if requires and graph is not None:
        graph._tape.append((op, backward_builder(out)))
    return out


def _same_dtype(op: str, *tensors: Tensor):
    dtypes = {t.data.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ContractError(f"{op}: mixed dtypes {sorted(map(str, dtypes))}")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape`` (trailing alignment)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _elementwise_shapes_ok(a: Tensor, b: Tensor) -> bool:
    sa, sb = a.data.shape, b.data.shape
    if sa == sb or a.data.ndim == 0 or b.data.ndim == 0:
        return True
    small, big = (sa, sb) if len(sa) <= len(sb) else (sb, sa)
    tail = big[len(big) - len(small):]
    return all(m == n or m == 1 for m, n in zip(small, tail))


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype("add", a, b)
    if not _elementwise_shapes_ok(a, b):
        raise ContractError(f"add: shapes {a.data.shape} and {b.data.shape} do not align")
    data = a.data + b.data

    def build(out):
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                _accum(a, _unbroadcast(g, a.data.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(g, b.data.shape))
        return bwd

    return _result("add", data, (a, b), build)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype("mul", a, b)
    if not _elementwise_shapes_ok(a, b):
        raise ContractError(f"mul: shapes {a.data.shape} and {b.data.shape} do not align")
    data = a.data * b.data

    def build(out):
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                _accum(a, _unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(g * a.data, b.data.shape))
        return bwd

    return _result("mul", data, (a, b), build)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    data = a.data * a.data.dtype.type(c)

    def build(out):
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                _accum(a, g * a.data.dtype.type(c))
        return bwd

    return _result("scale", data, (a,), build)


def sub(a: Tensor, b: Tensor) -> Tensor:
    """Composition helper: a + (-1) * b."""
    return add(a, scale(b, -1.0))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype("matmul", a, b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ContractError(
            f"matmul: operands must be at least 2-d, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ContractError(f"matmul: inner extents differ: {a.data.shape} @ {b.data.shape}")
    data = np.matmul(a.data, b.data)

    def build(out):
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
                _accum(a, _unbroadcast(ga, a.data.shape))
            if b.requires_grad:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
                _accum(b, _unbroadcast(gb, b.data.shape))
        return bwd

    return _result("matmul", data, (a, b), build)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.data.size:
        raise ContractError(f"reshape: cannot view {a.data.shape} as {shape}")
    data = a.data.reshape(shape)

    def build(out):
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                _accum(a, g.reshape(a.data.shape))
        return bwd

    return _result("reshape", data, (a,), build)


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(int(x) for x in axes)
    if sorted(axes) != list(range(a.data.ndim)):
        raise ContractError(f"transpose: {axes} is not a permutation of axes of {a.data.shape}")
    data = np.transpose(a.data, axes)
    inv = np.argsort(axes)

    def build(out):
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                _accum(a, np.transpose(g, inv))
        return bwd

    return _result("transpose", data, (a,), build)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0)

    def build(out):
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                _accum(a, g * (a.data > 0))
        return bwd

    return _result("relu", data, (a,), build)


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) GELU: x * Phi(x)."""
    x = a.data
    phi_cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    data = x * phi_cdf

    def build(out):
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
                _accum(a, g * (phi_cdf + x * pdf))
        return bwd

    return _result("gelu", data, (a,), build)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def build(out):
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                s = out.data
                dot = (g * s).sum(axis=-1, keepdims=True)
                _accum(a, s * (g - dot))
        return bwd

    return _result("softmax", data, (a,), build)


def channel_norm(a: Tensor) -> Tensor:
    """Zero-mean unit-std normalization over the last axis.

    Population std with a floor of ``NORM_EPS`` added before division, so a
    constant channel maps to zeros instead of dividing by zero.
    """
    c_extent = a.data.shape[-1] if a.data.ndim else 0
    if c_extent < 2:
        raise ContractError(f"channel_norm: needs at least 2 channels, got shape {a.data.shape}")
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    cen = x - mu
    sigma = np.sqrt((cen * cen).mean(axis=-1, keepdims=True))
    s = sigma + x.dtype.type(NORM_EPS)
    data = cen / s

    def build(out):
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                safe_sigma = np.where(sigma > 0, sigma, 1.0)
                gdotc = (g * cen).sum(axis=-1, keepdims=True)
                gx = (g - g.mean(axis=-1, keepdims=True)) / s
                gx -= cen * (gdotc / (c_extent * safe_sigma * s * s))
                _accum(a, gx)
        return bwd

    return _result("channel_norm", data, (a,), build)


def maxout(*inputs: Tensor) -> Tensor:
    """Elementwise max over k >= 2 same-shaped inputs; ties go to the
    lowest-index input so gradient routing is deterministic."""
    if len(inputs) < 2:
        raise ContractError("maxout: needs at least two inputs")
    shape = inputs[0].data.shape
    for t in inputs[1:]:
        if t.data.shape != shape:
            raise ContractError(f"maxout: shapes differ: {shape} vs {t.data.shape}")
    _same_dtype("maxout", *inputs)
    stacked = np.stack([t.data for t in inputs])
    data = stacked.max(axis=0)

    def build(out):
        def bwd():
            g = out.grad
            if g is None:
                return
            winner = np.argmax(stacked, axis=0)
            for i, t in enumerate(inputs):
                if t.requires_grad:
                    _accum(t, g * (winner == i))
        return bwd

    return _result("maxout", data, inputs, build)


def nearest_upsample2x(a: Tensor, layout: str = "NCHW") -> Tensor:
    """Nearest-neighbor x2 upsampling of the spatial axes of a 4-d tensor."""
    if a.data.ndim != 4:
        raise ContractError(f"nearest_upsample2x: expected a 4-d tensor, got {a.data.shape}")
    if layout == "NCHW":
        n, ch, h, w = a.data.shape
        data = np.ascontiguousarray(np.broadcast_to(
            a.data[:, :, :, None, :, None], (n, ch, h, 2, w, 2)).reshape(n, ch, 2 * h, 2 * w))

        def build(out):
            def bwd():
                g = out.grad
                if g is None:
                    return
                if a.requires_grad:
                    _accum(a, g.reshape(n, ch, h, 2, w, 2).sum(axis=(3, 5)))
            return bwd
    elif layout == "NHWC":
        n, h, w, ch = a.data.shape
        data = np.ascontiguousarray(np.broadcast_to(
            a.data[:, :, None, :, None, :], (n, h, 2, w, 2, ch)).reshape(n, 2 * h, 2 * w, ch))

        def build(out):
            def bwd():
                g = out.grad
                if g is None:
                    return
                if a.requires_grad:
                    _accum(a, g.reshape(n, h, 2, w, 2, ch).sum(axis=(2, 4)))
            return bwd
    else:
        raise ContractError(f"nearest_upsample2x: unknown layout {layout!r}")

    return _result("nearest_upsample2x", data, (a,), build)


def mean(a: Tensor) -> Tensor:
    data = np.asarray(a.data.mean(), dtype=a.data.dtype)

    def build(out):
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                _accum(a, np.full(a.data.shape, g / a.data.size, dtype=a.data.dtype))
        return bwd

    return _result("mean", data, (a,), build)


def tsum(a: Tensor) -> Tensor:
    data = np.asarray(a.data.sum(), dtype=a.data.dtype)

    def build(out):
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                _accum(a, np.full(a.data.shape, g, dtype=a.data.dtype))
        return bwd

    return _result("sum", data, (a,), build)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _conv_cols(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Gather (N, Ho, Wo, C*kh*kw) patches from a padded (N, C, Hp, Wp) array."""
    n, c, hp, wp = xp.shape
    sn, sc, sh, sw = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, ho, wo, c, kh, kw),
        strides=(sn, sh * stride, sw * stride, sc, sh, sw),
        writeable=False,
    )
    return view.reshape(n, ho, wo, c * kh * kw)


def _corr_rows_nhwc(src: np.ndarray, taps: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Sum over kernel taps of shifted src slices times per-tap channel maps.

    src: (N, H', W', Cs); taps: (kh, kw, Cs, Cd).  Each tap is one stacked
    matmul on a shifted view; with channels last the views keep their inner
    axes contiguous, which numpy's matmul handles at full speed.
    """
    kh, kw, _, cd = taps.shape
    n = src.shape[0]
    out = np.zeros((n, out_h, out_w, cd), dtype=src.dtype)
    for i in range(kh):
        for j in range(kw):
            out += src[:, i:i + out_h, j:j + out_w, :] @ taps[i, j]
    return out


def _conv2d_nhwc(x: Tensor, w: Tensor, pad: int) -> Tensor:
    """Stride-1 convolution with channels-last activations (decoder fast path)."""
    n, h, wdt, cin = x.data.shape
    cout, cin_w, kh, kw = w.data.shape
    if cin != cin_w:
        raise ContractError(f"conv2d: input channels {cin} != kernel channels {cin_w}")
    ho = h + 2 * pad - kh + 1
    wo = wdt + 2 * pad - kw + 1
    if ho < 1 or wo < 1:
        raise ContractError(f"conv2d: kernel {(kh, kw)} does not fit input {(h, wdt)} with pad {pad}")
    if pad:
        xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    else:
        xp = x.data
    w_taps = np.ascontiguousarray(w.data.transpose(2, 3, 1, 0))  # (kh, kw, Cin, Cout)
    data = _corr_rows_nhwc(xp, w_taps, ho, wo)

    def build(out):
        def bwd():
            g = out.grad
            if g is None:
                return
            if w.requires_grad:
                gm = g.reshape(-1, cout)
                gw = np.empty((kh, kw, cin, cout), dtype=w.data.dtype)
                for i in range(kh):
                    for j in range(kw):
                        sl = np.ascontiguousarray(xp[:, i:i + ho, j:j + wo, :]).reshape(-1, cin)
                        gw[i, j] = sl.T @ gm
                _accum(w, np.ascontiguousarray(gw.transpose(3, 2, 0, 1)))
            if x.requires_grad:
                gp = np.pad(g, ((0, 0), (kh - 1 - pad, kh - 1 - pad),
                                (kw - 1 - pad, kw - 1 - pad), (0, 0)))
                wf = np.ascontiguousarray(
                    w.data[:, :, ::-1, ::-1].transpose(2, 3, 0, 1))  # (kh, kw, Cout, Cin)
                _accum(x, _corr_rows_nhwc(gp, wf, h, wdt))
        return bwd

    return _result("conv2d", data, (x, w), build)


def conv2d(x: Tensor, w: Tensor, stride: int = 1, pad: int = 0, layout: str = "NCHW") -> Tensor:
    """2-d cross-correlation with a (Cout, Cin, kh, kw) kernel.

    layout "NCHW" (default) accepts any stride via patch gather + matmul;
    layout "NHWC" is the fast stride-1 path used by the decoders.
    """
    _same_dtype("conv2d", x, w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ContractError(f"conv2d: expected 4-d input and kernel, got {x.data.shape} and {w.data.shape}")
    if layout not in ("NCHW", "NHWC"):
        raise ContractError(f"conv2d: unknown layout {layout!r}")
    kh, kw = w.data.shape[2], w.data.shape[3]
    if int(pad) > kh - 1 or int(pad) > kw - 1:
        raise ContractError(f"conv2d: pad {pad} exceeds kernel extent {(kh, kw)} minus one")
    if layout == "NHWC":
        if stride != 1:
            raise ContractError("conv2d: NHWC layout supports stride 1 only")
        return _conv2d_nhwc(x, w, int(pad))
    n, cin, h, wdt = x.data.shape
    cout, cin_w, kh, kw = w.data.shape
    if cin != cin_w:
        raise ContractError(f"conv2d: input channels {cin} != kernel channels {cin_w}")
    stride = int(stride)
    pad = int(pad)
    if stride < 1 or pad < 0:
        raise ContractError(f"conv2d: invalid stride={stride} pad={pad}")
    if pad > kh - 1 or pad > kw - 1:
        raise ContractError(f"conv2d: pad {pad} exceeds kernel extent {(kh, kw)} minus one")
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wdt + 2 * pad - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ContractError(f"conv2d: kernel {(kh, kw)} does not fit input {(h, wdt)} with pad {pad}")

    if pad:
        xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    else:
        xp = x.data
    cols = _conv_cols(xp, kh, kw, stride, ho, wo)
    wf = w.data.reshape(cout, -1)
    data = np.ascontiguousarray(
        np.matmul(cols.reshape(-1, cols.shape[-1]), wf.T).reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)
    )

    def build(out):
        def bwd():
            g = out.grad
            if g is None:
                return
            gmat = g.transpose(0, 2, 3, 1).reshape(-1, cout)
            if w.requires_grad:
                # recompute patches instead of keeping the (large) col matrix alive
                if pad:
                    xpb = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
                else:
                    xpb = x.data
                colsb = _conv_cols(xpb, kh, kw, stride, ho, wo).reshape(-1, cin * kh * kw)
                _accum(w, np.matmul(gmat.T, colsb).reshape(cout, cin, kh, kw))
            if x.requires_grad:
                if stride == 1:
                    gp = np.pad(
                        g, ((0, 0), (0, 0), (kh - 1 - pad, kh - 1 - pad), (kw - 1 - pad, kw - 1 - pad))
                    )
                    wflip = w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(cin, -1)
                    gcols = _conv_cols(np.ascontiguousarray(gp), kh, kw, 1, h, wdt)
                    gx = np.matmul(gcols.reshape(-1, cout * kh * kw), wflip.T)
                    _accum(x, np.ascontiguousarray(gx.reshape(n, h, wdt, cin).transpose(0, 3, 1, 2)))
                else:
                    gx = np.zeros((n, cin, h + 2 * pad, wdt + 2 * pad), dtype=x.data.dtype)
                    gcol = np.matmul(gmat, wf).reshape(n, ho, wo, cin, kh, kw)
                    for iy in range(kh):
                        for ix in range(kw):
                            gx[:, :, iy:iy + stride * ho:stride, ix:ix + stride * wo:stride] += (
                                gcol[:, :, :, :, iy, ix].transpose(0, 3, 1, 2)
                            )
                    if pad:
                        gx = gx[:, :, pad:-pad, pad:-pad]
                    _accum(x, gx)
        return bwd

    return _result("conv2d", data, (x, w), build)


# ---------------------------------------------------------------------------
# primitive registry and dispatch
# ---------------------------------------------------------------------------

PRIMITIVES = {
    "matmul": matmul,
    "conv2d": conv2d,
    "add": add,
    "mul": mul,
    "scale": scale,
    "reshape": reshape,
    "transpose": transpose,
    "channel_norm": channel_norm,
    "softmax": softmax,
    "relu": relu,
    "gelu": gelu,
    "maxout": maxout,
    "nearest_upsample2x": nearest_upsample2x,
    "mean": mean,
    "sum": tsum,
}


def forward_primitive(kind: str, *inputs: Tensor, **kwargs) -> Tensor:
    """Dispatch a primitive by kind name."""
    try:
        fn = PRIMITIVES[kind]
    except KeyError:
        raise ContractError(f"unknown primitive kind {kind!r}") from None
    return fn(*inputs, **kwargs)


def backward(graph: Graph, output: Tensor, seed=1.0):
    """Module-level alias for :meth:`Graph.backward`."""
    graph.backward(output, seed)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def _needs_resample(kind: str | None, arrays, eps: float) -> bool:
    """Reject inputs sampled too close to a non-differentiable point."""
    margin = 10.0 * eps
    if kind == "relu":
        return any(np.any(np.abs(a) < margin) for a in arrays)
    if kind == "maxout":
        stacked = np.stack(arrays)
        part = np.partition(stacked, -2, axis=0)
        return bool(np.any(part[-1] - part[-2] < margin))
    return False


def grad_check(fn, shapes, eps: float = 1e-5, seed: int = 0, kind: str | None = None,
               max_retries: int = 5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` maps len(shapes) float64 tensors to one tensor; error per
    coordinate is |analytic - numeric| / (|analytic| + 1e-12).  Inputs that
    land on a non-differentiable point of ``kind`` are resampled a bounded
    number of times.
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ContractError(f"grad_check: eps {eps} outside [1e-7, 1e-3]")
    rng = np.random.default_rng(seed)
    for attempt in range(max_retries + 1):
        arrays = [rng.standard_normal(s) for s in shapes]
        if _needs_resample(kind, arrays, eps):
            continue
        inputs = [tensor(a, requires_grad=True) for a in arrays]
        with Graph() as g:
            out = fn(*inputs)
        up = rng.standard_normal(out.data.shape)
        g.backward(out, up)
        worst = 0.0
        for idx, t in enumerate(inputs):
            analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
            numeric = np.empty_like(t.data)
            flat = arrays[idx].reshape(-1)
            num_flat = numeric.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + eps
                fp = float(np.vdot(up, fn(*[tensor(a) for a in arrays]).data))
                flat[j] = orig - eps
                fm = float(np.vdot(up, fn(*[tensor(a) for a in arrays]).data))
                flat[j] = orig
                num_flat[j] = (fp - fm) / (2.0 * eps)
            err = np.abs(analytic - numeric) / (np.abs(analytic) + 1e-12)
            worst = max(worst, float(err.max()))
        return worst
    raise NumericError(f"grad_check: could not sample a differentiable point for {kind} "
                       f"after {max_retries} retries")
