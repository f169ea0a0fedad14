"""First-order norm+linear autoregression of feature maps.

A single latent vector placed at grid origin (0, 0) is expanded into a
C x H x W feature map by a two-direction recurrence with square generator
matrices A (x direction) and B (y direction):

    row y = 0:      z(x+1, 0) = z(x, 0) + A @ n(z(x, 0))
    each column x:  z(x, y+1) = z(x, y) + B @ n(z(x, y))

where ``n`` is per-position channel normalization in "normalized" mode and
the identity in "linear" mode.  In linear mode the map has the closed form
z(x, y) = (I+B)^y (I+A)^x v, which the tests use as an oracle.

The scan order (row first via A, then columns via B) is one fixed
discretization of the underlying first-order relations; it is part of this
module's contract because the closed form and the finite-difference
analyzers depend on it.

The same kernel backs two surfaces: plain numpy functions returning
:class:`FeatureMap` for analysis, and :func:`autoregress_op`, a fused
autodiff op whose hand-derived reverse recurrence (including the
normalization Jacobian) trains v, A, and B.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError, NumericError

NORM_EPS = ad.NORM_EPS


@dataclass(frozen=True)
class CoefficientMatrices:
    """The two generator matrices; immutable and shared wherever reused.

    One instance drives every modality that participates in a shared
    autoregression: the engine has no notion of per-modality generators.
    """

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ContractError(f"A must be square, got {a.shape}")
        if b.shape != a.shape:
            raise ContractError(f"A and B must have identical shape, got {a.shape} vs {b.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise NumericError("coefficient matrices contain non-finite entries")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def channels(self) -> int:
        return self.a.shape[0]


@dataclass
class FeatureMap:
    """C x H x W grid grown from an initial vector pinned at grid (0, 0)."""

    values: np.ndarray  # (C, H, W)
    origin: tuple = (0, 0)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def initial_vector(self) -> np.ndarray:
        return self.values[:, 0, 0]


def channel_normalize(column: np.ndarray) -> np.ndarray:
    """(x - mean) / (population std + 1e-6) over the channel axis (last)."""
    column = np.asarray(column)
    if column.shape[-1] < 2:
        raise ContractError(f"channel_normalize: needs C >= 2 channels, got shape {column.shape}")
    mu = column.mean(axis=-1, keepdims=True)
    cen = column - mu
    sigma = np.sqrt((cen * cen).mean(axis=-1, keepdims=True))
    return cen / (sigma + NORM_EPS)


def _normalize_slab(slab: np.ndarray, normalized: bool) -> np.ndarray:
    """Channel normalization over the last axis of an arbitrary slab."""
    if not normalized:
        return slab
    mu = slab.mean(axis=-1, keepdims=True)
    cen = slab - mu
    sigma = np.sqrt((cen * cen).mean(axis=-1, keepdims=True))
    return cen / (sigma + slab.dtype.type(NORM_EPS))


def _scan_kernel(v: np.ndarray, a: np.ndarray, b: np.ndarray, height: int, width: int,
                 normalized: bool, keep_normed: bool):
    """Run the recurrence for a batch of initial vectors.

    v: (N, C).  Returns z of shape (H, W, N, C) and, when ``keep_normed``,
    the per-cell normalized columns the reverse pass consumes.
    """
    n, c = v.shape
    z = np.empty((height, width, n, c), dtype=v.dtype)
    normed = np.empty_like(z) if keep_normed else None
    at = np.ascontiguousarray(a.T)
    bt = np.ascontiguousarray(b.T)
    z[0, 0] = v

    for x in range(width - 1):
        ncol = _normalize_slab(z[0, x], normalized)
        nxt = z[0, x] + ncol @ at
        if not np.all(np.isfinite(nxt)):
            raise NumericError(f"autoregression diverged first at grid (x={x + 1}, y=0)")
        z[0, x + 1] = nxt
    for y in range(height - 1):
        nrow = _normalize_slab(z[y], normalized)  # (W, N, C): advances every column at once
        if keep_normed:
            normed[y] = nrow
        nxt = z[y] + nrow @ bt
        if not np.all(np.isfinite(nxt)):
            raise NumericError(f"autoregression diverged first at grid row y={y + 1}")
        z[y + 1] = nxt
    if keep_normed:
        normed[height - 1] = _normalize_slab(z[height - 1], normalized)
    return z, normed


def _validate_mode(mode: str) -> bool:
    if mode not in ("normalized", "linear"):
        raise ContractError(f"mode must be 'normalized' or 'linear', got {mode!r}")
    return mode == "normalized"


def autoregress(v: np.ndarray, coeffs: CoefficientMatrices, height: int, width: int,
                mode: str = "normalized") -> FeatureMap:
    """Expand one initial vector into a FeatureMap."""
    normalized = _validate_mode(mode)
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != coeffs.channels:
        raise ContractError(f"initial vector length {v.shape} != channel count {coeffs.channels}")
    if height < 1 or width < 1:
        raise ContractError(f"grid extents must be >= 1, got {height}x{width}")
    if normalized and coeffs.channels < 2:
        raise ContractError("normalized mode needs C >= 2 channels")
    z, _ = _scan_kernel(v[None], coeffs.a, coeffs.b, height, width, normalized, keep_normed=False)
    return FeatureMap(values=np.ascontiguousarray(z[:, :, 0, :].transpose(2, 0, 1)))


def multipath_autoregress(v: np.ndarray, paths: int, coeffs: CoefficientMatrices,
                          height: int, width: int, mode: str = "normalized") -> FeatureMap:
    """Split v into ``paths`` contiguous chunks, autoregress each with the
    same coefficients, and sum the resulting maps elementwise."""
    v = np.asarray(v, dtype=np.float64)
    if paths < 1:
        raise ContractError(f"paths must be >= 1, got {paths}")
    if v.ndim != 1 or v.shape[0] % paths:
        raise ContractError(f"initial vector length {v.shape[0]} not divisible by {paths} paths")
    c = v.shape[0] // paths
    if c != coeffs.channels:
        raise ContractError(f"per-path length {c} != channel count {coeffs.channels}")
    total = None
    for p in range(paths):
        fm = autoregress(v[p * c:(p + 1) * c], coeffs, height, width, mode)
        total = fm.values if total is None else total + fm.values
    return FeatureMap(values=total)


def closed_form_linear(v: np.ndarray, coeffs: CoefficientMatrices, height: int,
                       width: int) -> FeatureMap:
    """Exact linear-mode solution (I+B)^y (I+A)^x v by repeated matrix powers."""
    v = np.asarray(v, dtype=np.float64)
    c = coeffs.channels
    eye = np.eye(c)
    ia = eye + coeffs.a
    ib = eye + coeffs.b
    vals = np.empty((c, height, width))
    col = v.copy()
    vals[:, 0, 0] = col
    for x in range(1, width):
        col = ia @ col
        vals[:, 0, x] = col
    for y in range(1, height):
        vals[:, y, :] = ib @ vals[:, y - 1, :]
    return FeatureMap(values=vals)


# ---------------------------------------------------------------------------
# fused training op
# ---------------------------------------------------------------------------

def _norm_jacobian_T(upstream: np.ndarray, cen: np.ndarray, sigma: np.ndarray,
                     s: np.ndarray, c: int) -> np.ndarray:
    """J_n(z)^T @ upstream for the floored channel normalization.

    cen = z - mean(z), sigma = population std, s = sigma + eps; all are
    per-cell stats over the channel axis (last).  A constant column has
    sigma = 0 and cen = 0, which kills the curvature term exactly.
    """
    safe_sigma = np.where(sigma > 0, sigma, 1.0)
    gdotc = (upstream * cen).sum(axis=-1, keepdims=True)
    out = (upstream - upstream.mean(axis=-1, keepdims=True)) / s
    out -= cen * (gdotc / (c * safe_sigma * s * s))
    return out


def _scan_backward(z: np.ndarray, normed: np.ndarray, a: np.ndarray, b: np.ndarray,
                   upstream: np.ndarray, normalized: bool):
    """Reverse-mode pass through the recurrence.

    z, normed: (H, W, N, C) saved by the forward kernel.
    upstream:  (H, W, N, C) gradient of the loss in grid layout.
    Returns (grad_v (N, C), grad_A, grad_B).
    """
    height, width, n, c = z.shape
    dtype = z.dtype
    eps = dtype.type(NORM_EPS)
    grad_a = np.zeros_like(a)
    grad_b = np.zeros_like(b)
    ghat_row = np.empty((width, n, c), dtype=dtype)

    # column passes: top-to-bottom generation reversed, all columns at once
    ghat = upstream[height - 1].copy()  # (W, N, C)
    for y in range(height - 2, -1, -1):
        nz = normed[y]  # (W, N, C)
        # grad_B += sum over cells of outer(ghat_child, n(z))
        grad_b += np.einsum("wni,wnj->ij", ghat, nz, optimize=True)
        back = ghat @ b  # rows: (B^T g)^T = g @ B
        if normalized:
            cen = z[y] - z[y].mean(axis=-1, keepdims=True)
            sigma = np.sqrt((cen * cen).mean(axis=-1, keepdims=True))
            back = _norm_jacobian_T(back, cen, sigma, sigma + eps, c)
        ghat = upstream[y] + ghat + back
    ghat_row[:] = ghat  # gradients at row y = 0, columns folded in

    # row pass: right-to-left along y = 0
    g = ghat_row[width - 1]
    for x in range(width - 2, -1, -1):
        nz = normed[0, x]
        grad_a += g.T @ nz
        back = g @ a
        if normalized:
            cen = z[0, x] - z[0, x].mean(axis=-1, keepdims=True)
            sigma = np.sqrt((cen * cen).mean(axis=-1, keepdims=True))
            back = _norm_jacobian_T(back, cen, sigma, sigma + eps, c)
        g = ghat_row[x] + g + back
    return g, grad_a, grad_b


def autoregress_op(v: "ad.Tensor", a: "ad.Tensor", b: "ad.Tensor", height: int, width: int,
                   mode: str = "normalized", paths: int = 1) -> "ad.Tensor":
    """Differentiable multi-path autoregression for a batch of latents.

    v: (N, P*C) tensor; a, b: (C, C) tensors.  Output: (N, C, H, W), the
    elementwise sum over paths, each path run with the same a, b.
    Backward is the fused reverse recurrence rather than a per-cell tape.
    """
    normalized = _validate_mode(mode)
    if v.data.ndim != 2:
        raise ContractError(f"autoregress_op: v must be (N, D), got {v.data.shape}")
    ad._same_dtype("autoregress", v, a, b)
    c = a.data.shape[0]
    if a.data.shape != (c, c) or b.data.shape != (c, c):
        raise ContractError(f"autoregress_op: A, B must be square and equal-sized, got {a.data.shape}, {b.data.shape}")
    if v.data.shape[1] != paths * c:
        raise ContractError(
            f"autoregress_op: latent width {v.data.shape[1]} != paths {paths} * channels {c}")
    if height < 1 or width < 1:
        raise ContractError(f"grid extents must be >= 1, got {height}x{width}")
    n = v.data.shape[0]
    track = v.requires_grad or a.requires_grad or b.requires_grad
    saved = []
    total = np.zeros((height, width, n, c), dtype=v.data.dtype)
    for p in range(paths):
        chunk = np.ascontiguousarray(v.data[:, p * c:(p + 1) * c])
        z, normed = _scan_kernel(chunk, a.data, b.data, height, width, normalized,
                                 keep_normed=track)
        total += z
        if track:
            saved.append((z, normed))
    data = np.ascontiguousarray(total.transpose(2, 3, 0, 1))  # (N, C, H, W)

    def build(out):
        def bwd():
            g = out.grad
            if g is None:
                return
            upstream = np.ascontiguousarray(g.transpose(2, 3, 0, 1))  # (H, W, N, C)
            gv = np.empty_like(v.data) if v.requires_grad else None
            ga_total = np.zeros_like(a.data)
            gb_total = np.zeros_like(b.data)
            for p, (z, normed) in enumerate(saved):
                gchunk, ga, gb = _scan_backward(z, normed, a.data, b.data, upstream,
                                                normalized)
                ga_total += ga
                gb_total += gb
                if gv is not None:
                    gv[:, p * c:(p + 1) * c] = gchunk
            if v.requires_grad:
                ad._accum(v, gv)
            if a.requires_grad:
                ad._accum(a, ga_total)
            if b.requires_grad:
                ad._accum(b, gb_total)
        return bwd

    return ad._result("autoregress", data, (v, a, b), build)
