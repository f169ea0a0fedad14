"""Pixel-wise and perceptual error metrics.

SSIM follows the standard Wang et al. parameterization: 11x11 Gaussian
window with sigma 1.5, K1 = 0.01, K2 = 0.03, symmetric edge padding, and
the reported value is the mean local SSIM clamped to [0, 1] (the raw mean
is kept alongside for debugging).  These constants are pinned here because
SSIM values are not comparable across implementations without them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ContractError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricReport:
    mae: float
    mse: float
    ssim: float
    scale: str = "normalized"   # or "denormalized"
    n: int = 1
    ssim_raw: float | None = None
    window_shrunk: bool = False

    def row(self):
        return {"mae": self.mae, "mse": self.mse, "ssim": self.ssim,
                "scale": self.scale, "n": self.n}


def _check_same_shape(a: np.ndarray, b: np.ndarray, op: str):
    if a.shape != b.shape:
        raise ContractError(f"{op}: shapes {a.shape} and {b.shape} differ")


def mae(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_shape(a, b, "mae")
    return float(np.mean(np.abs(a - b)))


def mse(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_shape(a, b, "mse")
    return float(np.mean((a - b) ** 2))


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _window_filter(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    out = correlate1d(img, kernel, axis=0, mode="reflect")
    return correlate1d(out, kernel, axis=1, mode="reflect")


def ssim(a, b, data_range: float) -> MetricReport:
    """Mean local SSIM of two 2-d images.

    Images smaller than the window get a shrunken (odd) window and the
    report is flagged.  Returns the full report; use ``.ssim`` for the
    clamped scalar.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_shape(a, b, "ssim")
    if a.ndim != 2:
        raise ContractError(f"ssim: expected 2-d images, got shape {a.shape}")
    if not data_range > 0:
        raise ContractError(f"ssim: data_range must be positive, got {data_range}")
    size = SSIM_WINDOW
    shrunk = False
    min_extent = min(a.shape)
    if min_extent < size:
        size = min_extent if min_extent % 2 == 1 else min_extent - 1
        if size < 1:
            raise ContractError(f"ssim: image {a.shape} too small for any window")
        shrunk = True
    kernel = _gaussian_kernel(size, SSIM_SIGMA)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a = _window_filter(a, kernel)
    mu_b = _window_filter(b, kernel)
    aa = _window_filter(a * a, kernel)
    bb = _window_filter(b * b, kernel)
    ab = _window_filter(a * b, kernel)
    var_a = aa - mu_a * mu_a
    var_b = bb - mu_b * mu_b
    cov = ab - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    raw = float(np.mean(num / den))
    return MetricReport(mae=mae(a, b), mse=mse(a, b),
                        ssim=float(np.clip(raw, 0.0, 1.0)),
                        ssim_raw=raw, window_shrunk=shrunk)


def ssim_value(a, b, data_range: float) -> float:
    return ssim(a, b, data_range).ssim


def ssim_nd(a, b, data_range: float) -> float:
    """Mean 2-d SSIM over the leading axes of stacked images (..., H, W)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_shape(a, b, "ssim")
    if a.ndim == 2:
        return ssim_value(a, b, data_range)
    lead = a.shape[:-2]
    vals = [ssim_value(a[idx], b[idx], data_range) for idx in np.ndindex(*lead)]
    return float(np.mean(vals))


def report_pair(pred: np.ndarray, target: np.ndarray, data_range: float,
                scale: str = "normalized") -> MetricReport:
    """MAE/MSE over all elements plus mean 2-d SSIM over leading axes."""
    return MetricReport(mae=mae(pred, target), mse=mse(pred, target),
                        ssim=ssim_nd(pred, target, data_range), scale=scale)
