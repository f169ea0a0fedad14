"""Simultaneous iterative reconstruction (SIRT) baseline.

The update is the row/column-normalized Landweber step

    x <- x + omega * C * A^T * R * (p - A x)

with R = diag(1 / row sums of A) and C = diag(1 / column sums of A).
Rays that miss the image (zero rows) are excluded from R; pixels no ray
traverses (zero columns) are frozen at their initial value.  A
nonnegativity clamp after each iteration is on by default because
attenuation images are physical; it can be disabled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import ConfigError
from .projector import ScanGeometry, Sinogram, system_matrix


@dataclass
class SirtState:
    image: np.ndarray          # current flat estimate
    iteration: int
    row_norm: np.ndarray       # R diagonal (zero for null rays)
    col_norm: np.ndarray       # C diagonal (zero for uncovered pixels)
    omega: float


@dataclass
class SirtResult:
    image: np.ndarray          # (H, W)
    residuals: list = field(default_factory=list)  # ||p - A x_k||_2, k = 0..iters
    state: SirtState | None = None


def sirt_system(mat: sparse.csr_matrix, data: np.ndarray, iters: int = 200,
                omega: float = 1.0, x0: np.ndarray | None = None,
                clamp_nonnegative: bool = True) -> SirtResult:
    """Run SIRT against an explicit system matrix (rays x pixels)."""
    if not 0.0 < omega < 2.0:
        raise ConfigError(f"omega must be in (0, 2), got {omega}")
    if iters < 1:
        raise ConfigError(f"iters must be >= 1, got {iters}")
    if mat.nnz == 0:
        raise ConfigError("system matrix is all-zero: no ray intersects the image")
    data = np.asarray(data, dtype=np.float64).reshape(-1)
    row_sums = np.asarray(mat.sum(axis=1)).reshape(-1)
    col_sums = np.asarray(mat.sum(axis=0)).reshape(-1)
    with np.errstate(divide="ignore"):
        row_norm = np.where(row_sums > 0, 1.0 / row_sums, 0.0)
        col_norm = np.where(col_sums > 0, 1.0 / col_sums, 0.0)
    x = np.zeros(mat.shape[1]) if x0 is None else np.asarray(x0, dtype=np.float64).reshape(-1).copy()
    state = SirtState(image=x, iteration=0, row_norm=row_norm, col_norm=col_norm, omega=omega)
    frozen = col_norm == 0
    x_frozen = x[frozen].copy()
    residuals = []
    resid = data - mat @ x
    residuals.append(float(np.linalg.norm(resid)))
    for k in range(iters):
        x += omega * col_norm * (mat.T @ (row_norm * resid))
        if clamp_nonnegative:
            np.maximum(x, 0.0, out=x)
        x[frozen] = x_frozen
        state.iteration = k + 1
        resid = data - mat @ x
        residuals.append(float(np.linalg.norm(resid)))
    return SirtResult(image=x, residuals=residuals, state=state)


def sirt(sino: Sinogram, geometry: ScanGeometry | None = None, grid_shape: tuple = None,
         iters: int = 200, omega: float = 1.0, dx: float = 1.0,
         x0: np.ndarray | None = None, clamp_nonnegative: bool = True) -> SirtResult:
    """Reconstruct an image from a sinogram over the given grid."""
    geometry = geometry or sino.geometry
    if grid_shape is None:
        raise ConfigError("sirt: grid_shape is required")
    mat = system_matrix(geometry, grid_shape, dx)
    result = sirt_system(mat, sino.values, iters=iters, omega=omega, x0=x0,
                         clamp_nonnegative=clamp_nonnegative)
    result.image = result.image.reshape(grid_shape)
    return result
