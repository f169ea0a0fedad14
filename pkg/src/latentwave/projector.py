"""Line-integral projector over pixel grids with an exact adjoint.

Rays are traversed parametrically: every pixel-boundary crossing inside the
ray's in-box interval contributes a segment, and the weight of a pixel is
the exact intersection length.  Forward projection and backprojection use
the same weights, so the pair is an exact transpose of one another, and the
weights along a ray sum to the ray's in-box length by construction.

Coordinates: an H x W image occupies the physical box [0, W*dx] x
[0, H*dx]; pixel (row i, col j) covers [j, j+1) x [i, i+1) in pixel units,
with y increasing along rows.  Geometries are expressed in the same frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import ConfigError, ContractError, GeometryError

_CHUNK = 4096


@dataclass
class ScanGeometry:
    """Explicit source/detector positions plus the ray pairing."""

    sources: np.ndarray     # (ns, 2) physical (x, y)
    detectors: np.ndarray   # (nd, 2)
    pairing: np.ndarray     # (n_rays, 2) int: source index, detector index
    sino_shape: tuple
    kind: str = "custom"

    def __post_init__(self):
        self.sources = np.atleast_2d(np.asarray(self.sources, dtype=np.float64))
        self.detectors = np.atleast_2d(np.asarray(self.detectors, dtype=np.float64))
        self.pairing = np.asarray(self.pairing, dtype=np.int64)
        if self.pairing.ndim != 2 or self.pairing.shape[1] != 2:
            raise ContractError(f"pairing must be (n_rays, 2), got {self.pairing.shape}")
        starts = self.sources[self.pairing[:, 0]]
        ends = self.detectors[self.pairing[:, 1]]
        if np.any(np.all(starts == ends, axis=1)):
            raise GeometryError("degenerate ray: a source coincides with its detector")
        if int(np.prod(self.sino_shape)) != self.pairing.shape[0]:
            raise ContractError(
                f"sino shape {self.sino_shape} does not hold {self.pairing.shape[0]} rays")

    @property
    def n_rays(self) -> int:
        return self.pairing.shape[0]

    def ray_endpoints(self):
        return self.sources[self.pairing[:, 0]], self.detectors[self.pairing[:, 1]]

    def null_ray_mask(self, grid_shape, dx: float = 1.0) -> np.ndarray:
        """Rays that never intersect the image bounding box."""
        p, q = self.ray_endpoints()
        t0, t1 = _box_interval(p / dx, q / dx, grid_shape)
        return (t1 <= t0).reshape(self.sino_shape)


@dataclass
class Sinogram:
    values: np.ndarray
    geometry: ScanGeometry


def _box_interval(p, q, grid_shape):
    """Parameter interval [t0, t1] of each segment p + t (q - p) inside the box."""
    h, w = grid_shape
    u = q - p
    t0 = np.zeros(p.shape[0])
    t1 = np.ones(p.shape[0])
    for axis, extent in ((0, w), (1, h)):
        ua = u[:, axis]
        pa = p[:, axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (0.0 - pa) / ua
            tb = (extent - pa) / ua
        lo = np.minimum(ta, tb)
        hi = np.maximum(ta, tb)
        parallel = np.abs(ua) < 1e-300
        inside = (pa > 0) & (pa < extent)
        lo = np.where(parallel, np.where(inside, -np.inf, np.inf), lo)
        hi = np.where(parallel, np.where(inside, np.inf, -np.inf), hi)
        t0 = np.maximum(t0, lo)
        t1 = np.minimum(t1, hi)
    t0 = np.clip(t0, 0.0, 1.0)
    t1 = np.clip(t1, 0.0, 1.0)
    return t0, np.maximum(t1, t0)  # null rays collapse to t1 == t0


def _traverse_chunk(p, q, grid_shape, dx):
    """Segment weights and pixel indices for a chunk of rays.

    Returns (weights, pixel index) arrays of shape (n, K); zero weight
    marks padding.  Weights are physical intersection lengths.
    """
    h, w = grid_shape
    n = p.shape[0]
    u = q - p
    t0, t1 = _box_interval(p, q, grid_shape)
    planes_x = np.arange(w + 1, dtype=np.float64)
    planes_y = np.arange(h + 1, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = (planes_x[None, :] - p[:, 0:1]) / u[:, 0:1]
        ty = (planes_y[None, :] - p[:, 1:2]) / u[:, 1:2]
    tx = np.where(np.isfinite(tx), tx, t0[:, None])
    ty = np.where(np.isfinite(ty), ty, t0[:, None])
    ts = np.concatenate([tx, ty, t0[:, None], t1[:, None]], axis=1)
    np.clip(ts, t0[:, None], t1[:, None], out=ts)
    ts.sort(axis=1)
    dt = np.diff(ts, axis=1)
    tm = 0.5 * (ts[:, :-1] + ts[:, 1:])
    mx = p[:, 0:1] + tm * u[:, 0:1]
    my = p[:, 1:2] + tm * u[:, 1:2]
    ix = np.floor(mx).astype(np.int64)
    iy = np.floor(my).astype(np.int64)
    valid = (dt > 0) & (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    ray_len = np.sqrt((u * u).sum(axis=1))[:, None]
    weights = np.where(valid, dt * ray_len * dx, 0.0)
    pix = np.where(valid, iy * w + ix, 0)
    return weights, pix


def _iter_chunks(geometry, grid_shape, dx):
    p, q = geometry.ray_endpoints()
    p = p / dx
    q = q / dx
    for start in range(0, geometry.n_rays, _CHUNK):
        stop = min(start + _CHUNK, geometry.n_rays)
        weights, pix = _traverse_chunk(p[start:stop], q[start:stop], grid_shape, dx)
        yield start, stop, weights, pix


def radon_project(image: np.ndarray, geometry: ScanGeometry, dx: float = 1.0) -> Sinogram:
    """Exact line integrals of a pixel image along every geometry ray."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ContractError(f"radon_project: expected a 2-d image, got {image.shape}")
    flat = image.reshape(-1)
    out = np.empty(geometry.n_rays)
    for start, stop, weights, pix in _iter_chunks(geometry, image.shape, dx):
        out[start:stop] = (weights * flat[pix]).sum(axis=1)
    return Sinogram(values=out.reshape(geometry.sino_shape), geometry=geometry)


def backproject(sino: Sinogram, geometry: ScanGeometry | None = None,
                grid_shape: tuple = None, dx: float = 1.0) -> np.ndarray:
    """Exact adjoint of :func:`radon_project` (same weights, transposed)."""
    geometry = geometry or sino.geometry
    values = np.asarray(sino.values, dtype=np.float64).reshape(-1)
    if values.shape[0] != geometry.n_rays:
        raise ContractError(
            f"sinogram has {values.shape[0]} rays, geometry has {geometry.n_rays}")
    if grid_shape is None:
        raise ContractError("backproject: grid_shape is required")
    flat = np.zeros(int(np.prod(grid_shape)))
    for start, stop, weights, pix in _iter_chunks(geometry, grid_shape, dx):
        np.add.at(flat, pix.reshape(-1), (weights * values[start:stop, None]).reshape(-1))
    return flat.reshape(grid_shape)


def system_matrix(geometry: ScanGeometry, grid_shape, dx: float = 1.0) -> sparse.csr_matrix:
    """The full (n_rays x n_pixels) weight matrix as CSR; rows follow ray order."""
    n_pix = int(np.prod(grid_shape))
    blocks = []
    for start, stop, weights, pix in _iter_chunks(geometry, grid_shape, dx):
        n = stop - start
        keep = weights > 0
        counts = keep.sum(axis=1)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        blocks.append(sparse.csr_matrix(
            (weights[keep], pix[keep], indptr), shape=(n, n_pix)))
    mat = sparse.vstack(blocks, format="csr") if len(blocks) > 1 else blocks[0]
    mat.sum_duplicates()
    return mat


# ---------------------------------------------------------------------------
# geometry builders
# ---------------------------------------------------------------------------

def make_geometry(kind: str, grid_shape, dx: float = 1.0, **kwargs) -> ScanGeometry:
    """Deterministic scan geometries around an H x W image.

    kinds: ``parallel(views, detectors)``, ``fan(views, detectors, radius)``,
    ``tri_array(arrays, per_array, detectors)``.
    """
    if kind == "parallel":
        return parallel_geometry(grid_shape, dx=dx, **kwargs)
    if kind == "fan":
        return fan_geometry(grid_shape, dx=dx, **kwargs)
    if kind == "tri_array":
        return tri_array_geometry(grid_shape, dx=dx, **kwargs)
    raise ConfigError(f"unknown geometry kind {kind!r}")


def _check_counts(**counts):
    for name, value in counts.items():
        if int(value) < 1:
            raise ConfigError(f"geometry count {name} must be >= 1, got {value}")


def parallel_geometry(grid_shape, views: int, detectors: int, dx: float = 1.0) -> ScanGeometry:
    """Parallel-beam views over 180 degrees; the bank spans the image diagonal."""
    _check_counts(views=views, detectors=detectors)
    h, w = grid_shape
    cx, cy = 0.5 * w * dx, 0.5 * h * dx
    span = np.sqrt((w * dx) ** 2 + (h * dx) ** 2)
    reach = 0.75 * span
    offsets = (np.arange(detectors) - (detectors - 1) / 2.0) * (span / detectors)
    angles = np.arange(views) * (np.pi / views)
    src = np.empty((views * detectors, 2))
    det = np.empty((views * detectors, 2))
    for k, theta in enumerate(angles):
        d = np.array([np.cos(theta), np.sin(theta)])
        perp = np.array([-np.sin(theta), np.cos(theta)])
        base = np.array([cx, cy]) + offsets[:, None] * perp
        src[k * detectors:(k + 1) * detectors] = base - reach * d
        det[k * detectors:(k + 1) * detectors] = base + reach * d
    pairing = np.stack([np.arange(views * detectors)] * 2, axis=1)
    return ScanGeometry(sources=src, detectors=det, pairing=pairing,
                        sino_shape=(views, detectors), kind="parallel")


def fan_geometry(grid_shape, views: int, detectors: int, radius: float | None = None,
                 dx: float = 1.0) -> ScanGeometry:
    """Fan-beam sources on a circle with a flat detector bank opposite each."""
    _check_counts(views=views, detectors=detectors)
    h, w = grid_shape
    cx, cy = 0.5 * w * dx, 0.5 * h * dx
    r_img = 0.5 * np.sqrt((w * dx) ** 2 + (h * dx) ** 2)
    radius = float(radius) if radius is not None else 2.0 * r_img
    if radius <= r_img:
        raise ConfigError(f"fan radius {radius} must exceed image circumradius {r_img:.3f}")
    gamma = np.arcsin(r_img / radius)
    half_span = 2.0 * radius * np.tan(gamma)
    offsets = (np.arange(detectors) - (detectors - 1) / 2.0) * (2 * half_span / detectors)
    phis = np.arange(views) * (2.0 * np.pi / views)
    src = np.empty((views, 2))
    det = np.empty((views * detectors, 2))
    for k, phi in enumerate(phis):
        d = np.array([np.cos(phi), np.sin(phi)])
        perp = np.array([-np.sin(phi), np.cos(phi)])
        src[k] = [cx + radius * d[0], cy + radius * d[1]]
        base = np.array([cx, cy]) - radius * d
        det[k * detectors:(k + 1) * detectors] = base + offsets[:, None] * perp
    src_idx = np.repeat(np.arange(views), detectors)
    det_idx = np.arange(views * detectors)
    pairing = np.stack([src_idx, det_idx], axis=1)
    return ScanGeometry(sources=src, detectors=det, pairing=pairing,
                        sino_shape=(views, detectors), kind="fan")


def tri_array_geometry(grid_shape, per_array: int, detectors: int, arrays: int = 3,
                       dx: float = 1.0, margin: float = 1.1) -> ScanGeometry:
    """Linear source arrays on the sides of a regular polygon (triangle by
    default) with an opposing linear detector bank per array.

    Every source of array i fires at every detector of bank i, giving a
    sparse, asymmetric multi-view scan; corner rays that miss the image are
    legal and flagged by :meth:`ScanGeometry.null_ray_mask`.
    """
    _check_counts(arrays=arrays, per_array=per_array, detectors=detectors)
    if arrays < 3:
        raise ConfigError(f"tri_array needs >= 3 arrays, got {arrays}")
    h, w = grid_shape
    cx, cy = 0.5 * w * dx, 0.5 * h * dx
    r_img = 0.5 * np.sqrt((w * dx) ** 2 + (h * dx) ** 2)
    rho = margin * r_img  # inradius of the polygon of source lines
    half_side = rho * np.tan(np.pi / arrays)
    src = np.empty((arrays * per_array, 2))
    det = np.empty((arrays * detectors, 2))
    src_off = (np.arange(per_array) - (per_array - 1) / 2.0) * (2 * half_side / per_array)
    det_off = (np.arange(detectors) - (detectors - 1) / 2.0) * (2 * half_side / detectors)
    for i in range(arrays):
        angle = np.pi / 2 + i * (2.0 * np.pi / arrays)
        n_out = np.array([np.cos(angle), np.sin(angle)])
        tang = np.array([-np.sin(angle), np.cos(angle)])
        src[i * per_array:(i + 1) * per_array] = (
            np.array([cx, cy]) + rho * n_out + src_off[:, None] * tang)
        det[i * detectors:(i + 1) * detectors] = (
            np.array([cx, cy]) - rho * n_out + det_off[:, None] * tang)
    src_idx = np.repeat(np.arange(arrays * per_array), detectors)
    det_idx = (np.repeat(np.arange(arrays), per_array * detectors) * detectors
               + np.tile(np.arange(detectors), arrays * per_array))
    pairing = np.stack([src_idx, det_idx], axis=1)
    return ScanGeometry(sources=src, detectors=det, pairing=pairing,
                        sino_shape=(arrays, per_array, detectors), kind="tri_array")
