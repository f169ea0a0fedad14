"""Synthetic paired-data generation.

Velocity-map families are structural lookalikes of the common layered /
curved / faulted benchmark styles: horizontal constant-velocity layers,
optionally bent by smooth random interface curves and broken by a planar
fault.  Difficulty "a" keeps layer velocities nondecreasing with depth,
"b" allows any ordering.  CT phantoms are randomized multi-ellipse heads:
a bright outer ring around softer interior tissue.

Dataset assembly runs the matching forward simulator per property sample,
normalizes each modality with a single power-of-two scale derived from the
global min/max (so normalize/denormalize round-trips are lossless), and
writes train/test container files whose sample ids come from disjoint seed
partitions.  Everything is a pure function of (spec, seeds), bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .acoustic import VelocityMap, acoustic_simulate
from .container import write_container, read_container
from .errors import ConfigError
from .projector import radon_project, tri_array_geometry
from .version import DATA_VERSION

FAMILIES = ("flat_vel", "curve_vel", "flat_fault", "curve_fault")


@dataclass(frozen=True)
class FamilySpec:
    family: str = "flat_vel"
    difficulty: str = "a"
    layers: tuple = (3, 6)              # inclusive layer-count range
    velocity: tuple = (1500.0, 4500.0)  # m/s
    curve_amplitude: float = 6.0        # rows of interface bend for curve families
    fault_throw: tuple = (4, 10)        # rows of displacement for fault families
    grid: int = 70
    dx: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.difficulty not in ("a", "b"):
            raise ConfigError(f"difficulty must be 'a' or 'b', got {self.difficulty!r}")
        if self.layers[0] < 1 or self.layers[1] < self.layers[0]:
            raise ConfigError(f"bad layer range {self.layers}")
        if self.velocity[0] <= 0 or self.velocity[1] < self.velocity[0]:
            raise ConfigError(f"bad velocity range {self.velocity}")
        if self.grid < 8:
            raise ConfigError(f"grid must be >= 8, got {self.grid}")

    @property
    def curved(self) -> bool:
        return self.family.startswith("curve")

    @property
    def faulted(self) -> bool:
        return self.family.endswith("fault")


def _sample_rng(seed: int, sample_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, sample_id]))


def _one_velocity_map(spec: FamilySpec, rng: np.random.Generator) -> VelocityMap:
    n = spec.grid
    n_layers = int(rng.integers(spec.layers[0], spec.layers[1] + 1))
    vels = rng.uniform(spec.velocity[0], spec.velocity[1], size=n_layers)
    if spec.difficulty == "a":
        vels = np.sort(vels)
    # interface depths strictly inside the grid, separated by >= 2 rows
    if n_layers > 1:
        cuts = np.sort(rng.choice(np.arange(2, n - 2, 2), size=n_layers - 1, replace=False))
    else:
        cuts = np.array([], dtype=np.int64)
    depth = np.broadcast_to(cuts[:, None], (cuts.size, n)).astype(np.float64).copy()
    if spec.curved and cuts.size:
        x = np.linspace(0.0, 1.0, n)
        for i in range(cuts.size):
            k = rng.integers(1, 4)
            phase = rng.uniform(0, 2 * np.pi, size=k)
            freq = rng.uniform(0.5, 2.0, size=k)
            wave = sum(np.sin(2 * np.pi * f * x + p) for f, p in zip(freq, phase)) / k
            depth[i] += spec.curve_amplitude * wave
    rows = np.arange(n, dtype=np.float64)[:, None]
    if spec.faulted:
        throw = float(rng.integers(spec.fault_throw[0], spec.fault_throw[1] + 1))
        x0 = rng.uniform(0.25 * n, 0.75 * n)
        y0 = rng.uniform(0.25 * n, 0.75 * n)
        dip = rng.uniform(np.pi / 6, np.pi / 2.5) * rng.choice([-1.0, 1.0])
        cols = np.arange(n, dtype=np.float64)[None, :]
        side = (cols - x0) * math.sin(dip) - (rows - y0) * math.cos(dip) > 0
        rows = rows + np.where(side, throw, 0.0)
    layer_idx = (rows[None, :, :] > depth[:, None, :]).sum(axis=0).astype(np.int64)
    c = vels[layer_idx]
    return VelocityMap(c=c, dx=spec.dx)


def gen_velocity_maps(spec: FamilySpec, n: int, start_id: int = 0) -> list:
    """n maps, deterministic per (spec.seed, sample id)."""
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    return [_one_velocity_map(spec, _sample_rng(spec.seed, start_id + i)) for i in range(n)]


# ---------------------------------------------------------------------------
# phantoms
# ---------------------------------------------------------------------------

def _paint_ellipse(img, cx, cy, rx, ry, angle, value, factor=2):
    """Coverage-weighted painting of one ellipse onto the image."""
    n = img.shape[0]
    fine = n * factor
    ys, xs = np.mgrid[0:fine, 0:fine]
    xs = (xs + 0.5) / factor
    ys = (ys + 0.5) / factor
    ca, sa = math.cos(angle), math.sin(angle)
    u = (xs - cx) * ca + (ys - cy) * sa
    v = -(xs - cx) * sa + (ys - cy) * ca
    inside = (u / rx) ** 2 + (v / ry) ** 2 <= 1.0
    cov = inside.reshape(n, factor, n, factor).mean(axis=(1, 3))
    img *= 1.0 - cov
    img += value * cov


def gen_phantoms(n: int, seed: int = 0, grid: int = 64, start_id: int = 0) -> list:
    """Randomized head-like phantoms: bright ring, softer interior blobs.

    Values lie in [0, 1]; the outer ring always reads higher than the
    interior mean, giving the skull-like contrast tomography expects.
    """
    if grid < 32:
        raise ConfigError(f"phantom grid must be >= 32, got {grid}")
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    out = []
    for i in range(n):
        rng = _sample_rng(seed, start_id + i)
        img = np.zeros((grid, grid))
        c = grid / 2.0
        rx = rng.uniform(0.38, 0.45) * grid
        ry = rng.uniform(0.34, 0.42) * grid
        tilt = rng.uniform(-0.3, 0.3)
        ring = rng.uniform(0.85, 1.0)
        tissue = rng.uniform(0.25, 0.4)
        _paint_ellipse(img, c, c, rx, ry, tilt, ring)
        _paint_ellipse(img, c, c, 0.84 * rx, 0.84 * ry, tilt, tissue)
        for _ in range(int(rng.integers(2, 6))):
            bx = c + rng.uniform(-0.4, 0.4) * rx
            by = c + rng.uniform(-0.4, 0.4) * ry
            brx = rng.uniform(0.08, 0.22) * rx
            bry = rng.uniform(0.08, 0.22) * ry
            val = np.clip(tissue + rng.uniform(-0.2, 0.45), 0.0, 1.0)
            _paint_ellipse(img, bx, by, brx, bry, rng.uniform(0, np.pi), val)
        np.clip(img, 0.0, 1.0, out=img)
        out.append(img)
    return out


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormRecord:
    """Power-of-two scaling into [-1, 1]; multiplication-only, so the
    normalize/denormalize round trip is lossless."""

    lo: float
    hi: float
    scale: float

    @staticmethod
    def from_data(arrays) -> "NormRecord":
        lo = min(float(np.min(a)) for a in arrays)
        hi = max(float(np.max(a)) for a in arrays)
        absmax = max(abs(lo), abs(hi))
        scale = 2.0 ** math.ceil(math.log2(absmax)) if absmax > 0 else 1.0
        return NormRecord(lo=lo, hi=hi, scale=scale)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return x / self.scale

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return x * self.scale

    def to_dict(self):
        return asdict(self)

    @staticmethod
    def from_dict(d) -> "NormRecord":
        return NormRecord(lo=float(d["lo"]), hi=float(d["hi"]), scale=float(d["scale"]))


# ---------------------------------------------------------------------------
# dataset assembly
# ---------------------------------------------------------------------------

FWI_SIM_DESK = {"n_sources": 3, "dt": 8e-4, "nt": 1200, "record_every": 15,
                "f_peak": 15.0}
FWI_SIM_PAPER = {"n_sources": 5, "dt": 8.5e-4, "nt": 1000, "record_every": 1,
                 "f_peak": 15.0}
CT_SIM_DESK = {"per_array": 16, "detectors": 192, "phantom_grid": 64}
CT_SIM_PAPER = {"per_array": 45, "detectors": 1728, "phantom_grid": 256}


@dataclass
class Dataset:
    """In-memory view of one container file."""

    measurement: np.ndarray      # (n, C, T, R) in [-1, 1]
    prop: np.ndarray             # (n, H, W) in [-1, 1]
    norm_measurement: NormRecord
    norm_property: NormRecord
    metadata: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.measurement.shape[0]


def _simulate_fwi(vel_maps, sim):
    n_src = sim["n_sources"]
    grid = vel_maps[0].shape[1]
    src_cols = np.linspace(0, grid - 1, n_src).round().astype(int)
    sources = [(0, c) for c in src_cols]
    receivers = [(0, r) for r in range(grid)]
    out = []
    for vel in vel_maps:
        g = acoustic_simulate(vel, sources, receivers, dt=sim["dt"], nt=sim["nt"],
                              f_peak=sim["f_peak"], record_every=sim["record_every"])
        out.append(g.p)
    return np.stack(out)


def _simulate_ct(phantoms, sim):
    grid = phantoms[0].shape[0]
    geo = tri_array_geometry((grid, grid), per_array=sim["per_array"],
                             detectors=sim["detectors"])
    return np.stack([radon_project(img, geo).values for img in phantoms]), geo


def build_dataset(kind: str, spec, n_train: int, n_test: int, out_prefix,
                  sim: dict | None = None, dtype: str = "f32") -> tuple:
    """Simulate, normalize, and write ``<prefix>_train.lwc`` / ``<prefix>_test.lwc``.

    Returns the two paths.  The full pipeline runs in float64; ``dtype``
    only controls the stored payload precision.
    """
    if n_train < 1 or n_test < 0:
        raise ConfigError(f"need n_train >= 1 and n_test >= 0, got {n_train}/{n_test}")
    if dtype not in ("f32", "f64"):
        raise ConfigError(f"dtype must be f32 or f64, got {dtype!r}")
    n_total = n_train + n_test
    if kind == "fwi":
        if not isinstance(spec, FamilySpec):
            spec = FamilySpec(**spec)
        sim = dict(FWI_SIM_DESK if sim is None else sim)
        maps = gen_velocity_maps(spec, n_total)
        props = np.stack([m.c for m in maps])
        meas = _simulate_fwi(maps, sim)
        spec_doc = asdict(spec)
        phys = {"dx": spec.dx, "dt": sim["dt"] * sim["record_every"], "units": "m/s"}
    elif kind == "ct":
        sim = dict(CT_SIM_DESK if sim is None else sim)
        seed = spec if isinstance(spec, int) else int(spec.get("seed", 0))
        phantoms = gen_phantoms(n_total, seed=seed, grid=sim["phantom_grid"])
        props = np.stack(phantoms)
        meas, _ = _simulate_ct(phantoms, sim)
        spec_doc = {"seed": seed}
        phys = {"dx": 1.0, "units": "attenuation"}
    else:
        raise ConfigError(f"unknown dataset kind {kind!r}")

    norm_m = NormRecord.from_data([meas])
    norm_p = NormRecord.from_data([props])
    meas_n = norm_m.normalize(meas)
    props_n = norm_p.normalize(props)
    store = np.float32 if dtype == "f32" else np.float64
    paths = []
    for split, sl in (("train", slice(0, n_train)), ("test", slice(n_train, n_total))):
        path = f"{out_prefix}_{split}.lwc"
        ids = list(range(sl.start, sl.stop))
        metadata = {
            "kind": kind, "split": split, "spec": spec_doc, "sim": sim,
            "sample_ids": ids, "version": DATA_VERSION, "physical": phys,
            "norm": {"measurement": norm_m.to_dict(), "property": norm_p.to_dict()},
        }
        write_container(path, {
            "measurement": meas_n[sl].astype(store),
            "property": props_n[sl].astype(store),
        }, metadata)
        paths.append(path)
    return tuple(paths)


def load_dataset(path) -> Dataset:
    arrays, metadata = read_container(path)
    if "measurement" not in arrays or "property" not in arrays:
        raise ConfigError(f"{path}: not a paired dataset container")
    return Dataset(
        measurement=arrays["measurement"],
        prop=arrays["property"],
        norm_measurement=NormRecord.from_dict(metadata["norm"]["measurement"]),
        norm_property=NormRecord.from_dict(metadata["norm"]["property"]),
        metadata=metadata,
    )
