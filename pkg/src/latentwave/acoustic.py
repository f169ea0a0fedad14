"""2-d acoustic finite-difference time-domain simulator.

Pressure obeys  laplacian(p) - (1/c^2) d2p/dt2 = s  on a uniform grid.
The scheme is second order in time, fourth order in space (leapfrog), with
an exponential sponge of configurable width wrapped around the physical
region to absorb outgoing waves.  Sources are point injections of a delayed
Ricker wavelet; receivers sample the pressure field, optionally decimated
in time.

Stability is enforced up front: dt must satisfy dt <= 0.6 * dx / (c_max *
sqrt(2)), and a violation reports the largest admissible dt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, NumericError

CFL_FACTOR = 0.6 / math.sqrt(2.0)
SPONGE_WIDTH = 20
SPONGE_STRENGTH = 0.6  # exponent at full sponge depth, applied each step
_HALO = 2              # fourth-order stencil reach
_BLOWUP_CHECK_EVERY = 25


@dataclass
class VelocityMap:
    """Acoustic speed per cell, in m/s, on a dx-spaced grid."""

    c: np.ndarray
    dx: float

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64)
        if self.c.ndim != 2:
            raise ContractError(f"velocity map must be 2-d, got shape {self.c.shape}")
        if not np.all(np.isfinite(self.c)) or np.any(self.c <= 0):
            raise ContractError("velocity map must be finite and strictly positive")
        if not self.dx > 0:
            raise ConfigError(f"grid spacing must be positive, got {self.dx}")

    @property
    def shape(self):
        return self.c.shape


@dataclass
class SeismicGather:
    """Recorded pressure: (sources, time samples, receivers)."""

    p: np.ndarray
    dt: float                  # seconds between recorded samples
    wavelet: dict = field(default_factory=dict)


def ricker(t: np.ndarray, f_peak: float) -> np.ndarray:
    """Ricker wavelet centered at t = 0."""
    arg = (np.pi * f_peak * np.asarray(t)) ** 2
    return (1.0 - 2.0 * arg) * np.exp(-arg)


def cfl_limit(c_max: float, dx: float) -> float:
    """Largest stable dt for the 4th-order-space leapfrog scheme used here."""
    return CFL_FACTOR * dx / c_max


def _check_positions(positions, shape, what):
    pos = np.asarray(positions, dtype=np.int64)
    if pos.ndim != 2 or pos.shape[1] != 2:
        raise ContractError(f"{what} must be (n, 2) grid positions, got {pos.shape}")
    h, w = shape
    if np.any(pos[:, 0] < 0) or np.any(pos[:, 0] >= h) or np.any(pos[:, 1] < 0) or np.any(pos[:, 1] >= w):
        raise ContractError(f"{what} outside the {h}x{w} grid")
    return pos


def _sponge_profile(shape, width, strength):
    """Per-step amplitude multiplier: 1 inside, exp(-a (d/width)^2) in the sponge."""
    h, w = shape
    rows = np.arange(h, dtype=np.float64)
    cols = np.arange(w, dtype=np.float64)
    d_row = np.maximum(width - rows, rows - (h - 1 - width))
    d_col = np.maximum(width - cols, cols - (w - 1 - width))
    depth = np.maximum(d_row[:, None], d_col[None, :])
    depth = np.clip(depth, 0.0, width)
    return np.exp(-strength * (depth / width) ** 2)


def acoustic_simulate(vel: VelocityMap, sources, receivers, dt: float, nt: int,
                      f_peak: float = 15.0, amplitude: float = 1.0,
                      record_every: int = 1, sponge_width: int = SPONGE_WIDTH,
                      sponge_strength: float = SPONGE_STRENGTH) -> SeismicGather:
    """Simulate every source and record pressure at every receiver.

    sources, receivers: (n, 2) integer (row, col) positions on the physical
    grid.  The gather holds one trace block per source; time samples are
    taken every ``record_every`` steps, so the gather's dt is
    ``dt * record_every``.
    """
    c = vel.c
    dx = vel.dx
    src = _check_positions(sources, c.shape, "sources")
    rec = _check_positions(receivers, c.shape, "receivers")
    if nt < 1:
        raise ConfigError(f"nt must be >= 1, got {nt}")
    if record_every < 1 or nt % record_every:
        raise ConfigError(f"record_every {record_every} must divide nt {nt}")
    limit = cfl_limit(float(c.max()), dx)
    if dt > limit:
        raise ConfigError(
            f"CFL violated: dt {dt:.6g} exceeds the stable limit; use dt <= {limit:.6g} s")

    ns = src.shape[0]
    nr = rec.shape[0]
    pad = sponge_width + _HALO
    h, w = c.shape
    hp, wp = h + 2 * pad, w + 2 * pad
    c_pad = np.pad(c, pad, mode="edge")
    lap_scale = (c_pad * dt) ** 2 / (dx * dx)
    damp = np.ones((hp, wp))
    inner = _sponge_profile((hp - 2 * _HALO, wp - 2 * _HALO), sponge_width, sponge_strength)
    damp[_HALO:hp - _HALO, _HALO:wp - _HALO] = inner
    damp[:_HALO, :] = inner[0, 0]
    damp[-_HALO:, :] = inner[0, 0]
    damp[:, :_HALO] = inner[0, 0]
    damp[:, -_HALO:] = inner[0, 0]

    src_r = src[:, 0] + pad
    src_c = src[:, 1] + pad
    rec_r = rec[:, 0] + pad
    rec_c = rec[:, 1] + pad
    inj_scale = amplitude * (dt * c_pad[src_r, src_c]) ** 2 / (dx * dx)

    t0 = 1.0 / f_peak  # delay avoids a startup transient
    times = (np.arange(nt) + 1) * dt
    wavelet = ricker(times - t0, f_peak)

    u_prev = np.zeros((ns, hp, wp))
    u_cur = np.zeros((ns, hp, wp))
    frames = nt // record_every
    gather = np.empty((ns, frames, nr))
    s_idx = np.arange(ns)
    frame = 0
    c1, c2, c3 = -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0

    for n in range(nt):
        i = slice(_HALO, hp - _HALO)
        j = slice(_HALO, wp - _HALO)
        lap = (2 * c1) * u_cur[:, i, j]
        lap += c2 * (u_cur[:, i, 1:wp - 3] + u_cur[:, i, 3:wp - 1])
        lap += c3 * (u_cur[:, i, 0:wp - 4] + u_cur[:, i, 4:wp])
        lap += c2 * (u_cur[:, 1:hp - 3, j] + u_cur[:, 3:hp - 1, j])
        lap += c3 * (u_cur[:, 0:hp - 4, j] + u_cur[:, 4:hp, j])
        u_next = np.zeros_like(u_cur)
        u_next[:, i, j] = (2.0 * u_cur[:, i, j] - u_prev[:, i, j]
                           + lap_scale[i, j] * lap)
        u_next[s_idx, src_r, src_c] += wavelet[n] * inj_scale
        u_next *= damp
        u_cur *= damp
        u_prev = u_cur
        u_cur = u_next
        if (n + 1) % record_every == 0:
            gather[:, frame, :] = u_cur[:, rec_r, rec_c]
            frame += 1
        if (n + 1) % _BLOWUP_CHECK_EVERY == 0 and not np.all(np.isfinite(u_cur)):
            raise NumericError(f"wavefield blew up by step {n + 1}")

    if not np.all(np.isfinite(gather)):
        raise NumericError("gather contains non-finite samples")
    return SeismicGather(
        p=gather, dt=dt * record_every,
        wavelet={"kind": "ricker", "f_peak": f_peak, "delay": t0, "amplitude": amplitude},
    )


def pick_onset(trace: np.ndarray, dt: float, threshold: float = 0.05) -> float:
    """Time of the first sample whose magnitude reaches ``threshold`` of the
    trace's own peak; nan for an all-zero trace."""
    trace = np.abs(np.asarray(trace, dtype=np.float64))
    peak = trace.max()
    if peak == 0:
        return float("nan")
    idx = int(np.argmax(trace >= threshold * peak))
    return (idx + 1) * dt


def first_arrival_time(gather: SeismicGather, source_idx: int, receiver_idx: int,
                       threshold: float = 0.05) -> float:
    """Onset-picked arrival time corrected for the wavelet's own onset."""
    trace = gather.p[source_idx, :, receiver_idx]
    t_pick = pick_onset(trace, gather.dt, threshold)
    f_peak = gather.wavelet["f_peak"]
    delay = gather.wavelet["delay"]
    tw = np.arange(0.0, delay + 3.0 / f_peak, gather.dt)
    wavelet = ricker(tw - delay, f_peak)
    t_w = pick_onset(wavelet, gather.dt, threshold)
    return t_pick - t_w
