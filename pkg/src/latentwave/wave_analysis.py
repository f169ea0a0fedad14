"""Spectral analysis of the autoregression generators.

Diagonalizing A @ B^-1 = V diag(lambda) V^-1 exposes per-channel transport
speeds: in the eigenbasis zeta = V^-1 z, each channel of an idealized map
satisfies the one-way relation d(zeta)/dx = lambda * d(zeta)/dy.  This
module performs the change of basis and quantifies, with forward
differences on the generated grid, how well a feature map satisfies those
relations channel by channel.

For maps generated in linear mode by commuting diagonal generators the
relation holds exactly (up to round-off) and the tests assert it; for
normalized-mode maps the residual is a measurement, not an assertion.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError
from .finola import CoefficientMatrices, FeatureMap

SPECTRUM_RESIDUAL_TOL = 1e-8
BASIS_ROUNDTRIP_TOL = 1e-8
B_CONDITION_LIMIT = 1e12

REPORT_COLUMNS = ("channel", "lambda_re", "lambda_im", "rms_residual",
                  "max_residual", "relative_residual", "modality")


@dataclass(frozen=True)
class WaveSpectrum:
    """Eigenbasis V and per-channel speeds of A @ B^-1."""

    v: np.ndarray           # (C, C) complex eigenvector matrix
    lambdas: np.ndarray     # (C,) complex eigenvalues, sorted by (real, imag)
    cond_v: float
    recon_residual: float

    @property
    def channels(self) -> int:
        return self.lambdas.shape[0]


@dataclass
class WaveSolution:
    """A feature map expressed in wave coordinates, zeta = V^-1 z."""

    zeta: np.ndarray        # (C, H, W) complex
    initial: np.ndarray     # zeta[:, 0, 0]


@dataclass(frozen=True)
class ChannelResidual:
    channel: int
    lam: complex
    rms_residual: float
    max_residual: float
    relative_residual: float


@dataclass
class SharedSpeedReport:
    spectrum: WaveSpectrum
    residuals: dict          # modality name -> list[ChannelResidual]
    initials: dict           # modality name -> (C,) complex initial condition


def diagonalize(coeffs: CoefficientMatrices) -> WaveSpectrum:
    """Eigendecompose A @ B^-1 with a deterministic ordering and scaling.

    Eigenvalues are sorted by (real, imag); each eigenvector is unit-norm
    with its largest-magnitude entry rotated onto the positive real axis,
    so repeated runs give bit-identical spectra.
    """
    a, b = coeffs.a, coeffs.b
    if a.shape[0] < 1:
        raise ContractError("diagonalize: empty coefficient matrices")
    cond_b = np.linalg.cond(b)
    if not np.isfinite(cond_b) or cond_b > B_CONDITION_LIMIT:
        raise NumericError(
            f"B is numerically singular (condition estimate {cond_b:.3e} > {B_CONDITION_LIMIT:.0e})")
    m = np.linalg.solve(b.T, a.T).T  # A @ B^-1 without forming B^-1 twice
    eigvals, eigvecs = np.linalg.eig(m)
    order = np.lexsort((eigvals.imag, eigvals.real))
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    norms = np.linalg.norm(eigvecs, axis=0)
    eigvecs = eigvecs / norms
    anchor = np.argmax(np.abs(eigvecs), axis=0)
    phase = eigvecs[anchor, np.arange(eigvecs.shape[1])]
    phase = phase / np.abs(phase)
    eigvecs = eigvecs / phase
    recon = eigvecs @ np.diag(eigvals) @ np.linalg.inv(eigvecs)
    denom = np.linalg.norm(m)
    residual = float(np.linalg.norm(recon - m) / denom) if denom > 0 else float(np.linalg.norm(recon - m))
    if not np.isfinite(residual) or residual > SPECTRUM_RESIDUAL_TOL:
        raise NumericError(
            f"A@B^-1 is not diagonalizable within tolerance: residual {residual:.3e}")
    cond_v = float(np.linalg.cond(eigvecs))
    if not np.isfinite(cond_v):
        raise NumericError("eigenvector matrix condition number is not finite")
    return WaveSpectrum(v=eigvecs, lambdas=eigvals, cond_v=cond_v, recon_residual=residual)


def to_wave_coords(z: FeatureMap, spectrum: WaveSpectrum) -> WaveSolution:
    """Apply V^-1 to every grid position of a feature map."""
    c, h, w = z.values.shape
    if c != spectrum.channels:
        raise ContractError(
            f"channel mismatch: map has {c} channels, spectrum has {spectrum.channels}")
    flat = z.values.reshape(c, h * w)
    zeta = np.linalg.solve(spectrum.v, flat.astype(complex)).reshape(c, h, w)
    recon = (spectrum.v @ zeta.reshape(c, h * w)).reshape(c, h, w)
    scale = np.max(np.abs(z.values))
    err = np.max(np.abs(recon.real - z.values)) + np.max(np.abs(recon.imag))
    if scale > 0 and err / scale > BASIS_ROUNDTRIP_TOL:
        raise NumericError(
            f"basis round trip failed: relative error {err / scale:.3e} (cond V = {spectrum.cond_v:.3e})")
    return WaveSolution(zeta=zeta, initial=zeta[:, 0, 0].copy())


def wave_residual(solution: WaveSolution, lambdas: np.ndarray) -> list[ChannelResidual]:
    """Per-channel statistics of |dx(zeta) - lambda * dy(zeta)|.

    Forward differences with unit spacing on the (H-1) x (W-1) interior,
    matching the generation step of the autoregression.
    """
    zeta = solution.zeta
    c, h, w = zeta.shape
    if h < 2 or w < 2:
        raise ContractError(f"wave_residual: needs a grid of at least 2x2, got {h}x{w}")
    lambdas = np.asarray(lambdas)
    if lambdas.shape != (c,):
        raise ContractError(f"wave_residual: {lambdas.shape} speeds for {c} channels")
    dx = zeta[:, :-1, 1:] - zeta[:, :-1, :-1]
    dy = zeta[:, 1:, :-1] - zeta[:, :-1, :-1]
    res = dx - lambdas[:, None, None] * dy
    mag = np.abs(res)
    rms = np.sqrt((mag * mag).mean(axis=(1, 2)))
    peak = mag.max(axis=(1, 2))
    zrms = np.sqrt((np.abs(zeta) ** 2).mean(axis=(1, 2)))
    out = []
    for k in range(c):
        rel = float(rms[k] / zrms[k]) if zrms[k] > 0 else 0.0
        out.append(ChannelResidual(channel=k, lam=complex(lambdas[k]),
                                   rms_residual=float(rms[k]),
                                   max_residual=float(peak[k]),
                                   relative_residual=rel))
    return out


def shared_speed_report(coeffs: CoefficientMatrices, z_measurement: FeatureMap,
                        z_property: FeatureMap) -> SharedSpeedReport:
    """Residuals of both modality maps under one spectrum of the shared coeffs."""
    spectrum = diagonalize(coeffs)
    residuals = {}
    initials = {}
    for name, fmap in (("measurement", z_measurement), ("property", z_property)):
        sol = to_wave_coords(fmap, spectrum)
        residuals[name] = wave_residual(sol, spectrum.lambdas)
        initials[name] = sol.initial
    return SharedSpeedReport(spectrum=spectrum, residuals=residuals, initials=initials)


def write_residual_csv(path, report: SharedSpeedReport, sample_id: int | None = None,
                       append: bool = False):
    """Serialize a report into the versioned CSV schema."""
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        if not append:
            fh.write("# latentwave-report v1 wave-residual\n")
            writer = csv.writer(fh)
            header = list(REPORT_COLUMNS)
            if sample_id is not None:
                header = ["sample"] + header
            writer.writerow(header)
        writer = csv.writer(fh)
        for modality, rows in report.residuals.items():
            for r in rows:
                row = [r.channel, f"{r.lam.real:.17g}", f"{r.lam.imag:.17g}",
                       f"{r.rms_residual:.17g}", f"{r.max_residual:.17g}",
                       f"{r.relative_residual:.17g}", modality]
                if sample_id is not None:
                    row = [sample_id] + row
                writer.writerow(row)
