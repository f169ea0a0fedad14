import numpy as np
import pytest

from latentwave import finola, wave_analysis as wa
from latentwave.errors import ContractError, NumericError


def well_conditioned_coeffs(rng, c):
    """Random A and a B safely away from singularity."""
    a = rng.standard_normal((c, c)) / np.sqrt(c)
    b = np.eye(c) + 0.2 * rng.standard_normal((c, c)) / np.sqrt(c)
    return finola.CoefficientMatrices(a, b)


class TestDiagonalize:
    def test_already_diagonal(self):
        coeffs = finola.CoefficientMatrices(np.diag([2.0, 3.0]), np.eye(2))
        spec = wa.diagonalize(coeffs)
        np.testing.assert_allclose(sorted(spec.lambdas.real), [2.0, 3.0])
        np.testing.assert_allclose(np.abs(spec.lambdas.imag), 0.0)
        # columns of V are signed unit basis vectors in some order
        np.testing.assert_allclose(np.abs(spec.v), np.eye(2), atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_reconstruction_residual(self, seed):
        rng = np.random.default_rng(seed)
        coeffs = well_conditioned_coeffs(rng, 16)
        spec = wa.diagonalize(coeffs)
        m = coeffs.a @ np.linalg.inv(coeffs.b)
        recon = spec.v @ np.diag(spec.lambdas) @ np.linalg.inv(spec.v)
        assert np.linalg.norm(recon - m) / np.linalg.norm(m) < 1e-10
        assert spec.recon_residual < 1e-8

    def test_singular_b_rejected(self):
        coeffs = finola.CoefficientMatrices(np.eye(3), np.zeros((3, 3)))
        with pytest.raises(NumericError):
            wa.diagonalize(coeffs)

    def test_deterministic_ordering(self):
        rng = np.random.default_rng(11)
        coeffs = well_conditioned_coeffs(rng, 8)
        s1 = wa.diagonalize(coeffs)
        s2 = wa.diagonalize(coeffs)
        assert np.array_equal(s1.lambdas, s2.lambdas)
        assert np.array_equal(s1.v, s2.v)
        order = np.lexsort((s1.lambdas.imag, s1.lambdas.real))
        assert np.array_equal(order, np.arange(8))


class TestWaveCoords:
    def test_identity_basis(self):
        fm = finola.FeatureMap(values=np.random.default_rng(0).standard_normal((3, 4, 4)))
        spec = wa.WaveSpectrum(v=np.eye(3, dtype=complex), lambdas=np.ones(3, dtype=complex),
                               cond_v=1.0, recon_residual=0.0)
        sol = wa.to_wave_coords(fm, spec)
        np.testing.assert_allclose(sol.zeta.real, fm.values, atol=1e-14)
        np.testing.assert_allclose(sol.zeta.imag, 0.0, atol=1e-14)

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        coeffs = well_conditioned_coeffs(rng, 8)
        spec = wa.diagonalize(coeffs)
        fm = finola.FeatureMap(values=rng.standard_normal((8, 6, 6)))
        sol = wa.to_wave_coords(fm, spec)
        recon = np.einsum("ij,jhw->ihw", spec.v, sol.zeta)
        scale = np.max(np.abs(fm.values))
        assert np.max(np.abs(recon.real - fm.values)) / scale < 1e-8
        assert np.max(np.abs(recon.imag)) / scale < 1e-8

    def test_constant_map(self):
        rng = np.random.default_rng(2)
        coeffs = well_conditioned_coeffs(rng, 4)
        spec = wa.diagonalize(coeffs)
        v = rng.standard_normal(4)
        fm = finola.FeatureMap(values=np.broadcast_to(v[:, None, None], (4, 3, 3)).copy())
        sol = wa.to_wave_coords(fm, spec)
        expect = np.linalg.solve(spec.v, v.astype(complex))
        for y in range(3):
            for x in range(3):
                np.testing.assert_allclose(sol.zeta[:, y, x], expect, rtol=1e-10, atol=1e-12)

    def test_channel_mismatch(self):
        spec = wa.WaveSpectrum(v=np.eye(3, dtype=complex), lambdas=np.ones(3, dtype=complex),
                               cond_v=1.0, recon_residual=0.0)
        fm = finola.FeatureMap(values=np.zeros((4, 2, 2)))
        with pytest.raises(ContractError):
            wa.to_wave_coords(fm, spec)


def commuting_diagonal_pair(rng, c, h, w):
    """Diagonal A, B in linear mode: the one-way relation holds exactly."""
    avals = rng.uniform(0.02, 0.12, size=c)
    bvals = rng.uniform(0.02, 0.12, size=c)
    coeffs = finola.CoefficientMatrices(np.diag(avals), np.diag(bvals))
    v = rng.standard_normal(c)
    fm = finola.autoregress(v, coeffs, h, w, mode="linear")
    return coeffs, fm


class TestWaveResidual:
    def test_constant_map_zero_residual(self):
        sol = wa.WaveSolution(zeta=np.ones((3, 4, 4), dtype=complex), initial=np.ones(3, dtype=complex))
        rows = wa.wave_residual(sol, np.ones(3, dtype=complex))
        assert all(r.rms_residual == 0.0 and r.max_residual == 0.0 for r in rows)

    @pytest.mark.parametrize("hw", [(8, 8), (32, 32), (5, 17)])
    def test_commuting_diagonal_exact(self, hw):
        rng = np.random.default_rng(42)
        coeffs, fm = commuting_diagonal_pair(rng, 6, *hw)
        report = wa.shared_speed_report(coeffs, fm, fm)
        for rows in report.residuals.values():
            for r in rows:
                assert r.relative_residual < 1e-8

    def test_needs_2x2(self):
        sol = wa.WaveSolution(zeta=np.ones((2, 1, 5), dtype=complex), initial=np.ones(2, dtype=complex))
        with pytest.raises(ContractError):
            wa.wave_residual(sol, np.ones(2, dtype=complex))


class TestSharedSpeedReport:
    def test_same_input_identical_blocks(self):
        rng = np.random.default_rng(3)
        coeffs = well_conditioned_coeffs(rng, 6)
        v = rng.standard_normal(6)
        fm = finola.autoregress(v, coeffs, 8, 8)
        report = wa.shared_speed_report(coeffs, fm, fm)
        assert report.residuals["measurement"] == report.residuals["property"]
        np.testing.assert_array_equal(report.initials["measurement"], report.initials["property"])

    def test_linear_pair_through_converter(self):
        rng = np.random.default_rng(4)
        c = 6
        coeffs, _ = commuting_diagonal_pair(rng, c, 4, 4)
        v_meas = rng.standard_normal(c)
        t = rng.standard_normal((c, c)) * 0.3 + np.eye(c)
        v_prop = t @ v_meas
        z_meas = finola.autoregress(v_meas, coeffs, 12, 12, mode="linear")
        z_prop = finola.autoregress(v_prop, coeffs, 12, 12, mode="linear")
        report = wa.shared_speed_report(coeffs, z_meas, z_prop)
        for rows in report.residuals.values():
            for r in rows:
                assert r.relative_residual < 1e-8

    def test_singular_b_propagates(self):
        coeffs = finola.CoefficientMatrices(np.eye(2), np.zeros((2, 2)))
        fm = finola.FeatureMap(values=np.zeros((2, 2, 2)))
        with pytest.raises(NumericError):
            wa.shared_speed_report(coeffs, fm, fm)


def test_residual_csv_schema(tmp_path):
    rng = np.random.default_rng(5)
    coeffs, fm = commuting_diagonal_pair(rng, 3, 4, 4)
    report = wa.shared_speed_report(coeffs, fm, fm)
    path = tmp_path / "report.csv"
    wa.write_residual_csv(path, report)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# latentwave-report v1")
    assert lines[1].split(",") == list(wa.REPORT_COLUMNS)
    assert len(lines) == 2 + 2 * 3
