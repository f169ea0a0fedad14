import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentwave import autodiff as ad
from latentwave import finola
from latentwave.errors import ContractError, NumericError


def random_coeffs(rng, c, magnitude=0.1):
    """Random generators with ||A||_2 bounded so rho(I+A) <= 1 + magnitude."""
    a = rng.standard_normal((c, c))
    b = rng.standard_normal((c, c))
    a *= magnitude / np.linalg.norm(a, 2)
    b *= magnitude / np.linalg.norm(b, 2)
    return finola.CoefficientMatrices(a, b)


class TestChannelNormalize:
    def test_constant_channel_floored(self):
        np.testing.assert_array_equal(finola.channel_normalize([5.0, 5.0, 5.0, 5.0]), np.zeros(4))

    def test_two_values(self):
        np.testing.assert_allclose(finola.channel_normalize([1.0, 3.0]), [-1.0, 1.0], atol=2e-6)

    def test_four_values(self):
        np.testing.assert_allclose(
            finola.channel_normalize([0.0, 0.0, 3.0, 3.0]), [-1.0, -1.0, 1.0, 1.0], atol=2e-6
        )

    def test_degenerate_channel_count(self):
        with pytest.raises(ContractError):
            finola.channel_normalize([1.0])


class TestAutoregress:
    def test_zero_generators_copy_v(self):
        rng = np.random.default_rng(0)
        v = rng.standard_normal(6)
        coeffs = finola.CoefficientMatrices(np.zeros((6, 6)), np.zeros((6, 6)))
        fm = finola.autoregress(v, coeffs, 4, 5, mode="normalized")
        assert fm.values.shape == (6, 4, 5)
        np.testing.assert_array_equal(fm.values, np.broadcast_to(v[:, None, None], (6, 4, 5)))

    def test_initial_condition_pinned_bit_exact(self):
        rng = np.random.default_rng(1)
        v = rng.standard_normal(8)
        coeffs = random_coeffs(rng, 8)
        fm = finola.autoregress(v, coeffs, 5, 5)
        assert np.array_equal(fm.initial_vector(), v)

    def test_single_cell_grid(self):
        v = np.arange(4.0)
        coeffs = random_coeffs(np.random.default_rng(2), 4)
        fm = finola.autoregress(v, coeffs, 1, 1)
        np.testing.assert_array_equal(fm.values[:, 0, 0], v)

    @pytest.mark.parametrize("seed", range(5))
    def test_linear_mode_matches_closed_form(self, seed):
        rng = np.random.default_rng(seed)
        coeffs = random_coeffs(rng, 8)
        v = rng.standard_normal(8)
        fm = finola.autoregress(v, coeffs, 16, 16, mode="linear")
        oracle = finola.closed_form_linear(v, coeffs, 16, 16)
        assert np.max(np.abs(fm.values - oracle.values)) < 1e-9

    def test_divergence_reports_grid_index(self):
        c = 4
        coeffs = finola.CoefficientMatrices(np.full((c, c), 1e4), np.zeros((c, c)))
        with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NumericError) as ei:
            finola.autoregress(np.ones(c), coeffs, 1, 300, mode="linear")
        assert "grid" in str(ei.value)

    def test_bad_mode(self):
        with pytest.raises(ContractError):
            finola.autoregress(np.ones(4), random_coeffs(np.random.default_rng(0), 4), 2, 2, mode="typo")


class TestMultipath:
    def test_single_path_equals_autoregress(self):
        rng = np.random.default_rng(3)
        coeffs = random_coeffs(rng, 8)
        v = rng.standard_normal(8)
        a = finola.autoregress(v, coeffs, 6, 6)
        m = finola.multipath_autoregress(v, 1, coeffs, 6, 6)
        np.testing.assert_array_equal(a.values, m.values)

    def test_two_paths_sum_linear(self):
        rng = np.random.default_rng(4)
        coeffs = random_coeffs(rng, 4)
        v = rng.standard_normal(8)
        m = finola.multipath_autoregress(v, 2, coeffs, 5, 7, mode="linear")
        p1 = finola.autoregress(v[:4], coeffs, 5, 7, mode="linear")
        p2 = finola.autoregress(v[4:], coeffs, 5, 7, mode="linear")
        np.testing.assert_array_equal(m.values, p1.values + p2.values)

    def test_indivisible_length_rejected(self):
        coeffs = random_coeffs(np.random.default_rng(0), 4)
        with pytest.raises(ContractError):
            finola.multipath_autoregress(np.ones(9), 2, coeffs, 3, 3)

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_linear_mode_superposition(self, seed):
        rng = np.random.default_rng(seed)
        coeffs = random_coeffs(rng, 4)
        v = rng.standard_normal(8)
        w = rng.standard_normal(8)
        lhs = (finola.multipath_autoregress(v, 2, coeffs, 6, 6, mode="linear").values
               + finola.multipath_autoregress(w, 2, coeffs, 6, 6, mode="linear").values)
        rhs = finola.multipath_autoregress(v + w, 2, coeffs, 6, 6, mode="linear").values
        assert np.max(np.abs(lhs - rhs)) < 1e-9


class TestAutoregressOp:
    def test_zero_generators_grad_v_counts_cells(self):
        n, c, h, w = 2, 5, 3, 4
        v = ad.tensor(np.random.default_rng(0).standard_normal((n, c)), requires_grad=True)
        a = ad.tensor(np.zeros((c, c)), requires_grad=True)
        b = ad.tensor(np.zeros((c, c)), requires_grad=True)
        with ad.Graph() as g:
            out = finola.autoregress_op(v, a, b, h, w)
        g.backward(out, np.ones((n, c, h, w)))
        np.testing.assert_allclose(v.grad, np.full((n, c), h * w))

    def test_single_row_step_grad_a_is_outer_product(self):
        rng = np.random.default_rng(5)
        c = 4
        vv = rng.standard_normal((1, c))
        av = rng.standard_normal((c, c)) * 0.1
        bv = rng.standard_normal((c, c)) * 0.1
        v = ad.tensor(vv, requires_grad=True)
        a = ad.tensor(av, requires_grad=True)
        b = ad.tensor(bv, requires_grad=True)
        with ad.Graph() as g:
            out = finola.autoregress_op(v, a, b, 1, 2, mode="linear")
        up = np.zeros((1, c, 1, 2))
        gcell = rng.standard_normal(c)
        up[0, :, 0, 1] = gcell
        g.backward(out, up)
        np.testing.assert_allclose(a.grad, np.outer(gcell, vv[0]), rtol=1e-12)

    @pytest.mark.parametrize("mode", ["normalized", "linear"])
    def test_grad_check_against_central_differences(self, mode):
        c, h, w = 4, 3, 3
        worst = max(
            ad.grad_check(
                lambda v, a, b: finola.autoregress_op(v, a, b, h, w, mode=mode),
                [(2, c), (c, c), (c, c)],
                eps=1e-5,
                seed=s,
            )
            for s in range(3)
        )
        assert worst < 1e-4, f"finola backward vs central differences: {worst}"

    def test_multipath_grad_check(self):
        c, h, w = 3, 2, 3
        worst = ad.grad_check(
            lambda v, a, b: finola.autoregress_op(v, a, b, h, w, mode="normalized", paths=2),
            [(2, 2 * c), (c, c), (c, c)],
            eps=1e-5,
            seed=0,
        )
        assert worst < 1e-4

    def test_matches_plain_autoregress(self):
        rng = np.random.default_rng(6)
        coeffs = random_coeffs(rng, 6)
        v = rng.standard_normal(6)
        fm = finola.autoregress(v, coeffs, 4, 5)
        out = finola.autoregress_op(
            ad.tensor(v[None]), ad.tensor(coeffs.a), ad.tensor(coeffs.b), 4, 5
        )
        np.testing.assert_array_equal(out.data[0], fm.values)


class TestCoefficientMatrices:
    def test_rejects_non_square(self):
        with pytest.raises(ContractError):
            finola.CoefficientMatrices(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_rejects_mismatched(self):
        with pytest.raises(ContractError):
            finola.CoefficientMatrices(np.zeros((2, 2)), np.zeros((3, 3)))

    def test_rejects_non_finite(self):
        a = np.zeros((2, 2))
        a[0, 0] = np.nan
        with pytest.raises(NumericError):
            finola.CoefficientMatrices(a, np.zeros((2, 2)))

    def test_immutable(self):
        coeffs = finola.CoefficientMatrices(np.zeros((2, 2)), np.zeros((2, 2)))
        with pytest.raises(ValueError):
            coeffs.a[0, 0] = 1.0
