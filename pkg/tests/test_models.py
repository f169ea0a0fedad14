import numpy as np
import pytest

from latentwave import autodiff as ad
from latentwave import models
from latentwave.errors import ConfigError, ContractError


@pytest.fixture(scope="module")
def desk_model():
    return models.ModalityModel(models.make_config("fwi-desk"), seed=0, dtype=np.float64)


def small_config(converter="linear", shared=True):
    enc = models.EncoderConfig(in_channels=1, in_h=8, in_w=8, patch_h=4, patch_w=4,
                               depth=1, hidden=8, heads=2, pool_seeds=1)
    return models.ModelConfig(
        name="tiny", encoder=enc, channels=8, paths=1, zp_grid=(2, 2), zpsi_size=3,
        decoder_m=models.DecoderConfig(stages=2, channels=(4, 4), out_channels=1,
                                       target_h=8, target_w=8),
        decoder_p=models.DecoderConfig(stages=2, channels=(4, 4), out_channels=1,
                                       target_h=10, target_w=10),
        converter=converter, shared_coeffs=shared)


class TestConfigs:
    def test_indivisible_patch_lists_divisors(self):
        with pytest.raises(ContractError) as ei:
            models.EncoderConfig(in_channels=1, in_h=10, in_w=10, patch_h=3, patch_w=5,
                                 depth=1, hidden=8, heads=2, pool_seeds=1)
        assert "valid row sizes" in str(ei.value)

    def test_heads_divide_hidden(self):
        with pytest.raises(ContractError):
            models.EncoderConfig(in_channels=1, in_h=8, in_w=8, patch_h=4, patch_w=4,
                                 depth=1, hidden=10, heads=4, pool_seeds=1)

    def test_fwi_paper_token_grid(self):
        cfg = models.make_config("fwi-paper")
        assert (cfg.encoder.tokens_h, cfg.encoder.tokens_w) == (10, 7)
        assert cfg.encoder.latent_dim == 512

    def test_ct_paper_latent_dim(self):
        cfg = models.make_config("ct-paper")
        assert cfg.encoder.pool_seeds == 2
        assert cfg.encoder.latent_dim == 1536
        assert cfg.paths * cfg.channels == 1536

    def test_unreachable_target_rejected(self):
        with pytest.raises(ConfigError):
            models.DecoderConfig(stages=1, channels=(4,), out_channels=1,
                                 target_h=70, target_w=70).check_reachable(14, 14)

    def test_config_round_trip(self):
        cfg = models.make_config("fwi-desk", zpsi_size=7)
        again = models.ModelConfig.from_dict(cfg.to_dict())
        assert again == cfg

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            models.make_config("nope")


class TestEncoder:
    def test_zero_weights_zero_biases_give_zero_latent(self):
        model = models.ModalityModel(small_config(), seed=0, dtype=np.float64)
        for t in model.params.values():
            t.data = np.zeros_like(t.data)
        x = ad.tensor(np.zeros((2, 1, 8, 8)))
        v = model.encode(x)
        np.testing.assert_array_equal(v.data, 0.0)

    def test_latent_shape(self, desk_model):
        x = ad.tensor(np.random.default_rng(0).uniform(-1, 1, (2, 3, 80, 70)))
        v = desk_model.encode(x)
        assert v.data.shape == (2, 64)

    def test_pooling_invariant_to_token_order(self, desk_model):
        rng = np.random.default_rng(1)
        x = ad.tensor(rng.uniform(-1, 1, (2, 3, 80, 70)))
        seq = desk_model.embed(x)
        v1 = desk_model.encode_sequence(seq).data
        perm = rng.permutation(seq.data.shape[1])
        v2 = desk_model.encode_sequence(ad.tensor(seq.data[:, perm])).data
        np.testing.assert_allclose(v1, v2, rtol=1e-9, atol=1e-12)

    def test_raster_order_row_major(self, desk_model):
        # moving energy to a different patch changes the latent
        base = np.zeros((1, 3, 80, 70))
        a = base.copy()
        a[0, :, :16, :10] = 1.0
        b = base.copy()
        b[0, :, :16, 10:20] = 1.0
        va = desk_model.encode(ad.tensor(a)).data
        vb = desk_model.encode(ad.tensor(b)).data
        assert not np.allclose(va, vb)

    def test_wrong_input_shape(self, desk_model):
        with pytest.raises(ContractError):
            desk_model.encode(ad.tensor(np.zeros((1, 3, 80, 71))))


class TestConverter:
    def test_identity(self):
        model = models.ModalityModel(small_config(), seed=0, dtype=np.float64)
        model.params["converter.t"].data = np.eye(8)
        v = ad.tensor(np.random.default_rng(0).standard_normal((3, 8)))
        np.testing.assert_array_equal(model.convert(v).data, v.data)

    def test_zero_map(self):
        model = models.ModalityModel(small_config(), seed=0, dtype=np.float64)
        model.params["converter.t"].data = np.zeros((8, 8))
        v = ad.tensor(np.ones((2, 8)))
        np.testing.assert_array_equal(model.convert(v).data, 0.0)

    def test_exactly_linear(self):
        model = models.ModalityModel(small_config(), seed=1, dtype=np.float64)
        rng = np.random.default_rng(2)
        a = rng.standard_normal((2, 8))
        b = rng.standard_normal((2, 8))
        al, be = 0.3, -1.7
        lhs = model.convert(ad.tensor(al * a + be * b)).data
        rhs = al * model.convert(ad.tensor(a)).data + be * model.convert(ad.tensor(b)).data
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)

    def test_maxout_equal_branches_is_linear(self):
        model = models.ModalityModel(small_config(converter="maxout2"), seed=0, dtype=np.float64)
        w = np.random.default_rng(3).standard_normal((8, 8))
        model.params["converter.w1"].data = w.copy()
        model.params["converter.w2"].data = w.copy()
        v = np.random.default_rng(4).standard_normal((3, 8))
        np.testing.assert_allclose(model.convert(ad.tensor(v)).data, v @ w.T, rtol=1e-12)

    def test_maxout_abs(self):
        model = models.ModalityModel(small_config(converter="maxout2"), seed=0, dtype=np.float64)
        model.params["converter.w1"].data = np.eye(8)
        model.params["converter.w2"].data = -np.eye(8)
        v = np.random.default_rng(5).standard_normal((2, 8))
        np.testing.assert_allclose(model.convert(ad.tensor(v)).data, np.abs(v), rtol=1e-12)

    def test_mlp2_zero_second_layer(self):
        model = models.ModalityModel(small_config(converter="mlp2"), seed=0, dtype=np.float64)
        model.params["converter.w2"].data = np.zeros((8, 8))
        v = np.random.default_rng(6).standard_normal((2, 8))
        np.testing.assert_array_equal(model.convert(ad.tensor(v)).data, 0.0)


class TestDecoder:
    def test_fwi_desk_property_extents(self, desk_model):
        z = ad.tensor(np.random.default_rng(0).standard_normal((2, 64, 14, 14)))
        out = desk_model.decode_property(z)
        assert out.data.shape == (2, 1, 70, 70)

    def test_fwi_paper_property_extents(self):
        model = models.ModalityModel(models.make_config("fwi-paper"), seed=0)
        z = ad.tensor(np.random.default_rng(1).standard_normal((1, 512, 14, 14)).astype(np.float32))
        out = model.decode_property(z)
        assert out.data.shape == (1, 1, 70, 70)

    def test_ct_paper_property_extents(self):
        model = models.ModalityModel(models.make_config("ct-paper"), seed=0)
        z = ad.tensor(np.random.default_rng(2).standard_normal((1, 192, 32, 32)).astype(np.float32))
        out = model.decode_property(z)
        assert out.data.shape == (1, 1, 256, 256)

    def test_degenerate_1x1_feature_map_still_decodes(self):
        cfg = models.make_config("fwi-desk", zpsi_size=1)
        model = models.ModalityModel(cfg, seed=0, dtype=np.float32)
        z = ad.tensor(np.random.default_rng(1).standard_normal((2, 64, 1, 1)).astype(np.float32))
        assert model.decode_property(z).data.shape == (2, 1, 70, 70)

    def test_identity_smoke_upsample(self):
        # constructed weights: head passes one channel through after upsample
        cfg = small_config()
        model = models.ModalityModel(cfg, seed=0, dtype=np.float64)
        x = np.random.default_rng(3).standard_normal((1, 8, 2, 2))
        for name, t in model.params.items():
            if name.startswith("decoder_m"):
                t.data = np.zeros_like(t.data)
        w1_0 = model.params["decoder_m.stage0.w1"].data
        w1_0[0, 0, 1, 1] = 1.0  # pick channel 0 through the 3x3 center tap
        w1_1 = model.params["decoder_m.stage1.w1"].data
        w1_1[0, 0, 1, 1] = 1.0
        head = model.params["decoder_m.head.w"].data
        head[0, 0, 1, 1] = 1.0
        out = model.decode_measurement(ad.tensor(x))
        expect = np.repeat(np.repeat(x[:, :1], 2, axis=2), 2, axis=3)
        expect = np.repeat(np.repeat(expect, 2, axis=2), 2, axis=3)
        np.testing.assert_allclose(out.data[0, 0], expect[0, 0], atol=1e-12)


class TestPipeline:
    def test_forward_shapes_and_grads(self, desk_model):
        x = ad.tensor(np.random.default_rng(0).uniform(-1, 1, (2, 3, 80, 70)))
        desk_model.zero_grads()
        with ad.Graph() as g:
            recon, pred, v_meas, v_prop = desk_model.forward(x)
            loss = ad.add(ad.mean(ad.mul(recon, recon)), ad.mean(ad.mul(pred, pred)))
        assert recon.data.shape == (2, 3, 80, 70)
        assert pred.data.shape == (2, 1, 70, 70)
        assert v_meas.data.shape == (2, 64)
        g.backward(loss)
        grads = [t.grad for t in desk_model.params.values()]
        assert all(gr is not None for gr in grads)
        assert all(np.all(np.isfinite(gr)) for gr in grads)

    def test_separate_coeffs_used_for_property(self):
        model = models.ModalityModel(small_config(shared=False), seed=0, dtype=np.float64)
        assert "finola.a_prop" in model.params
        model.params["finola.a_prop"].data[:] = 0.0
        model.params["finola.b_prop"].data[:] = 0.0
        v = ad.tensor(np.random.default_rng(1).standard_normal((1, 8)))
        z = model.expand(v, "property")
        # zero generators copy the latent everywhere
        np.testing.assert_array_equal(z.data[0, :, 0, 0], z.data[0, :, 2, 2])


class TestCorrelationProbe:
    def test_exact_linear_relation(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((40, 6))
        res = models.correlation_probe((x, 2.0 * x))
        assert res.r2 > 1.0 - 1e-10
        np.testing.assert_allclose(res.fitted_t, 2.0 * np.eye(6), atol=1e-8)

    def test_recovers_mixing_matrix_within_noise(self):
        rng = np.random.default_rng(1)
        d = 8
        m = rng.standard_normal((d, d))
        x = rng.standard_normal((20 * d, d))
        noise = 1e-3 * rng.standard_normal((20 * d, d))
        res = models.correlation_probe((x, x @ m.T + noise))
        assert np.max(np.abs(res.fitted_t - m)) < 1e-2
        assert res.r2 > 0.999

    def test_independent_pairs_low_r2(self):
        r2s = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            d = 6
            x = rng.standard_normal((10 * d, d))
            y = rng.standard_normal((10 * d, d))
            r2s.append(models.correlation_probe((x, y)).r2)
        assert max(r2s) < 0.15

    def test_ridge_flagged_when_underdetermined(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((4, 8))
        res = models.correlation_probe((x, x))
        assert res.ridge_used

    def test_degenerate_targets_error(self):
        x = np.random.default_rng(3).standard_normal((10, 4))
        with pytest.raises(ContractError):
            models.correlation_probe((x, np.ones((10, 4))))

    def test_r2_for_fixed_map(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((30, 5))
        t = rng.standard_normal((5, 5))
        assert models.r2_score(x, x @ t.T, t) == pytest.approx(1.0)
