"""Learned components: patch-attention encoder, latent converter, decoders.

The pipeline encodes a measurement into one latent vector (attention
pooling over patch tokens), converts it linearly into the property latent,
expands both latents through the shared autoregression, and decodes each
feature map with upsample + 3x3 conv stages carrying residual connections.

Token raster order is row-major over (row, col) patches; pooled output is
the concatenation of the learned pooling queries' outputs in query order.
Attention itself is permutation-invariant, so the pooled vector depends on
input ordering only through the positional embeddings added to the tokens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import finola
from .autodiff import Tensor
from .errors import ConfigError, ContractError

CONVERTER_KINDS = ("linear", "maxout2", "mlp2")


# ---------------------------------------------------------------------------
# configs and presets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EncoderConfig:
    in_channels: int
    in_h: int
    in_w: int
    patch_h: int
    patch_w: int
    depth: int
    hidden: int
    heads: int
    pool_seeds: int
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.in_h % self.patch_h or self.in_w % self.patch_w:
            divs_h = [d for d in range(1, self.in_h + 1) if self.in_h % d == 0]
            divs_w = [d for d in range(1, self.in_w + 1) if self.in_w % d == 0]
            raise ContractError(
                f"patch {self.patch_h}x{self.patch_w} does not divide input "
                f"{self.in_h}x{self.in_w}; valid row sizes {divs_h}, col sizes {divs_w}")
        if self.hidden % self.heads:
            raise ContractError(f"hidden {self.hidden} not divisible by heads {self.heads}")
        if min(self.depth, self.hidden, self.heads, self.pool_seeds) < 1:
            raise ConfigError("encoder extents must all be >= 1")

    @property
    def tokens_h(self) -> int:
        return self.in_h // self.patch_h

    @property
    def tokens_w(self) -> int:
        return self.in_w // self.patch_w

    @property
    def n_tokens(self) -> int:
        return self.tokens_h * self.tokens_w

    @property
    def patch_dim(self) -> int:
        return self.in_channels * self.patch_h * self.patch_w

    @property
    def latent_dim(self) -> int:
        return self.pool_seeds * self.hidden


@dataclass(frozen=True)
class DecoderConfig:
    stages: int
    channels: tuple
    out_channels: int
    target_h: int
    target_w: int
    residual: bool = True

    def __post_init__(self):
        if len(self.channels) != self.stages:
            raise ConfigError(
                f"decoder has {self.stages} stages but {len(self.channels)} channel widths")
        if self.stages < 0:
            raise ConfigError("stages must be >= 0")

    def check_reachable(self, feat_h: int, feat_w: int):
        out_h = feat_h * (2 ** self.stages)
        out_w = feat_w * (2 ** self.stages)
        if out_h < self.target_h or out_w < self.target_w:
            raise ConfigError(
                f"{self.stages} upsample stages reach {out_h}x{out_w}, short of the "
                f"{self.target_h}x{self.target_w} target")


def stages_for(feature: int, target: int) -> int:
    """Smallest stage count whose x2 chain reaches the target extent."""
    stages = 0
    reach = feature
    while reach < target:
        reach *= 2
        stages += 1
    return stages


@dataclass(frozen=True)
class ModelConfig:
    name: str
    encoder: EncoderConfig
    channels: int               # autoregression channel count C
    paths: int                  # latent chunks, latent_dim = paths * channels
    zp_grid: tuple              # measurement feature-map extents (H, W)
    zpsi_size: int              # property feature-map side length
    decoder_m: DecoderConfig
    decoder_p: DecoderConfig
    converter: str = "linear"
    shared_coeffs: bool = True
    finola_mode: str = "normalized"

    def __post_init__(self):
        if self.converter not in CONVERTER_KINDS:
            raise ConfigError(f"converter must be one of {CONVERTER_KINDS}, got {self.converter!r}")
        if self.encoder.latent_dim != self.paths * self.channels:
            raise ConfigError(
                f"latent dim {self.encoder.latent_dim} != paths {self.paths} x channels {self.channels}")
        self.decoder_m.check_reachable(*self.zp_grid)
        self.decoder_p.check_reachable(self.zpsi_size, self.zpsi_size)

    def to_dict(self):
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        d = dict(d)
        d["encoder"] = EncoderConfig(**d["encoder"])
        for key in ("decoder_m", "decoder_p"):
            sub = dict(d[key])
            sub["channels"] = tuple(sub["channels"])
            d[key] = DecoderConfig(**sub)
        d["zp_grid"] = tuple(d["zp_grid"])
        return ModelConfig(**d)


def _stage_widths(stages: int, base=(32, 16, 8)) -> tuple:
    return tuple((list(base) + [base[-1]] * stages)[:stages])


def _reject_unknown(kw):
    if kw:
        raise ConfigError(f"unknown preset overrides {sorted(kw)}")


def _preset_fwi_desk(**kw) -> ModelConfig:
    zpsi = kw.pop("zpsi_size", 14)
    converter = kw.pop("converter", "linear")
    shared = kw.pop("shared_coeffs", True)
    _reject_unknown(kw)
    stages = stages_for(zpsi, 70)
    widths = _stage_widths(stages, (24, 12, 6))
    enc = EncoderConfig(in_channels=3, in_h=80, in_w=70, patch_h=16, patch_w=10,
                        depth=2, hidden=64, heads=4, pool_seeds=1)
    return ModelConfig(
        name="fwi-desk", encoder=enc, channels=64, paths=1, zp_grid=(5, 7),
        zpsi_size=zpsi,
        decoder_m=DecoderConfig(stages=4, channels=(16, 8, 4, 4), out_channels=3,
                                target_h=80, target_w=70),
        decoder_p=DecoderConfig(stages=stages, channels=widths, out_channels=1,
                                target_h=70, target_w=70),
        converter=converter, shared_coeffs=shared)


def _preset_fwi_paper(**kw) -> ModelConfig:
    zpsi = kw.pop("zpsi_size", 14)
    converter = kw.pop("converter", "linear")
    shared = kw.pop("shared_coeffs", True)
    _reject_unknown(kw)
    enc = EncoderConfig(in_channels=5, in_h=1000, in_w=70, patch_h=100, patch_w=10,
                        depth=3, hidden=512, heads=16, pool_seeds=1)
    stages = stages_for(zpsi, 70)
    return ModelConfig(
        name="fwi-paper", encoder=enc, channels=512, paths=1, zp_grid=(10, 7),
        zpsi_size=zpsi,
        decoder_m=DecoderConfig(stages=7, channels=(64, 64, 32, 32, 16, 16, 8),
                                out_channels=5, target_h=1000, target_w=70),
        decoder_p=DecoderConfig(stages=stages, channels=_stage_widths(stages, (128, 64, 32)),
                                out_channels=1, target_h=70, target_w=70),
        converter=converter, shared_coeffs=shared)


def _preset_ct_desk(**kw) -> ModelConfig:
    converter = kw.pop("converter", "linear")
    shared = kw.pop("shared_coeffs", True)
    _reject_unknown(kw)
    enc = EncoderConfig(in_channels=3, in_h=16, in_w=192, patch_h=4, patch_w=12,
                        depth=2, hidden=64, heads=4, pool_seeds=2)
    return ModelConfig(
        name="ct-desk", encoder=enc, channels=32, paths=4, zp_grid=(4, 16),
        zpsi_size=16,
        decoder_m=DecoderConfig(stages=4, channels=(16, 8, 8, 4), out_channels=3,
                                target_h=16, target_w=192),
        decoder_p=DecoderConfig(stages=2, channels=(24, 12), out_channels=1,
                                target_h=64, target_w=64),
        converter=converter, shared_coeffs=shared)


def _preset_ct_paper(**kw) -> ModelConfig:
    converter = kw.pop("converter", "linear")
    shared = kw.pop("shared_coeffs", True)
    _reject_unknown(kw)
    enc = EncoderConfig(in_channels=3, in_h=45, in_w=1728, patch_h=9, patch_w=36,
                        depth=3, hidden=768, heads=16, pool_seeds=2)
    return ModelConfig(
        name="ct-paper", encoder=enc, channels=192, paths=8, zp_grid=(5, 48),
        zpsi_size=32,
        decoder_m=DecoderConfig(stages=6, channels=(64, 64, 32, 32, 16, 8),
                                out_channels=3, target_h=45, target_w=1728),
        decoder_p=DecoderConfig(stages=3, channels=(96, 48, 24), out_channels=1,
                                target_h=256, target_w=256),
        converter=converter, shared_coeffs=shared)


PRESETS = {
    "fwi-desk": _preset_fwi_desk,
    "fwi-paper": _preset_fwi_paper,
    "ct-desk": _preset_ct_desk,
    "ct-paper": _preset_ct_paper,
}


def make_config(preset: str, **overrides) -> ModelConfig:
    try:
        builder = PRESETS[preset]
    except KeyError:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}") from None
    return builder(**overrides)


# ---------------------------------------------------------------------------
# parameter initialization
# ---------------------------------------------------------------------------

INIT_PROJ_STD = 0.02
INIT_COEFF_SCALE = 0.02
INIT_IDENT_NOISE = 1e-3


def _trunc_normal(rng, shape, std=INIT_PROJ_STD):
    return np.clip(rng.standard_normal(shape) * std, -2 * std, 2 * std)


def _identity_plus_noise(rng, dim, scale=1.0):
    return scale * (np.eye(dim) + INIT_IDENT_NOISE * rng.standard_normal((dim, dim)))


class ModalityModel:
    """Parameter container plus the forward pieces of the paired pipeline."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.seed = seed
        self.params: dict[str, Tensor] = {}
        self._init_params(np.random.default_rng(np.random.SeedSequence([seed, 0x6D6F64])))

    # -- parameters ---------------------------------------------------------

    def _add(self, name, array):
        self.params[name] = ad.tensor(np.asarray(array, dtype=self.dtype), requires_grad=True)

    def _init_params(self, rng):
        cfg = self.cfg
        enc = cfg.encoder
        self._add("encoder.embed.w", _trunc_normal(rng, (enc.patch_dim, enc.hidden)))
        self._add("encoder.embed.b", np.zeros(enc.hidden))
        self._add("encoder.pos", _trunc_normal(rng, (enc.n_tokens, enc.hidden)))
        for i in range(enc.depth):
            p = f"encoder.block{i}"
            for nm in ("wq", "wk", "wv", "wo"):
                self._add(f"{p}.attn.{nm}", _trunc_normal(rng, (enc.hidden, enc.hidden)))
            for nm in ("bq", "bk", "bv", "bo"):
                self._add(f"{p}.attn.{nm}", np.zeros(enc.hidden))
            wide = enc.mlp_ratio * enc.hidden
            self._add(f"{p}.mlp.w1", _trunc_normal(rng, (enc.hidden, wide)))
            self._add(f"{p}.mlp.b1", np.zeros(wide))
            self._add(f"{p}.mlp.w2", _trunc_normal(rng, (wide, enc.hidden)))
            self._add(f"{p}.mlp.b2", np.zeros(enc.hidden))
        self._add("encoder.pool.queries", _trunc_normal(rng, (enc.pool_seeds, enc.hidden)))
        for nm in ("wq", "wk", "wv", "wo"):
            self._add(f"encoder.pool.{nm}", _trunc_normal(rng, (enc.hidden, enc.hidden)))
        for nm in ("bq", "bk", "bv", "bo"):
            self._add(f"encoder.pool.{nm}", np.zeros(enc.hidden))

        d = enc.latent_dim
        if cfg.converter == "linear":
            self._add("converter.t", _identity_plus_noise(rng, d))
        elif cfg.converter == "maxout2":
            self._add("converter.w1", _identity_plus_noise(rng, d))
            self._add("converter.w2", _identity_plus_noise(rng, d))
        else:  # mlp2
            self._add("converter.w1", _identity_plus_noise(rng, d))
            self._add("converter.w2", _identity_plus_noise(rng, d))

        self._add("finola.a", _identity_plus_noise(rng, cfg.channels, INIT_COEFF_SCALE))
        self._add("finola.b", _identity_plus_noise(rng, cfg.channels, INIT_COEFF_SCALE))
        if not cfg.shared_coeffs:
            self._add("finola.a_prop", _identity_plus_noise(rng, cfg.channels, INIT_COEFF_SCALE))
            self._add("finola.b_prop", _identity_plus_noise(rng, cfg.channels, INIT_COEFF_SCALE))

        for prefix, dec, feat_c in (("decoder_m", cfg.decoder_m, cfg.channels),
                                    ("decoder_p", cfg.decoder_p, cfg.channels)):
            prev = feat_c
            for i, width in enumerate(dec.channels):
                self._add(f"{prefix}.stage{i}.w1", _trunc_normal(rng, (width, prev, 3, 3)))
                self._add(f"{prefix}.stage{i}.b1", np.zeros(width))
                self._add(f"{prefix}.stage{i}.w2", _trunc_normal(rng, (width, width, 3, 3)))
                self._add(f"{prefix}.stage{i}.b2", np.zeros(width))
                prev = width
            self._add(f"{prefix}.head.w", _trunc_normal(rng, (dec.out_channels, prev, 3, 3)))
            self._add(f"{prefix}.head.b", np.zeros(dec.out_channels))

    def param_arrays(self) -> dict:
        return {name: t.data for name, t in self.params.items()}

    def load_param_arrays(self, arrays: dict):
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise ConfigError(f"checkpoint/param mismatch: missing {sorted(missing)}, "
                              f"unexpected {sorted(extra)}")
        for name, arr in arrays.items():
            if tuple(arr.shape) != tuple(self.params[name].data.shape):
                raise ConfigError(f"param {name} has shape {arr.shape}, "
                                  f"expected {self.params[name].data.shape}")
            self.params[name].data = np.asarray(arr, dtype=self.dtype)

    def zero_grads(self):
        for t in self.params.values():
            t.grad = None

    # -- encoder ------------------------------------------------------------

    def _linear(self, x: Tensor, prefix: str, w: str, b: str) -> Tensor:
        out = ad.matmul(x, self.params[f"{prefix}.{w}"])
        return ad.add(out, self.params[f"{prefix}.{b}"])

    def _split_heads(self, x: Tensor, n: int, t: int) -> Tensor:
        heads = self.cfg.encoder.heads
        dh = self.cfg.encoder.hidden // heads
        return ad.transpose(ad.reshape(x, (n, t, heads, dh)), (0, 2, 1, 3))

    def _attention(self, q: Tensor, kv: Tensor, prefix: str, n: int) -> Tensor:
        enc = self.cfg.encoder
        heads, dh = enc.heads, enc.hidden // enc.heads
        tq = q.data.shape[-2]
        tk = kv.data.shape[-2]
        qp = self._linear(q, prefix, "wq", "bq")
        kp = self._linear(kv, prefix, "wk", "bk")
        vp = self._linear(kv, prefix, "wv", "bv")
        if qp.data.ndim == 2:  # shared pooling queries: (S, hidden) against batched keys
            qh = ad.transpose(ad.reshape(qp, (tq, heads, dh)), (1, 0, 2))
        else:
            qh = self._split_heads(qp, n, tq)
        kh = self._split_heads(kp, n, tk)
        vh = self._split_heads(vp, n, tk)
        scores = ad.scale(ad.matmul(qh, ad.transpose(kh, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
        att = ad.softmax(scores)
        mixed = ad.matmul(att, vh)  # (N, heads, Tq, dh)
        merged = ad.reshape(ad.transpose(mixed, (0, 2, 1, 3)), (n, tq, enc.hidden))
        return self._linear(merged, prefix, "wo", "bo")

    def patchify(self, x: Tensor) -> Tensor:
        """(N, C, H, W) -> (N, T, patch_dim), row-major over (row, col)."""
        enc = self.cfg.encoder
        n = x.data.shape[0]
        if x.data.shape[1:] != (enc.in_channels, enc.in_h, enc.in_w):
            raise ContractError(
                f"encoder expects (N, {enc.in_channels}, {enc.in_h}, {enc.in_w}), got {x.data.shape}")
        th, tw = enc.tokens_h, enc.tokens_w
        x = ad.reshape(x, (n, enc.in_channels, th, enc.patch_h, tw, enc.patch_w))
        x = ad.transpose(x, (0, 2, 4, 1, 3, 5))
        return ad.reshape(x, (n, th * tw, enc.patch_dim))

    def embed(self, x: Tensor) -> Tensor:
        tokens = self.patchify(x)
        seq = ad.add(ad.matmul(tokens, self.params["encoder.embed.w"]),
                     self.params["encoder.embed.b"])
        return ad.add(seq, self.params["encoder.pos"])

    def encode_sequence(self, seq: Tensor) -> Tensor:
        """Attention trunk + pooling over an embedded (N, T, hidden) sequence."""
        enc = self.cfg.encoder
        n, t = seq.data.shape[0], seq.data.shape[1]
        for i in range(enc.depth):
            p = f"encoder.block{i}"
            attn = self._attention(ad.channel_norm(seq), ad.channel_norm(seq), f"{p}.attn", n)
            seq = ad.add(seq, attn)
            h = ad.channel_norm(seq)
            h = ad.add(ad.matmul(h, self.params[f"{p}.mlp.w1"]), self.params[f"{p}.mlp.b1"])
            h = ad.gelu(h)
            h = ad.add(ad.matmul(h, self.params[f"{p}.mlp.w2"]), self.params[f"{p}.mlp.b2"])
            seq = ad.add(seq, h)
        normed = ad.channel_norm(seq)
        pooled = self._attention(self.params["encoder.pool.queries"], normed,
                                 "encoder.pool", n)
        return ad.reshape(pooled, (n, enc.latent_dim))

    def encode(self, x: Tensor) -> Tensor:
        """Measurement tensor (N, C, H, W) in [-1, 1] -> latent (N, D)."""
        return self.encode_sequence(self.embed(x))

    # -- converter ----------------------------------------------------------

    def convert(self, v: Tensor) -> Tensor:
        cfg = self.cfg
        if v.data.shape[-1] != cfg.encoder.latent_dim:
            raise ContractError(
                f"converter expects latent dim {cfg.encoder.latent_dim}, got {v.data.shape}")
        if cfg.converter == "linear":
            return ad.matmul(v, ad.transpose(self.params["converter.t"], (1, 0)))
        if cfg.converter == "maxout2":
            b1 = ad.matmul(v, ad.transpose(self.params["converter.w1"], (1, 0)))
            b2 = ad.matmul(v, ad.transpose(self.params["converter.w2"], (1, 0)))
            return ad.maxout(b1, b2)
        hidden = ad.relu(ad.matmul(v, ad.transpose(self.params["converter.w1"], (1, 0))))
        return ad.matmul(hidden, ad.transpose(self.params["converter.w2"], (1, 0)))

    # -- autoregression and decoding ----------------------------------------

    def expand(self, v: Tensor, which: str) -> Tensor:
        cfg = self.cfg
        if which == "measurement":
            h, w = cfg.zp_grid
            a, b = self.params["finola.a"], self.params["finola.b"]
        elif which == "property":
            h = w = cfg.zpsi_size
            if cfg.shared_coeffs:
                a, b = self.params["finola.a"], self.params["finola.b"]
            else:
                a, b = self.params["finola.a_prop"], self.params["finola.b_prop"]
        else:
            raise ContractError(f"which must be 'measurement' or 'property', got {which!r}")
        return finola.autoregress_op(v, a, b, h, w, mode=cfg.finola_mode, paths=cfg.paths)

    def _decode(self, z: Tensor, prefix: str, dec: DecoderConfig) -> Tensor:
        # channels-last internally: the conv fast path needs it
        x = ad.transpose(z, (0, 2, 3, 1))
        for i in range(dec.stages):
            x = ad.nearest_upsample2x(x, layout="NHWC")
            x = ad.conv2d(x, self.params[f"{prefix}.stage{i}.w1"], pad=1, layout="NHWC")
            r = ad.add(x, self.params[f"{prefix}.stage{i}.b1"])
            t = ad.conv2d(ad.gelu(r), self.params[f"{prefix}.stage{i}.w2"], pad=1, layout="NHWC")
            t = ad.add(t, self.params[f"{prefix}.stage{i}.b2"])
            x = ad.add(r, t)
        x = ad.conv2d(x, self.params[f"{prefix}.head.w"], pad=1, layout="NHWC")
        x = ad.add(x, self.params[f"{prefix}.head.b"])
        x = center_crop(x, dec.target_h, dec.target_w, layout="NHWC")
        return ad.transpose(x, (0, 3, 1, 2))

    def decode_measurement(self, z: Tensor) -> Tensor:
        return self._decode(z, "decoder_m", self.cfg.decoder_m)

    def decode_property(self, z: Tensor) -> Tensor:
        return self._decode(z, "decoder_p", self.cfg.decoder_p)

    def forward(self, x: Tensor):
        """Full pipeline: returns (reconstruction, prediction, v_meas, v_prop)."""
        v_meas = self.encode(x)
        v_prop = self.convert(v_meas)
        z_meas = self.expand(v_meas, "measurement")
        z_prop = self.expand(v_prop, "property")
        recon = self.decode_measurement(z_meas)
        pred = self.decode_property(z_prop)
        return recon, pred, v_meas, v_prop

    def coefficient_matrices(self, which: str = "measurement") -> finola.CoefficientMatrices:
        if which == "property" and not self.cfg.shared_coeffs:
            return finola.CoefficientMatrices(
                self.params["finola.a_prop"].data.astype(np.float64),
                self.params["finola.b_prop"].data.astype(np.float64))
        return finola.CoefficientMatrices(self.params["finola.a"].data.astype(np.float64),
                                          self.params["finola.b"].data.astype(np.float64))


def center_crop(x: Tensor, target_h: int, target_w: int, layout: str = "NCHW") -> Tensor:
    """Center crop of the spatial axes; gradient scatters back into the full extent."""
    if layout == "NCHW":
        h, w = x.data.shape[2], x.data.shape[3]
    else:
        h, w = x.data.shape[1], x.data.shape[2]
    if h < target_h or w < target_w:
        raise ConfigError(f"cannot crop {h}x{w} up to {target_h}x{target_w}")
    if h == target_h and w == target_w:
        return x
    top = (h - target_h) // 2
    left = (w - target_w) // 2
    if layout == "NCHW":
        window = (slice(None), slice(None), slice(top, top + target_h), slice(left, left + target_w))
    else:
        window = (slice(None), slice(top, top + target_h), slice(left, left + target_w), slice(None))
    data = np.ascontiguousarray(x.data[window])

    def build(out):
        def bwd():
            g = out.grad
            if g is None:
                return
            if x.requires_grad:
                full = np.zeros_like(x.data)
                full[window] = g
                ad._accum(x, full)
        return bwd

    return ad._result("crop", data, (x,), build)


# ---------------------------------------------------------------------------
# correlation probe
# ---------------------------------------------------------------------------

@dataclass
class ProbeResult:
    r2: float
    fitted_t: np.ndarray
    ridge_used: bool = False
    n: int = 0


def _pairs_to_arrays(pairs):
    if isinstance(pairs, tuple) and len(pairs) == 2:
        x, y = pairs
    else:
        x = np.stack([np.asarray(p[0], dtype=np.float64).reshape(-1) for p in pairs])
        y = np.stack([np.asarray(p[1], dtype=np.float64).reshape(-1) for p in pairs])
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape != y.shape:
        raise ContractError(f"probe needs matched (n, D) pairs, got {x.shape} and {y.shape}")
    return x, y


def r2_score(x: np.ndarray, y: np.ndarray, t: np.ndarray) -> float:
    """Coefficient of determination of y ~ t @ x aggregated over coordinates."""
    pred = x @ np.asarray(t, dtype=np.float64).T
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean(axis=0)) ** 2).sum())
    if ss_tot == 0:
        raise ContractError("r2 undefined: targets have zero variance")
    return 1.0 - ss_res / ss_tot


def correlation_probe(pairs, ridge: float | None = None) -> ProbeResult:
    """Least-squares fit of a square linear map between latent pairs.

    With fewer than D + 1 pairs the fit is ridge-regularized and flagged.
    Degenerate targets (zero variance) are an error: r2 is undefined there.
    """
    x, y = _pairs_to_arrays(pairs)
    n, d = x.shape
    if float(((y - y.mean(axis=0)) ** 2).sum()) == 0:
        raise ContractError("degenerate probe inputs: all target latents identical")
    ridge_used = False
    if n < d + 1 or ridge is not None:
        ridge_used = True
        alpha = ridge if ridge is not None else 1e-6 * float(np.trace(x.T @ x)) / max(d, 1)
        m = np.linalg.solve(x.T @ x + alpha * np.eye(d), x.T @ y)
    else:
        m, *_ = np.linalg.lstsq(x, y, rcond=None)
    fitted_t = m.T
    return ProbeResult(r2=r2_score(x, y, fitted_t), fitted_t=fitted_t,
                       ridge_used=ridge_used, n=n)
