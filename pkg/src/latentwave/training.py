"""End-to-end training of the paired-modality pipeline.

AdamW with decoupled weight decay, cosine-annealed learning rate, and an
L1 + L2 loss on both heads (reconstruction and prediction), each pair
weighted 1:1.  Training is deterministic: given the same dataset bytes,
config, and seed, parameter trajectories and checkpoints are bit-identical
on a machine (single fixed BLAS, fixed batch order, fixed reduction order).

Wall-clock time is reported but deliberately kept out of persisted
artifacts so reruns stay byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field, asdict, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .container import read_container, write_container
from .errors import ConfigError, NumericError
from .metrics import MetricReport, report_pair
from .models import ModalityModel, ModelConfig, make_config
from .synth import Dataset
from .version import CHECKPOINT_VERSION

ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    preset: str = "fwi-desk"
    epochs: int = 30
    batch_size: int = 16
    lr0: float = 1e-3
    betas: tuple = (0.9, 0.999)
    weight_decay: float = 0.05
    grad_clip: float = 1.0
    seed: int = 0
    dtype: str = "f32"                  # f32 training, f64 verification
    converter: str = "linear"
    shared_coeffs: bool = True
    zpsi_size: int = 14
    head_weights: tuple = (1.0, 1.0)    # reconstruction, prediction
    eval_every: int = 0                 # 0: evaluate only after the last epoch
    checkpoint_every: int = 0           # epochs between checkpoints; 0: final only

    def __post_init__(self):
        if self.dtype not in ("f32", "f64"):
            raise ConfigError(f"dtype must be f32 or f64, got {self.dtype!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")

    @staticmethod
    def paper(**overrides) -> "TrainConfig":
        """The published recipe: batch 64, lr 1e-3, wd 0.05, cosine to zero."""
        base = dict(preset="fwi-paper", batch_size=64, lr0=1e-3, betas=(0.9, 0.999),
                    weight_decay=0.05)
        base.update(overrides)
        return TrainConfig(**base)

    def canonical_bytes(self) -> bytes:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":")).encode()

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()

    def model_config(self) -> ModelConfig:
        overrides = {"converter": self.converter, "shared_coeffs": self.shared_coeffs}
        if self.preset.startswith("fwi"):
            overrides["zpsi_size"] = self.zpsi_size
        return make_config(self.preset, **overrides)

    def np_dtype(self):
        return np.float32 if self.dtype == "f32" else np.float64


@dataclass
class EpochRow:
    epoch: int
    recon_l1: float
    recon_l2: float
    pred_l1: float
    pred_l2: float
    total: float
    lr_last: float
    clip_events: int
    steps: int


@dataclass
class RunLog:
    config_hash: str
    rows: list = field(default_factory=list)           # EpochRow, append-only
    eval_rows: list = field(default_factory=list)      # (epoch, head, MetricReport)
    wall_time: float = 0.0                             # reported, never persisted
    aborted: bool = False

    def core(self) -> dict:
        """The deterministic content used for identity comparisons."""
        return {
            "config_hash": self.config_hash,
            "rows": [asdict(r) for r in self.rows],
            "eval": [(e, h, m.row()) for e, h, m in self.eval_rows],
            "aborted": self.aborted,
        }

    def write_csv(self, path, extra_comments=()):
        with open(path, "w") as fh:
            fh.write("# latentwave-report v1 runlog\n")
            fh.write(f"# config_hash={self.config_hash}\n")
            for comment in extra_comments:
                fh.write(f"# {comment}\n")
            fh.write("epoch,recon_l1,recon_l2,pred_l1,pred_l2,total,lr_last,clip_events,steps\n")
            for r in self.rows:
                fh.write(f"{r.epoch},{r.recon_l1:.17g},{r.recon_l2:.17g},{r.pred_l1:.17g},"
                         f"{r.pred_l2:.17g},{r.total:.17g},{r.lr_last:.17g},"
                         f"{r.clip_events},{r.steps}\n")


@dataclass
class TrainResult:
    model: ModalityModel
    runlog: RunLog
    adam_state: dict
    step: int
    diverged: bool = False


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """lr(0) = lr0, lr(total) = 0, monotone non-increasing in between."""
    if total_steps <= 0:
        return lr0
    step = min(max(step, 0), total_steps)
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


def adamw_init(params: dict) -> dict:
    return {
        "m": {k: np.zeros_like(t.data) for k, t in params.items()},
        "v": {k: np.zeros_like(t.data) for k, t in params.items()},
    }


def adamw_step(params: dict, grads: dict, state: dict, t: int, lr_t: float,
               betas=(0.9, 0.999), weight_decay: float = 0.05):
    """One decoupled-weight-decay Adam update, in place.

    m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;
    p <- p - lr_t (m_hat / (sqrt(v_hat) + eps) + wd * p)
    """
    if t < 1:
        raise ConfigError(f"adamw step index must be >= 1, got {t}")
    b1, b2 = betas
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, tensor_ in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
        m = state["m"][name]
        v = state["v"][name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / c1
        v_hat = v / c2
        p = tensor_.data
        p -= (lr_t * (m_hat / (np.sqrt(v_hat) + ADAM_EPS) + weight_decay * p)).astype(p.dtype)


def _abs_mean(x: Tensor) -> Tensor:
    return ad.mean(ad.maxout(x, ad.scale(x, -1.0)))


def _sq_mean(x: Tensor) -> Tensor:
    return ad.mean(ad.mul(x, x))


def batch_loss(model: ModalityModel, x: Tensor, target_prop: Tensor,
               head_weights=(1.0, 1.0)):
    """L1 + L2 on both heads; returns (loss tensor, component floats)."""
    recon, pred, _, _ = model.forward(x)
    d_r = ad.sub(recon, x)
    d_p = ad.sub(pred, target_prop)
    r1 = _abs_mean(d_r)
    r2 = _sq_mean(d_r)
    p1 = _abs_mean(d_p)
    p2 = _sq_mean(d_p)
    w_r, w_p = head_weights
    loss = ad.add(ad.scale(ad.add(r1, r2), w_r), ad.scale(ad.add(p1, p2), w_p))
    comps = {"recon_l1": float(r1.data), "recon_l2": float(r2.data),
             "pred_l1": float(p1.data), "pred_l2": float(p2.data)}
    return loss, comps


def _dataset_tensors(dataset: Dataset, dtype):
    meas = np.asarray(dataset.measurement, dtype=dtype)
    prop = np.asarray(dataset.prop, dtype=dtype)
    if prop.ndim == 3:
        prop = prop[:, None]
    return meas, prop


def train(model: ModalityModel, dataset: Dataset, cfg: TrainConfig,
          eval_dataset: Dataset | None = None, log=None) -> TrainResult:
    """Minimize the summed L1 + L2 of both heads over the dataset.

    On divergence (non-finite loss or gradients) the last completed step's
    parameters are kept and the result is flagged; nothing after the last
    good step is applied.
    """
    dtype = cfg.np_dtype()
    meas, prop = _dataset_tensors(dataset, dtype)
    n = meas.shape[0]
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7472]))
    steps_per_epoch = max(1, math.ceil(n / cfg.batch_size))
    total_steps = cfg.epochs * steps_per_epoch
    state = adamw_init(model.params)
    runlog = RunLog(config_hash=cfg.config_hash())
    started = time.perf_counter()
    step = 0
    last_good = {k: t.data.copy() for k, t in model.params.items()}
    diverged = False

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        sums = {"recon_l1": 0.0, "recon_l2": 0.0, "pred_l1": 0.0, "pred_l2": 0.0}
        clip_events = 0
        lr_t = 0.0
        epoch_steps = 0
        for b0 in range(0, n, cfg.batch_size):
            idx = order[b0:b0 + cfg.batch_size]
            x = ad.tensor(meas[idx])
            y = ad.tensor(prop[idx])
            model.zero_grads()
            with ad.finite_checks(False):
                with ad.Graph() as graph:
                    loss, comps = batch_loss(model, x, y, cfg.head_weights)
                loss_val = float(loss.data)
                if not math.isfinite(loss_val):
                    diverged = True
                    break
                graph.backward(loss)
            grads = {}
            bad = False
            for name, t in model.params.items():
                g = t.grad if t.grad is not None else np.zeros_like(t.data)
                if not np.all(np.isfinite(g)):
                    bad = True
                    break
                grads[name] = g
            if bad:
                diverged = True
                break
            gn = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
            if cfg.grad_clip and gn > cfg.grad_clip:
                factor = cfg.grad_clip / gn
                for g in grads.values():
                    g *= factor
                clip_events += 1
            lr_t = cosine_lr(step, total_steps, cfg.lr0)
            step += 1
            adamw_step(model.params, grads, state, step, lr_t,
                       betas=cfg.betas, weight_decay=cfg.weight_decay)
            for k in sums:
                sums[k] += comps[k]
            epoch_steps += 1
            last_good = {k: t.data.copy() for k, t in model.params.items()}
        if diverged:
            model.load_param_arrays(last_good)
            runlog.aborted = True
            break
        denom = max(epoch_steps, 1)
        means = {k: v / denom for k, v in sums.items()}
        total = means["recon_l1"] + means["recon_l2"] + means["pred_l1"] + means["pred_l2"]
        runlog.rows.append(EpochRow(epoch=epoch, total=total, lr_last=lr_t,
                                    clip_events=clip_events, steps=epoch_steps, **means))
        if log:
            log(f"epoch {epoch}: total {total:.5f} lr {lr_t:.2e} clips {clip_events}")
        if eval_dataset is not None and cfg.eval_every and (epoch + 1) % cfg.eval_every == 0:
            for head, rep in evaluate(model, eval_dataset, cfg.batch_size).items():
                runlog.eval_rows.append((epoch, head, rep))
    if eval_dataset is not None and not diverged:
        for head, rep in evaluate(model, eval_dataset, cfg.batch_size).items():
            runlog.eval_rows.append((cfg.epochs - 1, head, rep))
    runlog.wall_time = time.perf_counter() - started
    return TrainResult(model=model, runlog=runlog, adam_state=state, step=step,
                       diverged=diverged)


def predict(model: ModalityModel, measurement: np.ndarray, batch_size: int = 16):
    """Inference over an array of measurements; returns (recon, pred, v_meas, v_prop)."""
    outs = ([], [], [], [])
    for b0 in range(0, measurement.shape[0], batch_size):
        x = ad.tensor(np.asarray(measurement[b0:b0 + batch_size], dtype=model.dtype))
        recon, pred, v_meas, v_prop = model.forward(x)
        for acc, t in zip(outs, (recon, pred, v_meas, v_prop)):
            acc.append(t.data)
    return tuple(np.concatenate(o) for o in outs)


def evaluate(model: ModalityModel, dataset: Dataset, batch_size: int = 16) -> dict:
    """MetricReports per head on normalized scale plus denormalized variants."""
    meas, prop = _dataset_tensors(dataset, model.dtype)
    recon, pred, _, _ = predict(model, meas, batch_size)
    reports = {
        "reconstruction": report_pair(recon, meas, data_range=2.0),
        "prediction": report_pair(pred[:, 0], prop[:, 0], data_range=2.0),
    }
    nm, npr = dataset.norm_measurement, dataset.norm_property
    reports["reconstruction_denorm"] = report_pair(
        nm.denormalize(recon.astype(np.float64)), nm.denormalize(meas.astype(np.float64)),
        data_range=max(nm.hi - nm.lo, 1e-12), scale="denormalized")
    reports["prediction_denorm"] = report_pair(
        npr.denormalize(pred[:, 0].astype(np.float64)), npr.denormalize(prop[:, 0].astype(np.float64)),
        data_range=max(npr.hi - npr.lo, 1e-12), scale="denormalized")
    n = dataset.n
    reports = {k: replace(v, n=n) for k, v in reports.items()}
    return reports


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, result: TrainResult, cfg: TrainConfig):
    arrays = {}
    for name, t in result.model.params.items():
        arrays[f"param/{name}"] = t.data
    for name, arr in result.adam_state["m"].items():
        arrays[f"adam_m/{name}"] = arr
    for name, arr in result.adam_state["v"].items():
        arrays[f"adam_v/{name}"] = arr
    metadata = {
        "version": CHECKPOINT_VERSION,
        "train_config": asdict(cfg),
        "model_config": result.model.cfg.to_dict(),
        "step": result.step,
        "diverged": result.diverged,
        "config_hash": cfg.config_hash(),
        "runlog": result.runlog.core(),
    }
    write_container(path, arrays, metadata)


def load_checkpoint(path):
    """Returns (model, train config, adam state, metadata)."""
    arrays, metadata = read_container(path)
    tc = dict(metadata["train_config"])
    tc["betas"] = tuple(tc["betas"])
    tc["head_weights"] = tuple(tc["head_weights"])
    cfg = TrainConfig(**tc)
    model_cfg = ModelConfig.from_dict(metadata["model_config"])
    model = ModalityModel(model_cfg, seed=cfg.seed, dtype=cfg.np_dtype())
    params = {k[len("param/"):]: v for k, v in arrays.items() if k.startswith("param/")}
    model.load_param_arrays(params)
    state = {
        "m": {k[len("adam_m/"):]: v for k, v in arrays.items() if k.startswith("adam_m/")},
        "v": {k[len("adam_v/"):]: v for k, v in arrays.items() if k.startswith("adam_v/")},
    }
    return model, cfg, state, metadata


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------

@dataclass
class ComparisonRow:
    arm: str
    head: str
    mae: float
    mse: float
    ssim: float


@dataclass
class ComparisonReport:
    which: str
    rows: list = field(default_factory=list)

    def add(self, arm: str, reports: dict):
        for head in ("reconstruction", "prediction"):
            rep = reports[head]
            self.rows.append(ComparisonRow(arm=arm, head=head, mae=rep.mae,
                                           mse=rep.mse, ssim=rep.ssim))

    def ssim_of(self, arm: str, head: str = "prediction") -> float:
        for r in self.rows:
            if r.arm == arm and r.head == head:
                return r.ssim
        raise KeyError(f"no row for arm={arm!r} head={head!r}")

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write(f"# latentwave-report v1 ablation-{self.which}\n")
            fh.write("arm,head,mae,mse,ssim\n")
            for r in self.rows:
                fh.write(f"{r.arm},{r.head},{r.mae:.17g},{r.mse:.17g},{r.ssim:.17g}\n")


def train_arm(train_ds: Dataset, eval_ds: Dataset, cfg: TrainConfig, log=None) -> tuple:
    """Train one configuration and evaluate it; returns (result, reports)."""
    model = ModalityModel(cfg.model_config(), seed=cfg.seed, dtype=cfg.np_dtype())
    result = train(model, train_ds, cfg, log=log)
    reports = evaluate(model, eval_ds, cfg.batch_size)
    return result, reports


def ablate_shared_vs_separate(train_ds: Dataset, eval_ds: Dataset, cfg: TrainConfig,
                              include_control: bool = True, shared=None, log=None) -> ComparisonReport:
    """Shared generators vs per-modality generators, plus a seed-controlled
    identical-config rerun of the shared arm as the zero-gap control."""
    report = ComparisonReport(which="shared")
    shared_cfg = replace(cfg, shared_coeffs=True)
    if shared is None:
        shared = train_arm(train_ds, eval_ds, shared_cfg, log=log)
    report.add("shared", shared[1])
    if include_control:
        _, control_reports = train_arm(train_ds, eval_ds, shared_cfg, log=log)
        report.add("control", control_reports)
    _, separate_reports = train_arm(train_ds, eval_ds, replace(cfg, shared_coeffs=False), log=log)
    report.add("separate", separate_reports)
    return report


def ablate_converter(train_ds: Dataset, eval_ds: Dataset, cfg: TrainConfig,
                     kinds=("linear", "maxout2", "mlp2"), results=None, log=None) -> ComparisonReport:
    report = ComparisonReport(which="converter")
    results = dict(results or {})
    for kind in kinds:
        if kind not in results:
            results[kind] = train_arm(train_ds, eval_ds, replace(cfg, converter=kind), log=log)
        report.add(kind, results[kind][1])
    return report


def ablate_resolution(train_ds: Dataset, eval_ds: Dataset, cfg: TrainConfig,
                      sizes=(5, 7, 14), results=None, log=None) -> ComparisonReport:
    report = ComparisonReport(which="resolution")
    results = dict(results or {})
    for size in sizes:
        if size not in results:
            results[size] = train_arm(train_ds, eval_ds, replace(cfg, zpsi_size=size), log=log)
        report.add(str(size), results[size][1])
    return report
