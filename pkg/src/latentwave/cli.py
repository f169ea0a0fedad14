"""Operator command line: data generation, simulation, training, evaluation,
hidden-structure analysis, ablations, and the SIRT baseline.

Exit codes: 0 success, 2 configuration/contract error, 3 I/O error,
4 numeric error.  Error messages go to stderr prefixed with a machine
parsable class tag (``error[config]:`` / ``error[io]:`` / ``error[numeric]:``).
Every command writes deterministic artifacts: identical inputs and flags
reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys

import numpy as np

from .errors import (ConfigError, ContainerError, ContractError, GeometryError,
                     NumericError)

_EXIT_CONFIG = 2
_EXIT_IO = 3
_EXIT_NUMERIC = 4

_TRAIN_KEYS = {"epochs", "batch_size", "lr0", "betas", "weight_decay", "grad_clip",
               "seed", "dtype", "converter", "shared_coeffs", "zpsi_size",
               "head_weights", "eval_every", "checkpoint_every"}
_CONFIG_KEYS = {"preset", "train_data", "test_data", "out_checkpoint", "out_runlog",
                "train", "ablate"}
_ABLATE_KEYS = {"which", "sizes", "kinds", "include_control", "out_csv"}


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(f"error[{kind}]: {message}\n")
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads:
        _limit_threads(args.threads)
    try:
        return args.func(args)
    except (ConfigError, ContractError, GeometryError) as exc:
        return _fail("config", str(exc), _EXIT_CONFIG)
    except ContainerError as exc:
        return _fail("io", str(exc), _EXIT_IO)
    except NumericError as exc:
        return _fail("numeric", str(exc), _EXIT_NUMERIC)
    except OSError as exc:
        return _fail("io", str(exc), _EXIT_IO)


def _limit_threads(n: int):
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(limits=n)
    except ImportError:
        import os
        os.environ["OMP_NUM_THREADS"] = str(n)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latentwave",
                                description="paired-modality latent wave toolkit")
    p.add_argument("--threads", type=int, default=0,
                   help="cap BLAS/worker threads (default: machine parallelism)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a paired synthetic dataset")
    g.add_argument("--kind", required=True, choices=["fwi", "ct"])
    g.add_argument("--family", default="flat_vel_a",
                   help="fwi family_difficulty, e.g. flat_vel_a, curve_fault_b")
    g.add_argument("--n", type=int, required=True, help="training samples")
    g.add_argument("--n-test", type=int, default=0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output path prefix")
    g.add_argument("--sim", default="desk", choices=["desk", "paper"])
    g.add_argument("--dtype", default="f32", choices=["f32", "f64"])
    g.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("simulate", help="run a forward simulator on stored properties")
    s.add_argument("--kind", required=True, choices=["acoustic", "radon"])
    s.add_argument("--property", required=True, help="container with a property array")
    s.add_argument("--array", default="property", help="array name inside the container")
    s.add_argument("--out", required=True)
    s.add_argument("--dx", type=float, default=10.0, help="grid spacing (acoustic)")
    s.add_argument("--dt", type=float, default=8e-4)
    s.add_argument("--nt", type=int, default=1200)
    s.add_argument("--record-every", type=int, default=15)
    s.add_argument("--sources", type=int, default=3)
    s.add_argument("--f-peak", type=float, default=15.0)
    s.add_argument("--geometry", default="parallel:60:128",
                   help="radon geometry kind:arg:arg, e.g. parallel:60:128, "
                        "fan:40:96, tri_array:16:192")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="train the paired pipeline from a config file")
    t.add_argument("--config", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True, help="metrics CSV path")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("sirt", help="SIRT baseline on a CT dataset")
    r.add_argument("--data", required=True)
    r.add_argument("--iters", type=int, default=200)
    r.add_argument("--omega", type=float, default=1.0)
    r.add_argument("--no-clamp", action="store_true", help="disable the nonnegativity clamp")
    r.add_argument("--max-samples", type=int, default=0, help="0: all samples")
    r.add_argument("--out", required=True, help="output path prefix")
    r.set_defaults(func=cmd_sirt)

    a = sub.add_parser("ablate", help="train and compare ablation arms")
    a.add_argument("--which", required=True, choices=["shared", "converter", "resolution"])
    a.add_argument("--config", required=True)
    a.set_defaults(func=cmd_ablate)

    z = sub.add_parser("analyze", help="latent wave structure analysis of a checkpoint")
    z.add_argument("--ckpt", required=True)
    z.add_argument("--data", required=True)
    z.add_argument("--out", required=True, help="output directory")
    z.add_argument("--samples", type=int, default=8, help="samples for residual reports")
    z.add_argument("--images", type=int, default=4, help="samples dumped as PGM")
    z.set_defaults(func=cmd_analyze)
    return p


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    from . import synth
    if args.n < 1:
        raise ConfigError(f"--n must be >= 1, got {args.n}")
    sim = None
    if args.kind == "fwi":
        family, difficulty = _parse_family(args.family)
        spec = synth.FamilySpec(family=family, difficulty=difficulty, seed=args.seed)
        sim = synth.FWI_SIM_PAPER if args.sim == "paper" else synth.FWI_SIM_DESK
    else:
        spec = {"seed": args.seed}
        sim = synth.CT_SIM_PAPER if args.sim == "paper" else synth.CT_SIM_DESK
    paths = synth.build_dataset(args.kind, spec, args.n, args.n_test, args.out,
                                sim=sim, dtype=args.dtype)
    for p in paths:
        print(p)
    return 0


def _parse_family(text: str):
    parts = text.rsplit("_", 1)
    if len(parts) != 2 or parts[1] not in ("a", "b"):
        raise ConfigError(f"family must look like flat_vel_a, got {text!r}")
    return parts[0], parts[1]


def cmd_simulate(args) -> int:
    from .acoustic import VelocityMap, acoustic_simulate
    from .container import read_container, write_container
    from .projector import make_geometry, radon_project
    arrays, meta = read_container(args.property)
    if args.array not in arrays:
        raise ConfigError(f"{args.property} has no array {args.array!r}; "
                          f"available: {sorted(arrays)}")
    prop = arrays[args.array]
    stack = prop[None] if prop.ndim == 2 else prop
    if args.kind == "acoustic":
        out = []
        for field in stack:
            vel = VelocityMap(c=field.astype(np.float64), dx=args.dx)
            grid = vel.shape[1]
            src_cols = np.linspace(0, grid - 1, args.sources).round().astype(int)
            gather = acoustic_simulate(vel, [(0, c) for c in src_cols],
                                       [(0, rcol) for rcol in range(grid)],
                                       dt=args.dt, nt=args.nt, f_peak=args.f_peak,
                                       record_every=args.record_every)
            out.append(gather.p)
        measurement = np.stack(out)
        header = {"kind": "acoustic", "dt": args.dt * args.record_every, "dx": args.dx,
                  "nt": args.nt, "f_peak": args.f_peak}
    else:
        kind, kargs = _parse_geometry(args.geometry)
        out = []
        geo = None
        for field in stack:
            geo = make_geometry(kind, field.shape, **kargs)
            out.append(radon_project(field.astype(np.float64), geo).values)
        measurement = np.stack(out)
        header = {"kind": "radon", "geometry": {"kind": kind, **kargs}}
    write_container(args.out, {"measurement": measurement}, header)
    print(args.out)
    return 0


def _parse_geometry(text: str):
    parts = text.split(":")
    kind = parts[0]
    nums = [int(x) for x in parts[1:]]
    if kind == "parallel" and len(nums) == 2:
        return kind, {"views": nums[0], "detectors": nums[1]}
    if kind == "fan" and len(nums) in (2, 3):
        kw = {"views": nums[0], "detectors": nums[1]}
        if len(nums) == 3:
            kw["radius"] = float(nums[2])
        return kind, kw
    if kind == "tri_array" and len(nums) == 2:
        return kind, {"per_array": nums[0], "detectors": nums[1]}
    raise ConfigError(f"cannot parse geometry {text!r}")


def _load_experiment(path) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    train_doc = doc.get("train", {})
    bad = set(train_doc) - _TRAIN_KEYS
    if bad:
        raise ConfigError(f"{path}: unknown train keys {sorted(bad)}")
    abl = doc.get("ablate", {})
    bad = set(abl) - _ABLATE_KEYS
    if bad:
        raise ConfigError(f"{path}: unknown ablate keys {sorted(bad)}")
    doc["_bytes_hash"] = hashlib.sha256(raw).hexdigest()
    return doc


def _train_config(doc: dict):
    from .training import TrainConfig
    kw = dict(doc.get("train", {}))
    if "betas" in kw:
        kw["betas"] = tuple(kw["betas"])
    if "head_weights" in kw:
        kw["head_weights"] = tuple(kw["head_weights"])
    return TrainConfig(preset=doc.get("preset", "fwi-desk"), **kw)


def _load_datasets(doc: dict):
    from .synth import load_dataset, Dataset
    paths = doc.get("train_data")
    if not paths:
        raise ConfigError("config needs train_data")
    if isinstance(paths, str):
        paths = [paths]
    parts = [load_dataset(p) for p in paths]
    if len(parts) == 1:
        train = parts[0]
    else:
        shapes = {p.measurement.shape[1:] for p in parts}
        if len(shapes) > 1:
            raise ConfigError(f"joint training needs matching sample shapes, got {shapes}")
        train = Dataset(
            measurement=np.concatenate([p.measurement for p in parts]),
            prop=np.concatenate([p.prop for p in parts]),
            norm_measurement=parts[0].norm_measurement,
            norm_property=parts[0].norm_property,
            metadata={"joint": [p.metadata for p in parts]},
        )
    test = load_dataset(doc["test_data"]) if doc.get("test_data") else None
    return train, test


def cmd_train(args) -> int:
    from .models import ModalityModel
    from .training import train, save_checkpoint
    doc = _load_experiment(args.config)
    cfg = _train_config(doc)
    train_ds, test_ds = _load_datasets(doc)
    model = ModalityModel(cfg.model_config(), seed=cfg.seed, dtype=cfg.np_dtype())
    result = train(model, train_ds, cfg, eval_dataset=test_ds,
                   log=lambda msg: print(msg, file=sys.stderr))
    out_ckpt = doc.get("out_checkpoint", "checkpoint.lwc")
    save_checkpoint(out_ckpt, result, cfg)
    print(out_ckpt)
    if doc.get("out_runlog"):
        result.runlog.write_csv(doc["out_runlog"],
                                extra_comments=[f"experiment_hash={doc['_bytes_hash']}"])
        print(doc["out_runlog"])
    if result.diverged:
        return _fail("numeric", "training diverged; checkpoint holds the last good step",
                     _EXIT_NUMERIC)
    return 0


def cmd_eval(args) -> int:
    from .synth import load_dataset
    from .training import evaluate, load_checkpoint
    from .reports import write_csv
    model, cfg, _, _ = load_checkpoint(args.ckpt)
    dataset = load_dataset(args.data)
    reports = evaluate(model, dataset, cfg.batch_size)
    rows = []
    for head in sorted(reports):
        rep = reports[head]
        rows.append([head, rep.scale, rep.mae, rep.mse, rep.ssim, rep.n])
    write_csv(args.out, "eval", ["head", "scale", "mae", "mse", "ssim", "n"], rows,
              comments=[f"ckpt_hash={cfg.config_hash()}"])
    print(args.out)
    return 0


def cmd_sirt(args) -> int:
    from .metrics import ssim_value
    from .projector import Sinogram, tri_array_geometry, system_matrix
    from .reports import write_csv, write_pgm
    from .baselines import sirt_system
    from .synth import load_dataset
    dataset = load_dataset(args.data)
    meta = dataset.metadata
    if meta.get("kind") != "ct":
        raise ConfigError(f"{args.data}: sirt needs a ct dataset, got kind {meta.get('kind')!r}")
    sim = meta["sim"]
    grid = dataset.prop.shape[-2:]
    geometry = tri_array_geometry(grid, per_array=sim["per_array"],
                                  detectors=sim["detectors"])
    mat = system_matrix(geometry, grid)
    n = dataset.n if not args.max_samples else min(dataset.n, args.max_samples)
    resid_rows = []
    metric_rows = []
    recons = []
    for i in range(n):
        sino = dataset.norm_measurement.denormalize(
            dataset.measurement[i].astype(np.float64))
        res = sirt_system(mat, sino.reshape(-1), iters=args.iters, omega=args.omega,
                          clamp_nonnegative=not args.no_clamp)
        recon = res.image.reshape(grid)
        recons.append(recon)
        for k, val in enumerate(res.residuals):
            resid_rows.append([i, k, val])
        truth = dataset.norm_property.denormalize(dataset.prop[i].astype(np.float64))
        rng_span = max(dataset.norm_property.hi - dataset.norm_property.lo, 1e-12)
        metric_rows.append([i, float(np.mean(np.abs(recon - truth))),
                            float(np.mean((recon - truth) ** 2)),
                            ssim_value(recon, truth, data_range=rng_span)])
    write_csv(f"{args.out}_residuals.csv", "sirt-residuals",
              ["sample", "iteration", "residual"], resid_rows,
              comments=[f"iters={args.iters}", f"omega={args.omega:.17g}"])
    write_csv(f"{args.out}_metrics.csv", "sirt-metrics",
              ["sample", "mae", "mse", "ssim"], metric_rows)
    write_pgm(f"{args.out}_sample0.pgm", recons[0])
    print(f"{args.out}_residuals.csv")
    print(f"{args.out}_metrics.csv")
    return 0


def cmd_ablate(args) -> int:
    from .training import (ablate_converter, ablate_resolution,
                           ablate_shared_vs_separate)
    doc = _load_experiment(args.config)
    cfg = _train_config(doc)
    train_ds, test_ds = _load_datasets(doc)
    if test_ds is None:
        raise ConfigError("ablate needs test_data for the comparison metrics")
    abl = doc.get("ablate", {})
    log = lambda msg: print(msg, file=sys.stderr)
    if args.which == "shared":
        report = ablate_shared_vs_separate(train_ds, test_ds, cfg,
                                           include_control=abl.get("include_control", True),
                                           log=log)
    elif args.which == "converter":
        report = ablate_converter(train_ds, test_ds, cfg,
                                  kinds=tuple(abl.get("kinds", ("linear", "maxout2", "mlp2"))),
                                  log=log)
    else:
        report = ablate_resolution(train_ds, test_ds, cfg,
                                   sizes=tuple(abl.get("sizes", (5, 7, 14))), log=log)
    out_csv = abl.get("out_csv", f"ablate_{args.which}.csv")
    report.write_csv(out_csv)
    print(out_csv)
    return 0


def cmd_analyze(args) -> int:
    import os
    from . import finola, wave_analysis as wa
    from .models import correlation_probe, r2_score
    from .reports import write_csv, write_pgm
    from .synth import load_dataset
    from .training import load_checkpoint, predict

    model, cfg, _, _ = load_checkpoint(args.ckpt)
    dataset = load_dataset(args.data)
    os.makedirs(args.out, exist_ok=True)
    recon, pred, v_meas, v_prop = predict(model, dataset.measurement, cfg.batch_size)
    v_meas64 = v_meas.astype(np.float64)
    v_prop64 = v_prop.astype(np.float64)

    # (b) latent linear-correlation probe
    probe = correlation_probe((v_meas64, v_prop64))
    rows = [["refit", max(probe.r2, 0.0), int(probe.ridge_used), probe.n]]
    if model.cfg.converter == "linear":
        r2_tr = r2_score(v_meas64, v_prop64, model.params["converter.t"].data.astype(np.float64))
        rows.insert(0, ["trained_t", max(r2_tr, 0.0), 0, v_meas64.shape[0]])
    write_csv(os.path.join(args.out, "correlation.csv"), "latent-correlation",
              ["fit", "r2", "ridge", "n"], rows)

    # (a) + (c): shared-speed residuals and the eigenvalue spectrum
    try:
        coeffs = model.coefficient_matrices()
        spectrum = wa.diagonalize(coeffs)
        write_csv(os.path.join(args.out, "eigenvalues.csv"), "wave-spectrum",
                  ["channel", "lambda_re", "lambda_im"],
                  [[k, spectrum.lambdas[k].real, spectrum.lambdas[k].imag]
                   for k in range(spectrum.channels)],
                  comments=[f"recon_residual={spectrum.recon_residual:.17g}",
                            f"cond_v={spectrum.cond_v:.17g}"])
        res_rows = []
        n_res = min(dataset.n, args.samples)
        for i in range(n_res):
            z_meas = finola.multipath_autoregress(v_meas64[i], model.cfg.paths, coeffs,
                                                  *model.cfg.zp_grid, mode=model.cfg.finola_mode)
            z_prop = finola.multipath_autoregress(v_prop64[i], model.cfg.paths, coeffs,
                                                  model.cfg.zpsi_size, model.cfg.zpsi_size,
                                                  mode=model.cfg.finola_mode)
            report = wa.shared_speed_report(coeffs, z_meas, z_prop)
            for modality, chans in report.residuals.items():
                for r in chans:
                    res_rows.append([i, r.channel, r.lam.real, r.lam.imag,
                                     r.rms_residual, r.max_residual,
                                     r.relative_residual, modality])
        write_csv(os.path.join(args.out, "wave_residuals.csv"), "wave-residual",
                  ["sample"] + list(wa.REPORT_COLUMNS), res_rows)
    except NumericError as exc:
        sys.stderr.write(f"error[numeric]: diagonalization failed: {exc}; "
                         "continuing with correlation outputs\n")

    # (d) figure-style dumps at the property extents
    npr = dataset.norm_property
    for i in range(min(dataset.n, args.images)):
        truth = npr.denormalize(dataset.prop[i].astype(np.float64))
        guess = npr.denormalize(pred[i, 0].astype(np.float64))
        lo, hi = truth.min(), truth.max()
        write_pgm(os.path.join(args.out, f"sample{i}_property.pgm"), truth, lo, hi)
        write_pgm(os.path.join(args.out, f"sample{i}_prediction.pgm"), guess, lo, hi)
        write_pgm(os.path.join(args.out, f"sample{i}_abs_error.pgm"), np.abs(guess - truth))
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
