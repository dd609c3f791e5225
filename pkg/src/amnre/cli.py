"""Command-line front door for the full pipeline.

Five subcommands cover dataset generation, training, posterior
evaluation, reference sampling, and validation. Every artifact meant
for plotting is a CSV; nothing here draws. All subcommands are
deterministic given identical flags and seeds, so rerunning a stage
reproduces its output files byte for byte.

Exit codes: 0 on success, 2 on usage errors (argparse), 1 on runtime
failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import os
import sys
import time

import numpy as np

from . import datastore, trainer
from .datastore import Dataset
from .diagnostics import calibration_cdf, kl_divergence, write_kl_csv
from .estimator import RatioEstimator
from .gaussian_toy import GaussianToySimulator
from .groundtruth import (
    McmcConfig,
    load_sampleset,
    mh_sample,
    sample_histogram,
    save_sampleset,
    symmetrize,
)
from .masking import SubsetMask, enumerate_masks
from .posterior import (
    average_histograms,
    hpd_levels,
    marginal_histogram,
    write_histogram_csv,
)
from .rng import Rng
from .slcp import SlcpSimulator
from .trainer import TrainConfig

SIMULATORS = {"slcp": SlcpSimulator, "gauss1d": GaussianToySimulator}
HPD_CREDIBILITIES = (0.683, 0.955, 0.997)


def _simulator_for_tag(tag: str):
    try:
        return SIMULATORS[tag]()
    except KeyError:
        raise ValueError(f"no simulator registered for dataset tag {tag!r}") from None


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _read_kv(path) -> dict:
    """key=value lines; blank lines and # comments ignored."""
    out = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"bad config line {raw.rstrip()!r}, expected key=value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _build_config(cls, config_path, overrides: dict):
    """Dataclass config from defaults, then a key=value file, then CLI flags."""
    base = cls()
    values = {}
    if config_path is not None:
        for key, text in _read_kv(config_path).items():
            if key not in cls.__dataclass_fields__:
                raise ValueError(f"unknown {cls.__name__} key {key!r}")
            values[key] = type(getattr(base, key))(text)
    for key, val in overrides.items():
        if val is not None:
            values[key] = val
    return dataclasses.replace(base, **values)


def _parse_masks(spec: str, dim: int):
    if spec == "all1d2d":
        masks = [m for m in enumerate_masks(dim) if m.n_selected in (1, 2)]
    elif spec == "all":
        masks = list(enumerate_masks(dim))
    else:
        masks = []
        for part in spec.split(","):
            part = part.strip()
            if not part:
                continue
            mask = SubsetMask.from_string(part)
            if mask.dim != dim:
                raise ValueError(f"mask {part!r} has {mask.dim} bits, expected {dim}")
            masks.append(mask)
        if not masks:
            raise ValueError("no masks given")
    return sorted(masks, key=lambda m: (m.n_selected, m.indices()))


# -- subcommands ----------------------------------------------------------------


def cmd_simulate(args) -> int:
    sim = SIMULATORS[args.simulator]()
    ds = datastore.generate(args.out, sim, args.count, args.seed, workers=args.workers)
    size = os.path.getsize(args.out)
    print(
        f"wrote {args.out}: {ds.header.count} records ({sim.tag}), "
        f"{size} bytes, sha256 {_sha256(args.out)}"
    )
    return 0


def cmd_train(args) -> int:
    train_ds = Dataset.open(args.train)
    val_ds = Dataset.open(args.val)
    if (train_ds.param_dim, train_ds.obs_dim) != (val_ds.param_dim, val_ds.obs_dim):
        raise ValueError("train and validation datasets disagree on dimensions")
    if train_ds.tag != val_ds.tag:
        raise ValueError("train and validation datasets built by different simulators")
    sim = _simulator_for_tag(train_ds.tag)

    overrides = {
        name: getattr(args, name) for name in TrainConfig.__dataclass_fields__
    }
    cfg = _build_config(TrainConfig, args.config, overrides)
    log = None if args.quiet else print

    if args.resume:
        if args.checkpoint_dir is None:
            raise ValueError("--resume needs --checkpoint-dir")
        est, report = trainer.resume(cfg, train_ds, val_ds, sim, args.checkpoint_dir, log=log)
    else:
        if args.checkpoint_dir is not None:
            os.makedirs(args.checkpoint_dir, exist_ok=True)
        est, report = trainer.fit(
            cfg, train_ds, val_ds, sim, checkpoint_dir=args.checkpoint_dir, log=log
        )

    est.save(
        args.out,
        extra_meta={
            "simulator": train_ds.tag,
            "train_config": dataclasses.asdict(cfg),
            "best_epoch": report.best_epoch,
            "best_val_loss": report.best_val_loss,
            "stop_reason": report.stop_reason,
        },
    )
    report_path = args.report
    if report_path is None:
        report_path = os.path.splitext(args.out)[0] + ".report.csv"
    report.to_csv(report_path)
    print(
        f"model {args.out}: best epoch {report.best_epoch}, "
        f"val loss {report.best_val_loss:.6f}, stopped by {report.stop_reason} "
        f"after {report.n_epochs} epochs, {report.wall_time_s:.1f} s"
    )
    return 0


def cmd_eval(args) -> int:
    t0 = time.monotonic()
    models = [RatioEstimator.load(path) for path in args.model]
    ds = Dataset.open(args.obs_file)
    sim = _simulator_for_tag(ds.tag)
    for est in models:
        if (est.param_dim, est.obs_dim) != (ds.param_dim, ds.obs_dim):
            raise ValueError("model and observation dataset disagree on dimensions")
    if not 0 <= args.obs_index < ds.header.count:
        raise ValueError(f"--obs-index {args.obs_index} outside dataset of {ds.header.count}")
    _, x = ds.record(args.obs_index)
    masks = _parse_masks(args.masks, ds.param_dim)

    os.makedirs(args.out, exist_ok=True)
    hpd_rows = []
    for mask in masks:
        hists = [marginal_histogram(est, sim, x, mask, bins=args.bins) for est in models]
        hist = hists[0] if len(hists) == 1 else average_histograms(hists)
        write_histogram_csv(hist, os.path.join(args.out, f"hist_{mask.to_string()}.csv"))
        for cred, level in zip(HPD_CREDIBILITIES, hpd_levels(hist, HPD_CREDIBILITIES)):
            hpd_rows.append((mask, cred, level))
    with open(os.path.join(args.out, "hpd.csv"), "w") as fh:
        fh.write("mask,credibility,density_threshold\n")
        for mask, cred, level in hpd_rows:
            fh.write(f"{mask.to_string()},{cred!r},{float(level)!r}\n")
    dt = time.monotonic() - t0
    print(f"wrote {len(masks)} histograms + hpd.csv to {args.out} in {dt:.2f} s")
    return 0


def cmd_ground_truth(args) -> int:
    ds = Dataset.open(args.obs_file)
    if ds.tag != "slcp":
        raise ValueError("reference sampling needs the tractable slcp likelihood")
    if not 0 <= args.obs_index < ds.header.count:
        raise ValueError(f"--obs-index {args.obs_index} outside dataset of {ds.header.count}")
    _, x = ds.record(args.obs_index)
    cfg = _build_config(McmcConfig, args.mcmc_config, {"seed": args.seed})
    ss = mh_sample(x, cfg)
    if not args.no_symmetrize:
        # chain c consumes Rng(seed).child(c); the next index is free
        ss = symmetrize(ss, Rng(cfg.seed).child(cfg.n_chains))
    save_sampleset(args.out, ss)
    if args.csv is not None:
        ss.to_csv(args.csv)
    rates = " ".join(f"{r:.3f}" for r in ss.acceptance_rates)
    print(f"wrote {len(ss)} samples to {args.out}; acceptance rates {rates}")
    for warning in ss.warnings:
        print(f"warning: {warning}")
    return 0


def cmd_diagnose(args) -> int:
    est = RatioEstimator.load(args.model)
    ds = Dataset.open(args.test)
    sim = _simulator_for_tag(ds.tag)
    if (est.param_dim, est.obs_dim) != (ds.param_dim, ds.obs_dim):
        raise ValueError("model and test dataset disagree on dimensions")
    os.makedirs(args.out, exist_ok=True)

    n = min(args.pairs, ds.header.count)
    thetas, xs = ds.batch(np.arange(n))
    report = calibration_cdf(est, sim, thetas, xs, Rng(args.seed), bins=args.bins)
    report.to_csv(os.path.join(args.out, "calibration.csv"))
    for coord, ks in zip(report.coordinates, report.ks):
        print(f"coordinate {coord}: KS {float(ks):.4f} over {n} pairs")

    if args.truth is not None:
        ss = load_sampleset(args.truth)
        if ss.observation is None:
            raise ValueError("truth sample set does not record its observation")
        if ss.param_dim != ds.param_dim:
            raise ValueError("truth sample set and test dataset disagree on dimensions")
        masks = _parse_masks(args.masks, ds.param_dim)
        rows = []
        for mask in masks:
            truth_hist = sample_histogram(
                ss, mask, bins=args.bins,
                box_lo=float(sim.box_lo[0]), box_hi=float(sim.box_hi[0]),
            )
            surr_hist = marginal_histogram(est, sim, ss.observation, mask, bins=args.bins)
            rows.append(
                (mask, kl_divergence(truth_hist, surr_hist), kl_divergence(surr_hist, truth_hist))
            )
        write_kl_csv(os.path.join(args.out, "kl.csv"), rows)
        worst = max(row[1] for row in rows)
        print(f"wrote kl.csv with {len(rows)} masks, worst forward KL {worst:.4f}")
    return 0


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amnre",
        description="train one mask-conditioned ratio estimator, query any marginal",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a dataset of (theta, x) records")
    p.add_argument("--simulator", choices=sorted(SIMULATORS), required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None,
                   help="process count; default honors AMNRE_THREADS")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit the classifier on a dataset pair")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--out", required=True, help="trained model checkpoint path")
    p.add_argument("--config", default=None, help="key=value file of training fields")
    p.add_argument("--report", default=None, help="loss curve CSV (default <out>.report.csv)")
    p.add_argument("--checkpoint-dir", default=None, help="epoch checkpoints for --resume")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--hidden-layers", type=int, default=None)
    p.add_argument("--hidden-units", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--batches-per-epoch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--min-lr", type=float, default=None)
    p.add_argument("--weight-decay", type=float, default=None)
    p.add_argument("--plateau-patience", type=int, default=None)
    p.add_argument("--plateau-factor", type=float, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="write marginal posterior histograms for one observation")
    p.add_argument("--model", action="append", required=True,
                   help="repeat to average densities over models")
    p.add_argument("--obs-file", required=True, help="dataset holding the observation")
    p.add_argument("--obs-index", type=int, default=0)
    p.add_argument("--masks", default="all1d2d",
                   help='"all1d2d", "all", or comma-separated bit strings')
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ground-truth", help="sample the reference posterior by MCMC")
    p.add_argument("--obs-file", required=True)
    p.add_argument("--obs-index", type=int, default=0)
    p.add_argument("--mcmc-config", default=None, help="key=value file of sampler fields")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="sample set path")
    p.add_argument("--csv", default=None, help="also export samples as CSV")
    p.add_argument("--no-symmetrize", action="store_true",
                   help="keep raw chains instead of exact sign re-randomization")
    p.set_defaults(func=cmd_ground_truth)

    p = sub.add_parser("diagnose", help="calibration percentiles and KL against a reference")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True, help="held-out dataset")
    p.add_argument("--truth", default=None, help="sample set from ground-truth")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--pairs", type=int, default=2048)
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--masks", default="all1d2d")
    p.set_defaults(func=cmd_diagnose)

    return parser


def entrypoint(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
