"""Full SLCP workflow driven through the command line interface.

simulate -> train (one model per seed) -> ground-truth -> eval -> diagnose,
all artifacts under one output directory. Default scale matches the
acceptance setup (3x128 network, 2^17 training pairs, three seeds); pass
--quick for a minutes-scale smoke run with correspondingly rough posteriors.

Usage: python scripts/run_slcp_pipeline.py [--out-dir OUT] [--quick]
"""

import argparse
import os
import sys
import time

from amnre.cli import entrypoint


def run(argv):
    print("$ amnre " + " ".join(argv), flush=True)
    rc = entrypoint(argv)
    if rc != 0:
        sys.exit(rc)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="runs/slcp")
    ap.add_argument("--quick", action="store_true",
                    help="tiny budgets, minutes instead of hours")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--obs-index", type=int, default=1)
    args = ap.parse_args()
    out = args.out_dir
    os.makedirs(out, exist_ok=True)
    t0 = time.perf_counter()

    if args.quick:
        train_count, val_count = 1 << 14, 1 << 12
        train_flags = ["--hidden-layers", "2", "--hidden-units", "64",
                       "--batch-size", "256", "--batches-per-epoch", "64",
                       "--max-epochs", "40"]
        mcmc = "n_chains=8\nsteps=100000\nburn_in=20000\nthin=5\nproposal_std=0.1\n"
    else:
        train_count, val_count = 1 << 17, 1 << 14
        train_flags = []  # defaults run to the lr floor, about 310 epochs
        mcmc = "n_chains=8\nsteps=2000000\nburn_in=200000\nthin=10\nproposal_std=0.1\n"

    run(["simulate", "--simulator", "slcp", "--count", str(val_count),
         "--seed", "1001", "--out", f"{out}/val.ds"])
    run(["simulate", "--simulator", "slcp", "--count", "4096",
         "--seed", "1002", "--out", f"{out}/test.ds"])

    # one fresh training set per seed so the averaged posterior has seen
    # three independent simulation batches
    models = []
    for s in args.seeds:
        train_ds = f"{out}/train_s{s}.ds"
        run(["simulate", "--simulator", "slcp", "--count", str(train_count),
             "--seed", str(1000 + 10 * s), "--out", train_ds])
        model = f"{out}/model_s{s}.ckpt"
        run(["train", "--train", train_ds, "--val", f"{out}/val.ds",
             "--seed", str(s), "--out", model, *train_flags])
        models.append(model)

    cfg_path = f"{out}/mcmc.cfg"
    with open(cfg_path, "w") as fh:
        fh.write(mcmc)
    run(["ground-truth", "--obs-file", f"{out}/test.ds",
         "--obs-index", str(args.obs_index), "--mcmc-config", cfg_path,
         "--seed", str(9000 + args.obs_index), "--out", f"{out}/truth.mc"])

    eval_args = ["eval", "--obs-file", f"{out}/test.ds",
                 "--obs-index", str(args.obs_index), "--masks", "all1d2d",
                 "--bins", "100", "--out", f"{out}/posteriors"]
    for m in models:
        eval_args += ["--model", m]
    run(eval_args)

    run(["diagnose", "--model", models[0], "--test", f"{out}/test.ds",
         "--truth", f"{out}/truth.mc", "--out", f"{out}/diagnostics",
         "--pairs", "2048" if not args.quick else "256"])

    print(f"pipeline done in {time.perf_counter() - t0:.0f}s; "
          f"histograms in {out}/posteriors, KL and calibration in {out}/diagnostics")


if __name__ == "__main__":
    main()
