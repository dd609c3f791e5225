"""Train the 1d conjugate-Gaussian toy and compare against the exact ratio.

The toy has everything in closed form (prior N(0,1), likelihood N(theta,1),
evidence N(0,2)), so the trained log-ratio surface can be checked pointwise.
Writes the fitted-vs-exact grid to toy_grid.csv for plotting and prints the
mean absolute error.

Usage: python scripts/run_toy_check.py [--out-dir OUT] [--seed S]
"""

import argparse
import os
import time

import numpy as np

from amnre import datastore
from amnre.gaussian_toy import GaussianToySimulator, exact_log_ratio
from amnre.masking import SubsetMask
from amnre.trainer import TrainConfig, fit


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="runs/toy")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--train-count", type=int, default=1 << 17)
    ap.add_argument("--max-epochs", type=int, default=300)
    args = ap.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)

    sim = GaussianToySimulator()
    train = datastore.generate(os.path.join(args.out_dir, "train.ds"), sim,
                               args.train_count, seed=500)
    val = datastore.generate(os.path.join(args.out_dir, "val.ds"), sim,
                             args.train_count // 8, seed=501)

    cfg = TrainConfig(seed=args.seed, hidden_layers=3, hidden_units=128,
                      batch_size=1024, batches_per_epoch=128,
                      plateau_patience=9, max_epochs=args.max_epochs)
    t0 = time.perf_counter()
    est, report = fit(cfg, train, val, sim, log=print)
    print(f"trained in {time.perf_counter() - t0:.0f}s, "
          f"best val {report.best_val_loss:.4f} at epoch {report.best_epoch}")
    est.save(os.path.join(args.out_dir, "toy.ckpt"))
    report.to_csv(os.path.join(args.out_dir, "toy.report.csv"))

    grid = np.linspace(-2.0, 2.0, 50)
    tt, xx = np.meshgrid(grid, grid, indexing="ij")
    thetas, xs = tt.reshape(-1, 1), xx.reshape(-1, 1)
    approx = est.log_ratio_batch(thetas, xs, SubsetMask.full(1))
    exact = exact_log_ratio(thetas[:, 0], xs[:, 0])
    mae = float(np.mean(np.abs(approx - exact)))

    grid_csv = os.path.join(args.out_dir, "toy_grid.csv")
    with open(grid_csv, "w") as fh:
        fh.write("theta,x,log_r_fit,log_r_exact\n")
        for i in range(thetas.shape[0]):
            fh.write(f"{thetas[i, 0]!r},{xs[i, 0]!r},{approx[i]!r},{exact[i]!r}\n")
    print(f"wrote {grid_csv}")
    print(f"log-ratio MAE over the 50x50 grid: {mae:.4f}")


if __name__ == "__main__":
    main()
