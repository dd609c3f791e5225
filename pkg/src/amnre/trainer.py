"""Contrastive training of the mask-conditioned ratio estimator.

Each batch pairs simulator draws (theta_i, x_i) against mismatched
parameters obtained by circularly shifting the theta block one row up, so
row i is scored once as a joint draw and once as a product-of-marginals
draw. One mask per row is shared by both terms. All per-epoch randomness
(shuffles, masks) is derived from (seed, epoch), which is what makes
resuming from an epoch boundary bit-exact: nothing about the stream
position needs to be carried across runs.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import checkpoint
from .datastore import Dataset
from .estimator import RatioEstimator
from .masking import sample_mask_values
from .nn import sigmoid, softplus
from .optim import OptimState, adamw_step
from .rng import Rng

__all__ = [
    "TrainConfig",
    "TrainReport",
    "PlateauState",
    "plateau_update",
    "replay_plateau",
    "circular_shift_negatives",
    "batch_loss_and_grads",
    "evaluate",
    "fit",
    "resume",
    "CHANCE_LOSS",
]

# loss of an uninformative classifier: softplus(0) twice
CHANCE_LOSS = 2.0 * math.log(2.0)

DESK_HIDDEN = (3, 128)


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    hidden_layers: int = 3
    hidden_units: int = 128
    batch_size: int = 1024
    batches_per_epoch: int = 256
    lr: float = 1e-3
    min_lr: float = 1e-6
    weight_decay: float = 1e-4
    plateau_patience: int = 7
    plateau_factor: float = 2.0
    max_epochs: int = 1024

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (negatives are shifted rows)")
        if self.plateau_factor <= 1.0:
            raise ValueError("plateau_factor must be > 1")
        if not 0 < self.min_lr <= self.lr:
            raise ValueError("need 0 < min_lr <= lr")


@dataclass
class TrainReport:
    """Per-epoch history plus where the best validation loss occurred."""

    initial_val_loss: float
    epochs: list[tuple[int, float, float, float]] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    stop_reason: str = ""
    wall_time_s: float = 0.0

    def append(self, epoch: int, train_loss: float, val_loss: float, lr: float) -> None:
        self.epochs.append((epoch, train_loss, val_loss, lr))

    @property
    def n_epochs(self) -> int:
        return len(self.epochs)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,train_loss,val_loss,lr\n")
            for epoch, tl, vl, lr in self.epochs:
                fh.write(f"{epoch},{tl!r},{vl!r},{lr!r}\n")


# -- learning-rate schedule ----------------------------------------------------


@dataclass(frozen=True)
class PlateauState:
    lr: float
    best: float = math.inf
    counter: int = 0
    n_reductions: int = 0
    stop: bool = False


def plateau_update(state: PlateauState, val_loss: float, patience: int,
                   factor: float, min_lr: float) -> PlateauState:
    """Reduce-on-plateau step: halve (by ``factor``) after ``patience``
    consecutive non-improvements; the counter resets on improvement and on
    each reduction; once the reduced lr is at or below ``min_lr`` the
    schedule signals stop."""
    if val_loss < state.best:
        return replace(state, best=val_loss, counter=0)
    counter = state.counter + 1
    if counter < patience:
        return replace(state, counter=counter)
    lr = state.lr / factor
    return PlateauState(
        lr=lr, best=state.best, counter=0,
        n_reductions=state.n_reductions + 1, stop=lr <= min_lr,
    )


def replay_plateau(val_losses, lr0: float, patience: int, factor: float,
                   min_lr: float) -> PlateauState:
    """State after feeding a whole validation-loss history through the schedule."""
    state = PlateauState(lr=lr0)
    for v in val_losses:
        state = plateau_update(state, v, patience, factor, min_lr)
    return state


# -- loss ------------------------------------------------------------------


def circular_shift_negatives(thetas: np.ndarray) -> np.ndarray:
    """Row i receives row i+1 (last row wraps to the first): marginal draws
    without extra simulator calls."""
    return np.roll(thetas, -1, axis=0)


def batch_loss_and_grads(est: RatioEstimator, thetas, xs, masks01):
    """Mean pair loss over the batch and its parameter gradients.

    Joint and shifted rows share one forward/backward pass as a stacked
    (2B, din) batch.
    """
    b = thetas.shape[0]
    tneg = circular_shift_negatives(thetas)
    inp = est.inputs(
        np.vstack([thetas, tneg]), np.vstack([xs, xs]), np.vstack([masks01, masks01])
    )
    logits, cache = est.net.forward_cached(inp)
    lj, lm = logits[:b], logits[b:]
    loss = float(np.mean(softplus(-lj) + softplus(lm)))
    upstream = np.concatenate([-sigmoid(-lj), sigmoid(lm)]) / b
    grads = est.net.backward_from(cache, upstream)
    return loss, grads


def batch_loss(est: RatioEstimator, thetas, xs, masks01) -> float:
    b = thetas.shape[0]
    tneg = circular_shift_negatives(thetas)
    inp = est.inputs(
        np.vstack([thetas, tneg]), np.vstack([xs, xs]), np.vstack([masks01, masks01])
    )
    logits = est.net.forward(inp)
    return float(np.mean(softplus(-logits[:b]) + softplus(logits[b:])))


class _ShuffledBatches:
    """Endless batch index stream: a fresh permutation per pass, batches cut
    from it in order, leftover rows dropped."""

    def __init__(self, n: int, batch_size: int, rng: Rng):
        if n < batch_size:
            raise ValueError(f"dataset of {n} rows cannot fill batches of {batch_size}")
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self._perm = rng.permutation(n)
        self._pos = 0

    def next_batch(self) -> np.ndarray:
        if self._pos + self.batch_size > self.n:
            self._perm = self.rng.permutation(self.n)
            self._pos = 0
        out = self._perm[self._pos : self._pos + self.batch_size]
        self._pos += self.batch_size
        return out


def train_epoch(est: RatioEstimator, optim: OptimState, dataset: Dataset,
                cfg: TrainConfig, epoch_rng: Rng) -> float:
    """One epoch of cfg.batches_per_epoch steps; returns mean training loss."""
    batches = _ShuffledBatches(len(dataset), cfg.batch_size, epoch_rng.child(0))
    mask_rng = epoch_rng.child(1)
    d = est.param_dim
    total = 0.0
    for _ in range(cfg.batches_per_epoch):
        idx = batches.next_batch()
        thetas, xs = dataset.batch(idx)
        masks = sample_mask_values(mask_rng, d, cfg.batch_size)
        loss, grads = batch_loss_and_grads(est, thetas, xs, masks)
        adamw_step(est.net, grads, optim)
        total += loss
    return total / cfg.batches_per_epoch


def evaluate(est: RatioEstimator, dataset: Dataset, cfg: TrainConfig, seed_rng: Rng) -> float:
    """Validation loss over the whole dataset in natural order.

    Mask draws come from a stream rebuilt from ``seed_rng`` on every call, so
    repeated evaluations of the same dataset see identical masks and losses
    are comparable across epochs.
    """
    mask_rng = seed_rng.child(0)
    d = est.param_dim
    n = len(dataset)
    total = 0.0
    for start in range(0, n, cfg.batch_size):
        idx = np.arange(start, min(start + cfg.batch_size, n))
        thetas, xs = dataset.batch(idx)
        masks = sample_mask_values(mask_rng, d, len(idx))
        total += batch_loss(est, thetas, xs, masks) * len(idx)
    return total / n


# -- full runs ---------------------------------------------------------------


def _build_estimator(cfg: TrainConfig, train_ds: Dataset, simulator, init_rng: Rng) -> RatioEstimator:
    x_loc, x_scale = train_ds.x_stats()
    return RatioEstimator.build(
        train_ds.param_dim,
        train_ds.obs_dim,
        cfg.hidden_layers,
        cfg.hidden_units,
        rng=init_rng,
        theta_loc=simulator.theta_loc,
        theta_scale=simulator.theta_scale,
        x_loc=x_loc,
        x_scale=x_scale,
    )


def _cfg_meta(cfg: TrainConfig) -> dict:
    return {k: getattr(cfg, k) for k in TrainConfig.__dataclass_fields__}


def fit(cfg: TrainConfig, train_ds: Dataset, val_ds: Dataset, simulator,
        checkpoint_dir=None, log=None) -> tuple[RatioEstimator, TrainReport]:
    """Train to the lr floor (or the epoch cap) and return the best-validation model.

    With ``checkpoint_dir`` set, ``resume.ckpt`` and ``best.ckpt`` are written
    at epoch boundaries and :func:`resume` continues bit-exactly.
    """
    root = Rng(cfg.seed)
    est = _build_estimator(cfg, train_ds, simulator, root.child(0))
    optim = OptimState.for_net(est.net, lr=cfg.lr, weight_decay=cfg.weight_decay)
    report = TrainReport(initial_val_loss=evaluate(est, val_ds, cfg, root.child(2)))
    state = PlateauState(lr=cfg.lr)
    best_params = [p.copy() for p in est.net.parameters()]
    best_val = math.inf
    return _run(cfg, train_ds, val_ds, est, optim, state, report, best_params, best_val,
                start_epoch=1, checkpoint_dir=checkpoint_dir, log=log)


def resume(cfg: TrainConfig, train_ds: Dataset, val_ds: Dataset, simulator,
           checkpoint_dir, log=None) -> tuple[RatioEstimator, TrainReport]:
    """Continue a :func:`fit` run from its last epoch boundary."""
    net, optim, header = checkpoint.load_checkpoint(os.path.join(checkpoint_dir, "resume.ckpt"))
    meta = header["meta"]
    # max_epochs may grow across resumes; everything else must match exactly
    keys = [k for k in TrainConfig.__dataclass_fields__ if k != "max_epochs"]
    saved_cfg = {k: meta["config"][k] for k in keys}
    if saved_cfg != {k: getattr(cfg, k) for k in keys}:
        raise ValueError("checkpoint was written under a different training config")

    x_loc, x_scale = train_ds.x_stats()
    est = RatioEstimator(
        net, train_ds.param_dim, train_ds.obs_dim,
        theta_loc=simulator.theta_loc, theta_scale=simulator.theta_scale,
        x_loc=x_loc, x_scale=x_scale,
    )
    report = TrainReport(initial_val_loss=meta["initial_val_loss"])
    for row in meta["history"]:
        report.append(int(row[0]), float(row[1]), float(row[2]), float(row[3]))
    state = replay_plateau(
        [r[2] for r in report.epochs], cfg.lr, cfg.plateau_patience,
        cfg.plateau_factor, cfg.min_lr,
    )
    optim.lr = state.lr
    best_net, _, best_header = checkpoint.load_checkpoint(os.path.join(checkpoint_dir, "best.ckpt"))
    best_params = best_net.parameters()
    best_val = float(best_header["meta"]["val_loss"])
    report.best_epoch = int(best_header["meta"]["epoch"])
    report.best_val_loss = best_val
    return _run(cfg, train_ds, val_ds, est, optim, state, report, best_params, best_val,
                start_epoch=report.n_epochs + 1, checkpoint_dir=checkpoint_dir, log=log)


def _run(cfg, train_ds, val_ds, est, optim, state, report, best_params, best_val,
         start_epoch, checkpoint_dir, log):
    t0 = time.monotonic()
    root = Rng(cfg.seed)
    stop_reason = "max_epochs"
    for epoch in range(start_epoch, cfg.max_epochs + 1):
        optim.lr = state.lr
        train_loss = train_epoch(est, optim, train_ds, cfg, root.child(1, epoch))
        val_loss = evaluate(est, val_ds, cfg, root.child(2))
        report.append(epoch, train_loss, val_loss, state.lr)
        if log is not None:
            log(f"epoch {epoch:4d}  train {train_loss:.6f}  val {val_loss:.6f}  lr {state.lr:.2e}")

        if val_loss < best_val:
            best_val = val_loss
            best_params = [p.copy() for p in est.net.parameters()]
            report.best_epoch = epoch
            report.best_val_loss = val_loss
            if checkpoint_dir is not None:
                best = est.net.copy()
                best.load_parameters(best_params)
                checkpoint.save_checkpoint(
                    os.path.join(checkpoint_dir, "best.ckpt"), best,
                    meta={"val_loss": best_val, "epoch": epoch},
                )

        state = plateau_update(state, val_loss, cfg.plateau_patience,
                               cfg.plateau_factor, cfg.min_lr)
        if checkpoint_dir is not None:
            checkpoint.save_checkpoint(
                os.path.join(checkpoint_dir, "resume.ckpt"), est.net, optim=optim,
                meta={
                    "config": _cfg_meta(cfg),
                    "initial_val_loss": report.initial_val_loss,
                    "history": [list(row) for row in report.epochs],
                },
            )
        if state.stop:
            stop_reason = "lr_floor"
            break

    est.net.load_parameters(best_params)
    report.best_val_loss = best_val
    report.stop_reason = stop_reason
    report.wall_time_s = time.monotonic() - t0
    return est, report
