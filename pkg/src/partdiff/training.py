"""Denoising score-matching training loop.

Per instance: draw t uniformly from [t_min, T], diffuse the ground-truth
pose set to time t, and regress the network score against the
closed-form kernel score  -z / std(t).  The loss is weighted by the
kernel variance, which collapses to the stable form

    || std(t) * score(q_t, t) + z ||^2 / n_parts,

summed over all coordinates and averaged per part.  t_min stays
strictly positive because the target is undefined at t = 0.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Value
from .errors import ContractError, NumericalError
from .network import ScoreNet
from .params import adam_step
from .sde import DiffusionSchedule


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 16
    lr: float = 1e-4
    t_min: float = 1e-3
    seed: int = 0
    schedule: DiffusionSchedule = field(default_factory=DiffusionSchedule)
    checkpoint_every: int = 0  # 0: only at the end

    def __post_init__(self):
        if not (0.0 < self.t_min < self.schedule.T):
            raise ContractError(
                f"t_min must lie in (0, T), got {self.t_min} with T={self.schedule.T}"
            )
        if self.batch_size < 1:
            raise ContractError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ContractError("epochs must be >= 0")


def dsm_loss(model: ScoreNet, instance, t: float, rng: np.random.Generator) -> Value:
    """Score-matching loss of one instance at one diffusion time."""
    return _group_loss(
        model,
        np.stack([np.asarray(p, dtype=float) for p in instance.parts])[None],
        np.asarray(instance.gt_poses, dtype=float)[None],
        np.array([float(t)]),
        rng,
    )


def _group_loss(
    model: ScoreNet,
    parts: np.ndarray,  # (B, N, 1000, 3)
    q0: np.ndarray,  # (B, N, 6)
    t: np.ndarray,  # (B,)
    rng: np.random.Generator,
) -> Value:
    """Summed per-instance losses for a same-part-count group."""
    schedule = model.schedule
    n = q0.shape[1]
    std = schedule.kernel_std(t)  # (B,)
    z = rng.standard_normal(q0.shape)
    qt = q0 + std[:, None, None] * z
    feats = model.encode_parts(parts)
    score = model.score_from_features(feats, Value(qt), t)
    resid = ad.add(ad.scale(score, std[:, None, None]), Value(z))
    # sum_b ||resid_b||^2 / n == the group's summed per-part-averaged losses
    return ad.scale(ad.square_norm(resid), 1.0 / n)


def train(model: ScoreNet, dataset, config: TrainConfig, out_dir=None):
    """Run the training loop; returns (model, loss_curve).

    loss_curve is a list of (epoch, mean_loss).  Instances are shuffled
    each epoch and grouped by part count inside each minibatch so every
    group stacks densely.  A fixed seed fixes the entire trajectory.
    """
    if len(dataset) == 0:
        raise ContractError("train: empty dataset")
    rng = np.random.default_rng([config.seed, 0x7121])
    curve: list[tuple[int, float]] = []
    t0 = time.monotonic()
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            batch = [dataset[i] for i in batch_idx]
            t_draws = rng.uniform(config.t_min, config.schedule.T, size=len(batch))
            groups: dict[int, list[int]] = {}
            for pos, inst in enumerate(batch):
                groups.setdefault(len(inst.parts), []).append(pos)
            total: Value | None = None
            for n_parts in sorted(groups):
                pos = groups[n_parts]
                parts = np.stack(
                    [np.stack([np.asarray(p) for p in batch[i].parts]) for i in pos]
                )
                q0 = np.stack([np.asarray(batch[i].gt_poses, dtype=float) for i in pos])
                g = _group_loss(model, parts, q0, t_draws[pos], rng)
                total = g if total is None else ad.add(total, g)
            loss = ad.scale(total, 1.0 / len(batch))
            if not np.isfinite(loss.data):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            model.store.zero_grads()
            ad.backward(loss)
            adam_step(model.store, config.lr)
            epoch_losses.append(float(loss.data))
        curve.append((epoch, float(np.mean(epoch_losses))))
        if (
            out_dir is not None
            and config.checkpoint_every
            and (epoch + 1) % config.checkpoint_every == 0
        ):
            model.save(f"{out_dir}/ckpt_epoch{epoch + 1:06d}.spa")
    if out_dir is not None and config.epochs > 0:
        model.save(f"{out_dir}/model.spa")
    _ = time.monotonic() - t0
    return model, curve


def write_loss_curve(path, curve, header_lines=()) -> None:
    """Loss curve as CSV: comment header lines, then epoch,mean_loss rows."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for epoch, loss in curve:
            writer.writerow([epoch, repr(loss)])
