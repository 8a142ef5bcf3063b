"""Closed-form score fields for verifying the samplers.

Each field is the exact score of a known pose distribution after being
widened by the diffusion's perturbation kernel, i.e. the score of

    p_t = data_distribution * N(0, kernel_variance(t) I).

A point mass at q* gives  -(q - q*) / var(t); an isotropic Gaussian
N(mu, s^2 I) gives  -(q - mu) / (s^2 + var(t)); a mixture combines the
widened component scores with posterior responsibilities.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .sde import DiffusionSchedule


class PointMassField:
    """Score of a single pose set q* under kernel widening."""

    def __init__(self, q_star: np.ndarray, schedule: DiffusionSchedule):
        self.q_star = np.atleast_2d(np.asarray(q_star, dtype=float))
        self.schedule = schedule
        self.n_parts = self.q_star.shape[0]

    def __call__(self, q: np.ndarray, t: float) -> np.ndarray:
        var = self.schedule.kernel_variance(t)
        if var <= 0.0:
            raise ContractError(f"point-mass score undefined at t={t}")
        return -(np.asarray(q, dtype=float) - self.q_star) / var


class GaussianField:
    """Score of N(mu, s^2 I) data under kernel widening."""

    def __init__(self, mu: np.ndarray, s: float, schedule: DiffusionSchedule):
        if s < 0:
            raise ContractError("s must be nonnegative")
        self.mu = np.atleast_2d(np.asarray(mu, dtype=float))
        self.s = float(s)
        self.schedule = schedule
        self.n_parts = self.mu.shape[0]

    def __call__(self, q: np.ndarray, t: float) -> np.ndarray:
        var = self.s**2 + self.schedule.kernel_variance(t)
        if var <= 0.0:
            raise ContractError(f"gaussian score undefined at t={t}")
        return -(np.asarray(q, dtype=float) - self.mu) / var


class PoseMixtureField:
    """Score of a mixture of pose-set modes under kernel widening.

    components: (M, N, 6) mode centers; weights: (M,) mixture weights;
    mode_std: common within-mode standard deviation (0 for point modes).
    Responsibilities are evaluated with a log-sum-exp shift so widely
    separated modes at small t stay finite.
    """

    def __init__(
        self,
        components: np.ndarray,
        schedule: DiffusionSchedule,
        weights=None,
        mode_std: float = 0.0,
    ):
        self.components = np.asarray(components, dtype=float)
        if self.components.ndim != 3:
            raise ContractError(
                f"components must be (M, N, 6), got {self.components.shape}"
            )
        m = self.components.shape[0]
        if weights is None:
            weights = np.full(m, 1.0 / m)
        self.weights = np.asarray(weights, dtype=float)
        if self.weights.shape != (m,) or np.any(self.weights < 0):
            raise ContractError("weights must be a nonnegative (M,) vector")
        self.weights = self.weights / self.weights.sum()
        self.mode_std = float(mode_std)
        self.schedule = schedule
        self.n_parts = self.components.shape[1]

    def __call__(self, q: np.ndarray, t: float) -> np.ndarray:
        var = self.mode_std**2 + self.schedule.kernel_variance(t)
        if var <= 0.0:
            raise ContractError(f"mixture score undefined at t={t}")
        q = np.asarray(q, dtype=float)
        diffs = q[None] - self.components  # (M, N, 6)
        sq = np.sum(diffs * diffs, axis=(1, 2))  # (M,)
        logits = np.log(np.maximum(self.weights, 1e-300)) - sq / (2.0 * var)
        logits -= logits.max()
        resp = np.exp(logits)
        resp /= resp.sum()
        return -np.tensordot(resp, diffs, axes=1) / var


def point_mass(q_star, schedule: DiffusionSchedule) -> PointMassField:
    return PointMassField(q_star, schedule)


def gaussian(mu, s: float, schedule: DiffusionSchedule) -> GaussianField:
    return GaussianField(mu, s, schedule)


def two_mode_mixture(
    q_star_1,
    q_star_2,
    schedule: DiffusionSchedule,
    weight: float = 0.5,
    mode_std: float = 0.0,
) -> PoseMixtureField:
    """Two-component mixture; ``weight`` is the mass on the first mode."""
    c = np.stack([np.atleast_2d(q_star_1), np.atleast_2d(q_star_2)]).astype(float)
    return PoseMixtureField(
        c, schedule, weights=[weight, 1.0 - weight], mode_std=mode_std
    )


def equivalence_mode_components(
    gt_poses: np.ndarray, equivalence_classes: list[list[int]]
) -> np.ndarray:
    """All pose sets reachable by permuting poses inside equivalence classes.

    Interchangeable parts make every such assignment an equally valid
    ground truth; the result is the component array for a
    :class:`PoseMixtureField` representing the true multi-modal pose
    distribution of one assembly instance.
    """
    from itertools import permutations

    gt_poses = np.asarray(gt_poses, dtype=float)
    components = [gt_poses]
    for cls in equivalence_classes:
        if len(cls) < 2:
            continue
        new_components = []
        for base in components:
            for perm in permutations(cls):
                comp = base.copy()
                comp[list(cls)] = base[list(perm)]
                new_components.append(comp)
        components = new_components
    return np.unique(np.stack(components), axis=0)
