"""Pose score network: per-part PointNet encoder, Fourier time
embedding, and fully-connected message passing over parts.

The network maps (part clouds, pose set, time) to one 6-vector per
part, the estimated gradient of the log conditional pose density.  Its
output is exactly permutation-equivariant: permuting parts and pose
rows permutes output rows bit-identically (message aggregation sums in
value-sorted order, see ``autodiff.mean_pool_nodes``).

The raw head output is divided by the perturbation-kernel standard
deviation at t, so the trainable stack only has to produce O(1) values
while the returned score keeps its 1/std growth as t -> 0.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__, autodiff as ad
from .autodiff import Value
from .errors import ContractError
from .geometry import POINTS_PER_PART, validate_part_cloud
from .params import ParamStore, load_checkpoint, save_checkpoint
from .sde import POSE_DIM, DiffusionSchedule

POINTNET_HIDDEN = (64, 128)  # fixed per-point MLP widths before point_feat_dim


@dataclass(frozen=True)
class ScoreNetConfig:
    point_feat_dim: int = 256
    hidden_dim: int = 256
    time_embed_dim: int = 128  # must be even: sin/cos pairing
    fourier_scale: float = 16.0
    message_rounds: int = 3

    def __post_init__(self):
        if self.time_embed_dim % 2 != 0:
            raise ContractError("time_embed_dim must be even")
        for name in ("point_feat_dim", "hidden_dim", "time_embed_dim"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.message_rounds < 0:
            raise ContractError("message_rounds must be >= 0")
        if self.fourier_scale <= 0:
            raise ContractError("fourier_scale must be positive")


def _he_init(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.standard_normal((fan_in, fan_out)) * math.sqrt(2.0 / fan_in)


def _add_mlp(store: ParamStore, rng, prefix: str, dims: list[int]) -> None:
    for i, (din, dout) in enumerate(zip(dims[:-1], dims[1:])):
        store.add(f"{prefix}.l{i}.W", _he_init(rng, din, dout))
        store.add(f"{prefix}.l{i}.b", np.zeros(dout))


def _mlp(store: ParamStore, prefix: str, x: Value, n_layers: int) -> Value:
    """Apply linear/relu/.../linear for the given parameter prefix."""
    for i in range(n_layers):
        x = ad.linear(x, store[f"{prefix}.l{i}.W"], store[f"{prefix}.l{i}.b"])
        if i < n_layers - 1:
            x = ad.relu(x)
    return x


def _pair_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Ordered (i, j) index vectors for all i != j, grouped by i."""
    idx_i = np.repeat(np.arange(n), n - 1)
    idx_j = np.concatenate(
        [np.concatenate([np.arange(i), np.arange(i + 1, n)]) for i in range(n)]
    ) if n > 1 else np.zeros(0, dtype=int)
    return idx_i, idx_j


class ScoreNet:
    """Trainable score model bound to a diffusion schedule."""

    def __init__(self, config: ScoreNetConfig, schedule: DiffusionSchedule,
                 store: ParamStore):
        self.config = config
        self.schedule = schedule
        self.store = store

    @classmethod
    def init(cls, config: ScoreNetConfig, schedule: DiffusionSchedule,
             seed: int) -> "ScoreNet":
        rng = np.random.default_rng([seed, 0x5C0])
        store = ParamStore()
        cfg = config
        _add_mlp(store, rng, "pointnet",
                 [3, *POINTNET_HIDDEN, cfg.point_feat_dim])
        store.add(
            "time.freq",
            rng.standard_normal(cfg.time_embed_dim // 2) * cfg.fourier_scale,
            frozen=True,
        )
        _add_mlp(store, rng, "time.proj", [cfg.time_embed_dim, cfg.hidden_dim])
        in_dim = cfg.point_feat_dim + POSE_DIM + cfg.hidden_dim
        _add_mlp(store, rng, "input", [in_dim, cfg.hidden_dim, cfg.hidden_dim])
        for k in range(cfg.message_rounds):
            _add_mlp(store, rng, f"round{k}.edge",
                     [2 * cfg.hidden_dim, cfg.hidden_dim, cfg.hidden_dim])
            _add_mlp(store, rng, f"round{k}.node",
                     [2 * cfg.hidden_dim, cfg.hidden_dim, cfg.hidden_dim])
        _add_mlp(store, rng, "head", [cfg.hidden_dim, cfg.hidden_dim, POSE_DIM])
        return cls(config, schedule, store)

    # -- encoders ---------------------------------------------------------

    def encode_parts(self, parts) -> Value:
        """Per-part features: max-pool over the per-point MLP.

        Accepts a list of (1000, 3) clouds or an array (..., N, 1000, 3);
        returns a Value of shape (..., N, point_feat_dim).  Invariant to
        point order within each part.
        """
        if isinstance(parts, (list, tuple)):
            for p in parts:
                validate_part_cloud(p)
            parts = np.stack([np.asarray(p, dtype=float) for p in parts])
        else:
            parts = np.asarray(parts, dtype=float)
            if parts.shape[-2] != POINTS_PER_PART or parts.shape[-1] != 3:
                raise ContractError(
                    f"parts must end in ({POINTS_PER_PART}, 3), got {parts.shape}"
                )
        x = _mlp(self.store, "pointnet", Value(parts), 3)
        return ad.max_pool_points(x, axis=-2)

    def fourier_features(self, t) -> np.ndarray:
        """Pre-projection time features [sin(2 pi w t), cos(2 pi w t)]."""
        t = np.asarray(t, dtype=float)
        w = self.store["time.freq"].data
        phase = 2.0 * math.pi * t[..., None] * w
        return np.concatenate([np.sin(phase), np.cos(phase)], axis=-1)

    def embed_time(self, t) -> Value:
        """Fourier features followed by the trainable projection."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.schedule.T):
            raise ContractError(f"t={t} outside [0, {self.schedule.T}]")
        w = self.store["time.freq"].data
        phase = Value(2.0 * math.pi * t[..., None] * w)
        feats = ad.concat([ad.sin(phase), ad.cos(phase)], axis=-1)
        return _mlp(self.store, "time.proj", feats, 1)

    # -- full pipeline ----------------------------------------------------

    def score_from_features(self, part_feats: Value, q: Value, t) -> Value:
        """Score given precomputed part features.

        part_feats: (B, N, point_feat_dim); q: (B, N, 6); t: (B,).
        Returns a Value of shape (B, N, 6).
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t <= 0) or np.any(t > self.schedule.T):
            raise ContractError(f"t={t} outside (0, {self.schedule.T}]")
        b, n = part_feats.shape[0], part_feats.shape[1]
        if q.shape != (b, n, POSE_DIM):
            raise ContractError(
                f"pose set shape {q.shape} does not match {b} x {n} parts"
            )
        temb = self.embed_time(t)  # (B, hidden)
        temb = ad.take(ad.reshape(temb, (b, 1, -1)), np.zeros(n, dtype=int), axis=1)
        h = _mlp(self.store, "input", ad.concat([part_feats, q, temb], axis=-1), 2)
        idx_i, idx_j = _pair_indices(n)
        for k in range(self.config.message_rounds):
            hi = ad.take(h, idx_i, axis=-2)
            hj = ad.take(h, idx_j, axis=-2)
            e = _mlp(self.store, f"round{k}.edge", ad.concat([hi, hj], axis=-1), 2)
            e = ad.reshape(e, (b, n, max(n - 1, 0), self.config.hidden_dim))
            msg = ad.mean_pool_nodes(e, axis=-2)
            h = _mlp(self.store, f"round{k}.node", ad.concat([h, msg], axis=-1), 2)
        raw = _mlp(self.store, "head", h, 2)
        inv_std = 1.0 / self.schedule.kernel_std(t)
        return ad.scale(raw, inv_std[:, None, None])

    def score(self, parts, q: np.ndarray, t: float) -> np.ndarray:
        """Estimated score for one instance: (N, 6) array."""
        q = np.asarray(q, dtype=float)
        n = len(parts) if isinstance(parts, (list, tuple)) else parts.shape[0]
        if q.shape != (n, POSE_DIM):
            raise ContractError(
                f"got {n} parts but pose set of shape {q.shape}"
            )
        feats = self.encode_parts(parts)
        feats = ad.reshape(feats, (1, n, -1))
        out = self.score_from_features(feats, Value(q[None]), float(t))
        return out.data[0]

    def bind(self, parts) -> "BoundScoreField":
        """Freeze part encodings and return a (q, t) -> score callable."""
        feats = self.encode_parts(parts).data.copy()
        return BoundScoreField(self, feats)

    # -- persistence ------------------------------------------------------

    def checkpoint_meta(self) -> dict:
        return {
            "kind": "pose-score-model",
            "code_version": __version__,
            "arch": asdict(self.config),
            "schedule": {"sigma": self.schedule.sigma, "T": self.schedule.T},
        }

    def save(self, path) -> None:
        save_checkpoint(path, self.store, self.checkpoint_meta())

    @classmethod
    def load(cls, path) -> "ScoreNet":
        store, meta = load_checkpoint(path)
        config = ScoreNetConfig(**meta["arch"])
        schedule = DiffusionSchedule(**meta["schedule"])
        return cls(config, schedule, store)


class BoundScoreField:
    """Score field of a trained model with fixed parts.

    Part encodings depend only on the clouds and the frozen parameters,
    so they are computed once at bind time; each call then runs the
    input encoder, message passing, and head.
    """

    def __init__(self, model: ScoreNet, part_feats: np.ndarray):
        self.model = model
        self.part_feats = part_feats
        self.n_parts = part_feats.shape[0]

    def __call__(self, q: np.ndarray, t: float) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        out = self.model.score_from_features(
            Value(self.part_feats[None]), Value(q[None]), float(t)
        )
        return out.data[0]
