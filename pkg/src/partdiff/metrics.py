"""Assembly quality and diversity metrics.

Quality: shape chamfer distance (whole shape), part accuracy (fraction
of parts whose posed cloud lands within a chamfer threshold of its
ground-truth placement), and connectivity accuracy (fraction of
ground-truth contact pairs whose two contact-point images stay within a
threshold after the predicted transforms).

Diversity: mean pairwise shape distance over a sample set, either
ungated (DS), gated by a connectivity threshold on both pair members
(QDS), or weighted by the product of their connectivity scores (WQDS).
Pair sums run over all ordered pairs including i = j, matching the
1/k^2 normalization.

Evaluation draws k pose sets per instance and scores the best one
against the ground truth (minimum matching distance protocol).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import ContractError
from .geometry import AssembledShape, apply_pose, assemble, chamfer, euler_to_matrix

TAU_PA = 0.01
TAU_CA = 0.05
TAU_QDS = 0.5


def scd(pred: AssembledShape, gt: AssembledShape) -> float:
    """Chamfer distance between the two concatenated shape clouds."""
    return chamfer(pred.cloud, gt.cloud)


def part_accuracy(
    pred_poses: np.ndarray,
    gt_poses: np.ndarray,
    parts: list[np.ndarray],
    tau_pa: float = TAU_PA,
) -> float:
    """Fraction of parts posed within a chamfer threshold of ground truth."""
    pred_poses = np.asarray(pred_poses, dtype=float)
    gt_poses = np.asarray(gt_poses, dtype=float)
    if not (len(parts) == pred_poses.shape[0] == gt_poses.shape[0]):
        raise ContractError("part_accuracy: parts/poses length mismatch")
    hits = 0
    for part, qp, qg in zip(parts, pred_poses, gt_poses):
        if chamfer(apply_pose(part, qp), apply_pose(part, qg)) < tau_pa:
            hits += 1
    return hits / len(parts)


def connectivity_accuracy(
    pred_poses: np.ndarray,
    gt_poses: np.ndarray,
    contacts,
    tau_ca: float = TAU_CA,
) -> float | None:
    """Fraction of contact pairs still connected under predicted poses.

    Each ground-truth contact point is mapped into both parts' local
    frames with the ground-truth poses, re-posed with the predicted
    poses, and counted as connected when the two images are within
    tau_ca.  Returns None when the contact list is empty (undefined).
    """
    if not contacts:
        return None
    pred_poses = np.asarray(pred_poses, dtype=float)
    gt_poses = np.asarray(gt_poses, dtype=float)

    def reimage(part_idx: int, c: np.ndarray) -> np.ndarray:
        qg = gt_poses[part_idx]
        local = euler_to_matrix(qg[3:]).T @ (np.asarray(c, dtype=float) - qg[:3])
        return apply_pose(local[None], pred_poses[part_idx])[0]

    connected = sum(
        1
        for i, j, c in contacts
        if np.linalg.norm(reimage(i, c) - reimage(j, c)) < tau_ca
    )
    return connected / len(contacts)


def pairwise_shape_distances(shapes: list[AssembledShape]) -> np.ndarray:
    """Symmetric matrix of chamfer distances between assembled shapes."""
    k = len(shapes)
    dist = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            dist[i, j] = dist[j, i] = scd(shapes[i], shapes[j])
    return dist


def ds(shapes: list[AssembledShape], dist_matrix: np.ndarray | None = None) -> float:
    """Mean pairwise shape distance over all ordered pairs (i = j included)."""
    if dist_matrix is None:
        dist_matrix = pairwise_shape_distances(shapes)
    k = len(shapes)
    total = 0.0
    for i in range(k):
        for j in range(k):
            total += dist_matrix[i, j]
    return total / k**2


def qds(
    shapes: list[AssembledShape],
    ca_values,
    tau_q: float = TAU_QDS,
    dist_matrix: np.ndarray | None = None,
) -> float:
    """Diversity restricted to pairs whose members both exceed tau_q in CA."""
    if dist_matrix is None:
        dist_matrix = pairwise_shape_distances(shapes)
    ca_values = np.asarray(ca_values, dtype=float)
    k = len(shapes)
    total = 0.0
    for i in range(k):
        for j in range(k):
            if ca_values[i] > tau_q and ca_values[j] > tau_q:
                total += dist_matrix[i, j]
    return total / k**2


def wqds(
    shapes: list[AssembledShape],
    ca_values,
    dist_matrix: np.ndarray | None = None,
) -> float:
    """Diversity weighted by the product of the pair's CA values."""
    if dist_matrix is None:
        dist_matrix = pairwise_shape_distances(shapes)
    ca_values = np.asarray(ca_values, dtype=float)
    k = len(shapes)
    total = 0.0
    for i in range(k):
        for j in range(k):
            total += dist_matrix[i, j] * ca_values[i] * ca_values[j]
    return total / k**2


@dataclass
class MetricsReport:
    scd: float
    pa: float
    ca: float | None
    ds: float
    qds: float
    wqds: float
    n_instances: int
    samples_per_instance: int
    ca_excluded: int
    best_per_metric: bool
    wall_clock_mean_s: float
    per_instance: list[dict] = field(default_factory=list)
    config_echo: dict = field(default_factory=dict)
    code_version: str = __version__

    def to_dict(self) -> dict:
        return {
            "code_version": self.code_version,
            "config": self.config_echo,
            "metrics": {
                "scd": self.scd,
                "pa": self.pa,
                "ca": self.ca,
                "ds": self.ds,
                "qds": self.qds,
                "wqds": self.wqds,
            },
            "n_instances": self.n_instances,
            "samples_per_instance": self.samples_per_instance,
            "ca_excluded": self.ca_excluded,
            "best_per_metric": self.best_per_metric,
            "wall_clock": {"mean_sample_seconds": self.wall_clock_mean_s},
            "per_instance": self.per_instance,
        }

    def table(self) -> str:
        ca = "n/a" if self.ca is None else f"{self.ca:.4f}"
        rows = [
            ("SCD", f"{self.scd:.4f}"),
            ("PA", f"{self.pa:.4f}"),
            ("CA", ca),
            ("QDS (1e-5)", f"{self.qds / 1e-5:.3f}"),
            ("WQDS (1e-4)", f"{self.wqds / 1e-4:.3f}"),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def mmd_evaluate(
    sampler_fn,
    instances,
    k: int = 10,
    seed: int = 0,
    best_per_metric: bool = False,
    tau_pa: float = TAU_PA,
    tau_ca: float = TAU_CA,
    tau_q: float = TAU_QDS,
    config_echo: dict | None = None,
) -> MetricsReport:
    """Minimum-matching-distance evaluation over a dataset.

    ``sampler_fn(instance, rng) -> (N, 6)`` draws one pose set.  Per
    instance, k pose sets are drawn; the reported SCD is the minimum
    over the k assembled shapes versus ground truth.  PA and CA come
    from the SCD-minimizing sample, or from their per-metric best sample
    with ``best_per_metric``.  DS/QDS/WQDS are computed over the k
    samples.  Instances without contacts are excluded from the CA
    average (the exclusion count is reported).
    """
    if k < 1:
        raise ContractError("k must be >= 1")
    rows = []
    wall = []
    for idx, inst in enumerate(instances):
        gt_shape = inst.gt_shape()
        pose_sets = []
        for j in range(k):
            rng = np.random.default_rng([seed, idx, j])
            t0 = time.perf_counter()
            pose_sets.append(np.asarray(sampler_fn(inst, rng), dtype=float))
            wall.append(time.perf_counter() - t0)
        shapes = [assemble(inst.parts, q) for q in pose_sets]
        scds = [scd(s, gt_shape) for s in shapes]
        pas = [part_accuracy(q, inst.gt_poses, inst.parts, tau_pa) for q in pose_sets]
        cas = [
            connectivity_accuracy(q, inst.gt_poses, inst.contacts, tau_ca)
            for q in pose_sets
        ]
        best = int(np.argmin(scds))
        has_ca = cas[best] is not None
        if best_per_metric:
            pa_val = max(pas)
            ca_val = max(cas) if has_ca else None
        else:
            pa_val = pas[best]
            ca_val = cas[best] if has_ca else None
        dist = pairwise_shape_distances(shapes)
        qds_cas = [0.0 if c is None else c for c in cas]
        rows.append(
            {
                "id": inst.id,
                "scd": scds[best],
                "pa": pa_val,
                "ca": ca_val,
                "ds": ds(shapes, dist),
                "qds": qds(shapes, qds_cas, tau_q, dist),
                "wqds": wqds(shapes, qds_cas, dist),
                "has_contacts": has_ca,
            }
        )
    ca_rows = [r["ca"] for r in rows if r["has_contacts"]]
    report = MetricsReport(
        scd=float(np.mean([r["scd"] for r in rows])),
        pa=float(np.mean([r["pa"] for r in rows])),
        ca=float(np.mean(ca_rows)) if ca_rows else None,
        ds=float(np.mean([r["ds"] for r in rows])),
        qds=float(np.mean([r["qds"] for r in rows])),
        wqds=float(np.mean([r["wqds"] for r in rows])),
        n_instances=len(rows),
        samples_per_instance=k,
        ca_excluded=len(rows) - len(ca_rows),
        best_per_metric=best_per_metric,
        wall_clock_mean_s=float(np.mean(wall)),
        per_instance=rows,
        config_echo=config_echo or {},
    )
    return report
