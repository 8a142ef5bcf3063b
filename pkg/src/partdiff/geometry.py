"""Rigid pose application and chamfer distance for part point clouds.

Conventions, fixed globally and echoed into every dataset and results
file:

* a part cloud is exactly 1000 points in a canonical local frame with
  its centroid at the origin;
* a pose is a 6-vector (tx, ty, tz, ex, ey, ez): translation plus Euler
  angles in radians, applied as R = Rz(ez) @ Ry(ey) @ Rx(ex) to column
  points (extrinsic x-then-y-then-z);
* chamfer distance is the sum of the two directed means of squared
  nearest-neighbor distances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ContractError

POINTS_PER_PART = 1000
EULER_CONVENTION = "xyz-extrinsic"  # R = Rz(ez) @ Ry(ey) @ Rx(ex)


def validate_part_cloud(points: np.ndarray) -> np.ndarray:
    """Check the part-cloud contract: (1000, 3), finite, centered."""
    points = np.asarray(points, dtype=float)
    if points.shape != (POINTS_PER_PART, 3):
        raise ContractError(
            f"part cloud must have shape ({POINTS_PER_PART}, 3), got {points.shape}"
        )
    if not np.all(np.isfinite(points)):
        raise ContractError("part cloud contains non-finite points")
    centroid = points.mean(axis=0)
    if np.max(np.abs(centroid)) > 1e-9:
        raise ContractError(f"part cloud centroid {centroid} is not at the origin")
    return points


def canonicalize_angles(e: np.ndarray) -> np.ndarray:
    """Wrap Euler angles into (-pi, pi]."""
    e = np.asarray(e, dtype=float)
    wrapped = np.mod(e + np.pi, 2.0 * np.pi) - np.pi
    return np.where(wrapped == -np.pi, np.pi, wrapped)


@dataclass(frozen=True)
class Pose:
    """Translation plus canonicalized Euler angles."""

    t: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(3)
        e = np.asarray(self.e, dtype=float).reshape(3)
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(e))):
            raise ContractError("pose contains non-finite entries")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "e", canonicalize_angles(e))

    @classmethod
    def from_array(cls, q: np.ndarray) -> "Pose":
        q = np.asarray(q, dtype=float).reshape(6)
        return cls(t=q[:3], e=q[3:])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.t, self.e])


def euler_to_matrix(e: np.ndarray) -> np.ndarray:
    """Rotation matrix Rz(ez) @ Ry(ey) @ Rx(ex) for angles (ex, ey, ez)."""
    ex, ey, ez = np.asarray(e, dtype=float).reshape(3)
    cx, sx = np.cos(ex), np.sin(ex)
    cy, sy = np.cos(ey), np.sin(ey)
    cz, sz = np.cos(ez), np.sin(ez)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def apply_pose(points: np.ndarray, q) -> np.ndarray:
    """Transform a cloud by a pose given as a Pose or raw 6-vector."""
    if isinstance(q, Pose):
        t, e = q.t, q.e
    else:
        q = np.asarray(q, dtype=float).reshape(6)
        t, e = q[:3], q[3:]
    points = np.asarray(points, dtype=float)
    return points @ euler_to_matrix(e).T + t


@dataclass
class AssembledShape:
    """Per-part transformed clouds plus their concatenation."""

    part_clouds: list[np.ndarray]
    cloud: np.ndarray = field(init=False)

    def __post_init__(self):
        self.cloud = np.concatenate(self.part_clouds, axis=0)


def assemble(parts: list[np.ndarray], poses: np.ndarray) -> AssembledShape:
    """Pose every part and concatenate in input order."""
    poses = np.asarray(poses, dtype=float)
    if len(parts) != poses.shape[0]:
        raise ContractError(
            f"got {len(parts)} parts but {poses.shape[0]} poses"
        )
    return AssembledShape([apply_pose(p, q) for p, q in zip(parts, poses)])


def chamfer(x: np.ndarray, y: np.ndarray, method: str = "kdtree") -> float:
    """Bidirectional mean squared nearest-neighbor distance.

    ``method="kdtree"`` is the production path; ``method="brute"`` is the
    O(|x| * |y|) reference kept as a test oracle.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0 or y.size == 0:
        raise ContractError("chamfer: empty point cloud")
    if method == "kdtree":
        d_xy = cKDTree(y).query(x, k=1)[0]
        d_yx = cKDTree(x).query(y, k=1)[0]
        return float(np.mean(d_xy**2) + np.mean(d_yx**2))
    if method == "brute":
        sq = (
            np.sum(x * x, axis=1)[:, None]
            - 2.0 * (x @ y.T)
            + np.sum(y * y, axis=1)[None, :]
        )
        np.maximum(sq, 0.0, out=sq)
        return float(np.mean(sq.min(axis=1)) + np.mean(sq.min(axis=0)))
    raise ContractError(f"unknown chamfer method {method!r}")


_PALETTE = np.array(
    [
        [228, 26, 28],
        [55, 126, 184],
        [77, 175, 74],
        [152, 78, 163],
        [255, 127, 0],
        [255, 255, 51],
        [166, 86, 40],
        [247, 129, 191],
    ],
    dtype=int,
)


def export_ply(shape: AssembledShape, path) -> None:
    """Write an ASCII PLY of the assembled shape, one color per part."""
    n_total = sum(len(c) for c in shape.part_clouds)
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {n_total}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        fh.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
        fh.write("end_header\n")
        for i, cloud in enumerate(shape.part_clouds):
            r, g, b = _PALETTE[i % len(_PALETTE)]
            for p in cloud:
                fh.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {r} {g} {b}\n")
