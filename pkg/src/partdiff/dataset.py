"""Procedural multi-part assembly instances and their on-disk format.

Three families: ``table`` (cuboid top plus four identical legs),
``chair`` (seat, back, four identical legs), ``lamp`` (base, pole,
shade).  Dimensions are drawn per instance from fixed ranges and scaled
so the assembled shape fits in the unit cube centered at the origin;
each part is 1000 points sampled uniformly on its surface and stored in
a centered local frame.  Identical legs share one sampled cloud, making
their interchange an exact symmetry of the ground truth: the source of
multi-modality in this data.

Storage is JSON lines, one instance per line, with point buffers as
base64 little-endian float64 so round-trips are bit-exact.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DataError
from .geometry import (
    EULER_CONVENTION,
    POINTS_PER_PART,
    apply_pose,
    assemble,
)

FORMAT_VERSION = 1
CONTACT_TOL = 0.1  # max distance from a contact point to each touching cloud
CATEGORIES = ("table", "chair", "lamp")


@dataclass
class AssemblyInstance:
    id: str
    category: str
    parts: list[np.ndarray]  # each (1000, 3), centered local frame
    gt_poses: np.ndarray  # (N, 6)
    contacts: list[tuple[int, int, np.ndarray]]  # (i, j, point in gt frame)
    equivalence_classes: list[list[int]]

    @property
    def n_parts(self) -> int:
        return len(self.parts)

    def gt_shape(self):
        return assemble(self.parts, self.gt_poses)


def _cuboid_surface(
    w: float, d: float, h: float, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Uniform area-weighted samples on an axis-aligned cuboid surface."""
    half = np.array([w, d, h]) / 2.0
    areas = np.array([d * h, d * h, w * h, w * h, w * d, w * d])
    faces = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-1.0, 1.0, size=(n, 2))
    pts = np.empty((n, 3))
    for face in range(6):
        m = faces == face
        axis = face // 2
        sign = 1.0 if face % 2 == 0 else -1.0
        other = [a for a in range(3) if a != axis]
        pts[m, axis] = sign * half[axis]
        pts[m, other[0]] = u[m, 0] * half[other[0]]
        pts[m, other[1]] = u[m, 1] * half[other[1]]
    return pts


def _cylinder_surface(
    r: float, h: float, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Uniform samples on a closed cylinder (lateral surface plus caps)."""
    lateral = 2.0 * np.pi * r * h
    cap = np.pi * r * r
    region = rng.choice(3, size=n, p=np.array([lateral, cap, cap]) / (lateral + 2 * cap))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    pts = np.empty((n, 3))
    m = region == 0
    pts[m, 0] = r * np.cos(theta[m])
    pts[m, 1] = r * np.sin(theta[m])
    pts[m, 2] = rng.uniform(-h / 2.0, h / 2.0, size=m.sum())
    for reg, z in ((1, h / 2.0), (2, -h / 2.0)):
        m = region == reg
        rad = r * np.sqrt(rng.uniform(0.0, 1.0, size=m.sum()))
        pts[m, 0] = rad * np.cos(theta[m])
        pts[m, 1] = rad * np.sin(theta[m])
        pts[m, 2] = z
    return pts


def _centered_part(raw: np.ndarray, center_world: np.ndarray, noise, rng):
    """Center a sampled cloud; return (local cloud, gt 6-vector pose).

    The translation absorbs the empirical centroid so the posed cloud
    reproduces the sampled surface exactly.
    """
    if noise > 0.0:
        raw = raw + noise * rng.standard_normal(raw.shape)
    centroid = raw.mean(axis=0)
    local = raw - centroid
    pose = np.concatenate([np.asarray(center_world) + centroid, np.zeros(3)])
    return local, pose


def _make_table(rng: np.random.Generator, noise: float):
    w, d = rng.uniform(0.55, 0.95, size=2)
    height = rng.uniform(0.55, 0.95)
    th = rng.uniform(0.05, 0.09)
    a = rng.uniform(0.06, 0.10)
    scale = 0.98 / max(w, d, height)
    w, d, height, th, a = (x * scale for x in (w, d, height, th, a))
    leg_len = height - th

    top_raw = _cuboid_surface(w, d, th, POINTS_PER_PART, rng)
    leg_raw = _cuboid_surface(a, a, leg_len, POINTS_PER_PART, rng)
    if noise > 0.0:
        leg_raw = leg_raw + noise * rng.standard_normal(leg_raw.shape)

    top_local, top_pose = _centered_part(
        top_raw, [0.0, 0.0, height / 2.0 - th / 2.0], noise, rng
    )
    corners = [
        (sx * (w / 2.0 - a / 2.0), sy * (d / 2.0 - a / 2.0))
        for sx, sy in ((1, 1), (1, -1), (-1, 1), (-1, -1))
    ]
    parts = [top_local]
    poses = [top_pose]
    contacts = []
    leg_centroid = leg_raw.mean(axis=0)
    leg_local = leg_raw - leg_centroid
    for k, (cx, cy) in enumerate(corners):
        center = np.array([cx, cy, -height / 2.0 + leg_len / 2.0])
        parts.append(leg_local.copy())
        poses.append(np.concatenate([center + leg_centroid, np.zeros(3)]))
        contacts.append((1 + k, 0, np.array([cx, cy, height / 2.0 - th])))
    return parts, np.stack(poses), contacts, [[1, 2, 3, 4]], "table"


def _make_chair(rng: np.random.Generator, noise: float):
    w, d = rng.uniform(0.5, 0.8, size=2)
    seat_h = rng.uniform(0.35, 0.5)
    th = rng.uniform(0.05, 0.08)
    a = rng.uniform(0.05, 0.08)
    back_h = rng.uniform(0.3, 0.45)
    back_t = rng.uniform(0.04, 0.07)
    total_h = seat_h + back_h
    scale = 0.98 / max(w, d, total_h)
    w, d, seat_h, th, a, back_h, back_t = (
        x * scale for x in (w, d, seat_h, th, a, back_h, back_t)
    )
    leg_len = seat_h - th
    z0 = -total_h / 2.0  # floor level

    seat_raw = _cuboid_surface(w, d, th, POINTS_PER_PART, rng)
    back_raw = _cuboid_surface(w, back_t, back_h, POINTS_PER_PART, rng)
    leg_raw = _cuboid_surface(a, a, leg_len, POINTS_PER_PART, rng)
    if noise > 0.0:
        leg_raw = leg_raw + noise * rng.standard_normal(leg_raw.shape)

    seat_center = np.array([0.0, 0.0, z0 + seat_h - th / 2.0])
    back_center = np.array([0.0, -d / 2.0 + back_t / 2.0, z0 + seat_h + back_h / 2.0])
    seat_local, seat_pose = _centered_part(seat_raw, seat_center, noise, rng)
    back_local, back_pose = _centered_part(back_raw, back_center, noise, rng)

    parts = [seat_local, back_local]
    poses = [seat_pose, back_pose]
    contacts = [(1, 0, np.array([0.0, -d / 2.0 + back_t / 2.0, z0 + seat_h]))]
    leg_centroid = leg_raw.mean(axis=0)
    leg_local = leg_raw - leg_centroid
    corners = [
        (sx * (w / 2.0 - a / 2.0), sy * (d / 2.0 - a / 2.0))
        for sx, sy in ((1, 1), (1, -1), (-1, 1), (-1, -1))
    ]
    for k, (cx, cy) in enumerate(corners):
        center = np.array([cx, cy, z0 + leg_len / 2.0])
        parts.append(leg_local.copy())
        poses.append(np.concatenate([center + leg_centroid, np.zeros(3)]))
        contacts.append((2 + k, 0, np.array([cx, cy, z0 + leg_len])))
    return parts, np.stack(poses), contacts, [[2, 3, 4, 5]], "chair"


def _make_lamp(rng: np.random.Generator, noise: float):
    r_base = rng.uniform(0.15, 0.25)
    h_base = rng.uniform(0.05, 0.10)
    r_pole = rng.uniform(0.02, 0.04)
    h_pole = rng.uniform(0.45, 0.65)
    r_shade = rng.uniform(0.12, 0.20)
    h_shade = rng.uniform(0.15, 0.25)
    total_h = h_base + h_pole + h_shade
    scale = 0.98 / max(total_h, 2 * r_base, 2 * r_shade)
    r_base, h_base, r_pole, h_pole, r_shade, h_shade = (
        x * scale for x in (r_base, h_base, r_pole, h_pole, r_shade, h_shade)
    )
    z0 = -total_h / 2.0

    specs = [
        (r_base, h_base, z0 + h_base / 2.0),
        (r_pole, h_pole, z0 + h_base + h_pole / 2.0),
        (r_shade, h_shade, z0 + h_base + h_pole + h_shade / 2.0),
    ]
    parts, poses = [], []
    for r, h, zc in specs:
        raw = _cylinder_surface(r, h, POINTS_PER_PART, rng)
        local, pose = _centered_part(raw, [0.0, 0.0, zc], noise, rng)
        parts.append(local)
        poses.append(pose)
    contacts = [
        (0, 1, np.array([0.0, 0.0, z0 + h_base])),
        (1, 2, np.array([0.0, 0.0, z0 + h_base + h_pole])),
    ]
    return parts, np.stack(poses), contacts, [], "lamp"


_MAKERS = {"table": _make_table, "chair": _make_chair, "lamp": _make_lamp}


def generate(
    category: str, count: int, seed: int, noise: float = 0.0
) -> list[AssemblyInstance]:
    """Generate ``count`` instances, deterministic in (seed, index)."""
    if category not in _MAKERS:
        raise DataError(f"unknown category {category!r}, expected one of {CATEGORIES}")
    if count < 1:
        raise ContractError("count must be >= 1")
    instances = []
    for index in range(count):
        rng = np.random.default_rng([seed, index])
        parts, poses, contacts, classes, cat = _MAKERS[category](rng, noise)
        inst = AssemblyInstance(
            id=f"{category}-{seed}-{index:05d}",
            category=cat,
            parts=parts,
            gt_poses=poses,
            contacts=contacts,
            equivalence_classes=classes,
        )
        _validate_instance(inst)
        instances.append(inst)
    return instances


def _validate_instance(inst: AssemblyInstance) -> None:
    shape = inst.gt_shape()
    if np.max(np.abs(shape.cloud)) > 0.5 + 1e-9:
        raise DataError(f"{inst.id}: assembled shape leaves the unit cube")
    for i, j, c in inst.contacts:
        for part_idx in (i, j):
            posed = apply_pose(inst.parts[part_idx], inst.gt_poses[part_idx])
            d = np.min(np.linalg.norm(posed - c, axis=1))
            if d > CONTACT_TOL:
                raise DataError(
                    f"{inst.id}: contact ({i},{j}) lies {d:.3f} from part {part_idx}"
                )


def canonical_permutation_augment(
    inst: AssemblyInstance, rng: np.random.Generator
) -> AssemblyInstance:
    """Apply one random permutation jointly to every per-part field."""
    n = inst.n_parts
    order = rng.permutation(n)  # new position k holds old part order[k]
    inv = np.empty(n, dtype=int)
    inv[order] = np.arange(n)
    return AssemblyInstance(
        id=inst.id,
        category=inst.category,
        parts=[inst.parts[o] for o in order],
        gt_poses=inst.gt_poses[order],
        contacts=[(int(inv[i]), int(inv[j]), c.copy()) for i, j, c in inst.contacts],
        equivalence_classes=[sorted(int(inv[i]) for i in cls)
                             for cls in inst.equivalence_classes],
    )


def _encode_points(points: np.ndarray) -> str:
    return base64.b64encode(
        np.ascontiguousarray(points, dtype="<f8").tobytes()
    ).decode("ascii")


def _decode_points(blob: str) -> np.ndarray:
    arr = np.frombuffer(base64.b64decode(blob), dtype="<f8")
    if arr.size != POINTS_PER_PART * 3:
        raise DataError(f"point buffer has {arr.size} values, expected "
                        f"{POINTS_PER_PART * 3}")
    return arr.reshape(POINTS_PER_PART, 3).astype(np.float64)


def save_dataset(instances: list[AssemblyInstance], path) -> None:
    with open(path, "w") as fh:
        for inst in instances:
            record = {
                "format_version": FORMAT_VERSION,
                "euler_convention": EULER_CONVENTION,
                "id": inst.id,
                "category": inst.category,
                "points_b64": [_encode_points(p) for p in inst.parts],
                "gt_poses": inst.gt_poses.tolist(),
                "contacts": [[i, j, list(map(float, c))] for i, j, c in inst.contacts],
                "equivalence_classes": inst.equivalence_classes,
            }
            fh.write(json.dumps(record) + "\n")


def load_dataset(path) -> list[AssemblyInstance]:
    instances = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}: parse error on line {lineno}: {e}") from e
            if rec.get("format_version") != FORMAT_VERSION:
                raise DataError(
                    f"{path}: line {lineno} has format_version "
                    f"{rec.get('format_version')!r}, expected {FORMAT_VERSION}"
                )
            if rec.get("euler_convention") != EULER_CONVENTION:
                raise DataError(
                    f"{path}: line {lineno} uses Euler convention "
                    f"{rec.get('euler_convention')!r}, expected {EULER_CONVENTION}"
                )
            instances.append(
                AssemblyInstance(
                    id=rec["id"],
                    category=rec["category"],
                    parts=[_decode_points(b) for b in rec["points_b64"]],
                    gt_poses=np.asarray(rec["gt_poses"], dtype=float),
                    contacts=[
                        (int(i), int(j), np.asarray(c, dtype=float))
                        for i, j, c in rec["contacts"]
                    ],
                    equivalence_classes=[list(map(int, c))
                                         for c in rec["equivalence_classes"]],
                )
            )
    return instances
