import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from partdiff.errors import ContractError
from partdiff.geometry import (
    AssembledShape,
    Pose,
    apply_pose,
    assemble,
    canonicalize_angles,
    chamfer,
    euler_to_matrix,
    export_ply,
    validate_part_cloud,
)

angles = st.floats(-10.0, 10.0, allow_nan=False)


def test_pure_translation():
    moved = apply_pose(np.zeros((1, 3)), np.array([1.0, 2.0, 3.0, 0, 0, 0]))
    assert np.array_equal(moved[0], [1.0, 2.0, 3.0])


def test_rz_quarter_turn():
    # hand-evaluated Rz(pi/2): x axis maps to y axis
    moved = apply_pose(np.array([[1.0, 0.0, 0.0]]),
                       np.array([0, 0, 0, 0, 0, np.pi / 2]))
    assert np.max(np.abs(moved[0] - [0.0, 1.0, 0.0])) < 1e-12


def test_identity_pose_is_bitwise_noop():
    rng = np.random.default_rng(0)
    pts = rng.standard_normal((50, 3))
    moved = apply_pose(pts, np.zeros(6))
    assert np.array_equal(moved, pts)


@settings(max_examples=50, deadline=None)
@given(ex=angles, ey=angles, ez=angles)
def test_rotation_orthonormal(ex, ey, ez):
    r = euler_to_matrix([ex, ey, ez])
    assert np.max(np.abs(r @ r.T - np.eye(3))) < 1e-12


@settings(max_examples=25, deadline=None)
@given(ex=angles, ey=angles, ez=angles)
def test_rigidity_preserves_pairwise_distances(ex, ey, ez):
    rng = np.random.default_rng(1)
    pts = rng.standard_normal((20, 3))
    moved = apply_pose(pts, np.array([0.3, -0.2, 0.1, ex, ey, ez]))
    d0 = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    d1 = np.linalg.norm(moved[:, None] - moved[None], axis=-1)
    assert np.max(np.abs(d0 - d1)) < 1e-12


def test_canonicalize_angles_half_open_interval():
    wrapped = canonicalize_angles(np.array([np.pi, -np.pi, 3 * np.pi, 0.0]))
    assert np.allclose(wrapped, [np.pi, np.pi, np.pi, 0.0])
    e = canonicalize_angles(np.array([2 * np.pi + 0.5]))
    assert e[0] == pytest.approx(0.5)


def test_pose_dataclass_canonicalizes():
    p = Pose(t=[0, 0, 0], e=[3 * np.pi, 0, 0])
    assert p.e[0] == pytest.approx(np.pi)
    q = Pose.from_array(np.array([1, 2, 3, 0.1, 0.2, 0.3]))
    assert np.allclose(q.as_array(), [1, 2, 3, 0.1, 0.2, 0.3])


def test_chamfer_identical_clouds_is_zero():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((100, 3))
    assert chamfer(x, x.copy()) == 0.0


def test_chamfer_hand_example():
    x = np.array([[0.0, 0.0, 0.0]])
    y = np.array([[1.0, 0.0, 0.0]])
    assert chamfer(x, y) == pytest.approx(2.0)


def test_chamfer_symmetry():
    rng = np.random.default_rng(3)
    x, y = rng.standard_normal((40, 3)), rng.standard_normal((60, 3))
    assert chamfer(x, y) == chamfer(y, x)


def test_chamfer_shift_identity_on_sparse_cloud():
    # closed-form 2*||delta||^2 requires min spacing > 2*||delta||
    rng = np.random.default_rng(4)
    x = rng.uniform(0, 10, size=(30, 3))
    d = np.linalg.norm(x[:, None] - x[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    delta = np.array([0.1, 0.0, 0.0])
    assert d.min() > 2 * np.linalg.norm(delta)
    assert chamfer(x, x + delta) == pytest.approx(2 * 0.01, rel=1e-9)


def test_chamfer_kdtree_equals_bruteforce():
    rng = np.random.default_rng(5)
    for _ in range(200):
        nx, ny = rng.integers(5, 120, size=2)
        x = rng.standard_normal((nx, 3))
        y = rng.standard_normal((ny, 3)) + rng.uniform(-1, 1, size=3)
        fast = chamfer(x, y, method="kdtree")
        slow = chamfer(x, y, method="brute")
        assert abs(fast - slow) < 1e-9


def test_chamfer_rejects_empty():
    with pytest.raises(ContractError):
        chamfer(np.zeros((0, 3)), np.zeros((1, 3)))


def test_assemble_identity_concatenates():
    rng = np.random.default_rng(6)
    parts = [rng.standard_normal((10, 3)) for _ in range(3)]
    shape = assemble(parts, np.zeros((3, 6)))
    assert np.array_equal(shape.cloud, np.concatenate(parts))


def test_assemble_length_mismatch():
    with pytest.raises(ContractError):
        assemble([np.zeros((5, 3))], np.zeros((2, 6)))


def test_assemble_joint_permutation_preserves_multiset():
    rng = np.random.default_rng(7)
    parts = [rng.standard_normal((10, 3)) for _ in range(4)]
    poses = rng.standard_normal((4, 6))
    a = assemble(parts, poses)
    perm = [2, 0, 3, 1]
    b = assemble([parts[i] for i in perm], poses[perm])
    sa = np.array(sorted(map(tuple, a.cloud)))
    sb = np.array(sorted(map(tuple, b.cloud)))
    assert np.array_equal(sa, sb)


def test_validate_part_cloud_contract():
    rng = np.random.default_rng(8)
    pts = rng.standard_normal((1000, 3))
    pts -= pts.mean(axis=0)
    validate_part_cloud(pts)
    with pytest.raises(ContractError):
        validate_part_cloud(pts[:999])
    with pytest.raises(ContractError):
        validate_part_cloud(pts + 1.0)  # centroid off origin


def test_export_ply_writes_header_and_rows(tmp_path):
    shape = AssembledShape([np.zeros((2, 3)), np.ones((3, 3))])
    path = tmp_path / "shape.ply"
    export_ply(shape, path)
    text = path.read_text().splitlines()
    assert text[0] == "ply"
    assert "element vertex 5" in text[2]
    assert len(text) == 10 + 5  # header lines + points
