import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from handxfer.errors import (DegenerateConfiguration, DegenerateDisparity, NonPositiveDepth,
                             ParallelRays)
from handxfer.geom3d import (PinholeCamera, RigidTransform, StereoRig, axis_angle_matrix,
                             depth_to_disparity, disparity_to_depth, extract_z_rotation, kabsch,
                             project, project_reference, rot_z, transform_points, triangulate,
                             unproject, wrap_angle)


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


@pytest.fixture
def camera():
    return PinholeCamera(400.0, 380.0, 320.0, 240.0)


# --- depth ---------------------------------------------------------------

@pytest.mark.parametrize("f, B, d, Z", [(200, 0.1, 20, 1.0), (500, 0.063, 63, 0.5)])
def test_disparity_to_depth_substitution(f, B, d, Z):
    assert disparity_to_depth(f, B, d) == pytest.approx(Z, abs=1e-15)


def test_zero_disparity_is_degenerate():
    with pytest.raises(DegenerateDisparity):
        disparity_to_depth(200, 0.1, 0)
    with pytest.raises(DegenerateDisparity):
        disparity_to_depth(200, 0.1, 5e-7)
    assert disparity_to_depth(200, 0.1, 5e-7, epsilon_d=1e-7) > 0


def test_depth_through_rendered_pair():
    rig = StereoRig.rectified(300.0, 300.0, 160.0, 120.0, baseline=0.12)
    X = np.array([0.05, -0.02, 0.75])
    uL = project_reference(rig.left, X)
    uR = project_reference(rig.right, X)
    d = uL[0] - uR[0]
    assert uL[1] == pytest.approx(uR[1], abs=1e-12)
    assert disparity_to_depth(rig.left.fx, rig.baseline, d) == pytest.approx(0.75, abs=1e-9)


def test_depth_disparity_inverse():
    Z = np.linspace(0.2, 5.0, 50)
    assert np.allclose(disparity_to_depth(450, 0.1, depth_to_disparity(450, 0.1, Z)), Z,
                       rtol=0, atol=1e-12)


# --- unproject / project --------------------------------------------------

def test_unproject_principal_point(camera):
    assert np.array_equal(unproject(camera, (camera.cx, camera.cy), 1.0), [0, 0, 1])


def test_unproject_unit_slope(camera):
    p = unproject(camera, (camera.cx + camera.fx, camera.cy), 2.0)
    assert np.allclose(p, [2, 0, 2], atol=1e-15)


def test_unproject_rejects_nonpositive_depth(camera):
    for z in (0.0, -1.0):
        with pytest.raises(NonPositiveDepth):
            unproject(camera, (1, 1), z)


def test_project_unproject_round_trip(camera):
    rng = np.random.default_rng(1)
    pix = rng.uniform([0, 0], [640, 480], size=(200, 2))
    Z = rng.uniform(0.1, 10, size=200)
    back = project(camera, unproject(camera, pix, Z))
    assert np.abs(back - pix).max() < 1e-9


# --- transforms -----------------------------------------------------------

def test_transform_identity_and_translation():
    pts = np.random.default_rng(2).normal(size=(10, 3))
    assert np.array_equal(transform_points(RigidTransform.identity(), pts), pts)
    T = RigidTransform(np.eye(3), np.array([0.1, 0, 0]))
    assert np.allclose(transform_points(T, np.zeros((1, 3))), [[0.1, 0, 0]])


def test_transform_is_isometry():
    rng = np.random.default_rng(3)
    for _ in range(20):
        T = RigidTransform(random_rotation(rng), rng.normal(size=3))
        P = rng.normal(size=(30, 3))
        Q = transform_points(T, P)
        D0 = np.linalg.norm(P[:, None] - P[None], axis=-1)
        D1 = np.linalg.norm(Q[:, None] - Q[None], axis=-1)
        assert np.abs(D0 - D1).max() < 1e-9


def test_rigid_transform_rejects_non_rotation():
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        RigidTransform(2 * np.eye(3), np.zeros(3))


def test_compose_and_inverse():
    rng = np.random.default_rng(4)
    A = RigidTransform(random_rotation(rng), rng.normal(size=3))
    B = RigidTransform(random_rotation(rng), rng.normal(size=3))
    p = rng.normal(size=(5, 3))
    assert np.allclose((A @ B).apply(p), A.apply(B.apply(p)), atol=1e-12)
    assert np.allclose((A @ A.inverse()).as_matrix(), np.eye(4), atol=1e-12)


# --- Kabsch ---------------------------------------------------------------

def test_kabsch_identity():
    P = np.random.default_rng(5).normal(size=(8, 3))
    T = kabsch(P, P)
    assert np.allclose(T.rotation, np.eye(3), atol=1e-12)
    assert np.allclose(T.translation, 0, atol=1e-12)


def test_kabsch_recovers_sampled_transforms():
    rng = np.random.default_rng(6)
    for _ in range(200):
        R0, t0 = random_rotation(rng), rng.uniform(-2, 2, size=3)
        P = rng.normal(size=(rng.integers(3, 40), 3))
        T = kabsch(P, P @ R0.T + t0)
        assert np.abs(T.rotation - R0).max() < 1e-9
        assert np.abs(T.translation - t0).max() < 1e-9


def test_kabsch_never_reflects():
    rng = np.random.default_rng(7)
    P = rng.normal(size=(10, 3))
    Q = P * np.array([1, 1, -1])
    T = kabsch(P, Q)
    assert np.linalg.det(T.rotation) == pytest.approx(1.0, abs=1e-12)


def test_kabsch_beats_z_grid_on_noisy_data():
    rng = np.random.default_rng(8)
    P = rng.normal(size=(20, 3))
    Q = P @ rot_z(0.7).T + np.array([0.3, -0.1, 0.2]) + rng.normal(0, 0.02, size=P.shape)
    T = kabsch(P, Q)
    res = np.sum((T.apply(P) - Q) ** 2)
    cP, cQ = P.mean(0), Q.mean(0)
    best = min(np.sum(((P - cP) @ rot_z(a).T + cQ - Q) ** 2)
               for a in np.deg2rad(np.arange(-180, 180, 1.0)))
    assert res <= best


@pytest.mark.parametrize("P", [
    np.zeros((5, 3)),
    np.outer(np.arange(5.0), [1, 2, 3]),
    np.ones((2, 3)),
])
def test_kabsch_degenerate(P):
    with pytest.raises(DegenerateConfiguration):
        kabsch(P, P)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_kabsch_property(seed):
    rng = np.random.default_rng(seed)
    R0, t0 = random_rotation(rng), rng.uniform(-5, 5, size=3)
    P = rng.uniform(-1, 1, size=(6, 3))
    T = kabsch(P, P @ R0.T + t0)
    assert np.abs(T.rotation - R0).max() < 1e-9
    assert np.linalg.det(T.rotation) > 0


# --- z rotation -----------------------------------------------------------

def test_extract_z_identity_and_45():
    assert extract_z_rotation(RigidTransform.identity())[0] == 0.0
    theta, Rz = extract_z_rotation(RigidTransform.about_z(np.pi / 4))
    assert theta == pytest.approx(np.pi / 4, abs=1e-15)
    assert np.array_equal(Rz.translation, np.zeros(3))


def frobenius_grid_oracle(R, step=1e-4):
    """Minimizer of ||Rz(a) - R||_F: 1e-4 rad grid, then a parabola through the best three."""
    grid = np.arange(-np.pi, np.pi, step)

    def err(a):
        c, s = np.cos(a), np.sin(a)
        return (c - R[0, 0]) ** 2 + (-s - R[0, 1]) ** 2 + (s - R[1, 0]) ** 2 + (c - R[1, 1]) ** 2

    i = int(np.argmin(err(grid)))
    a0 = grid[i]
    em, e0, ep = err(a0 - step), err(a0), err(a0 + step)
    return a0 + 0.5 * step * (em - ep) / (em - 2 * e0 + ep)


def test_extract_z_matches_grid_oracle():
    rng = np.random.default_rng(11)
    for _ in range(100):
        R = rot_z(rng.uniform(-3.1, 3.1)) @ rot_x(rng.uniform(-0.5, 0.5)) \
            @ axis_angle_matrix([0, 1, 0], rng.uniform(-0.5, 0.5))
        theta, _ = extract_z_rotation(R)
        assert abs(wrap_angle(theta - frobenius_grid_oracle(R))) < 1e-6


def test_extract_z_thirty_with_tilt():
    R = rot_z(np.deg2rad(30)) @ rot_x(np.deg2rad(10))
    assert extract_z_rotation(R)[0] == pytest.approx(np.deg2rad(30), abs=1e-12)


def test_extract_z_degenerate():
    R = axis_angle_matrix([1, 0, 0], np.pi)  # maps z to -z, R00 + R11 = 0
    R = rot_z(np.pi / 2) @ R
    with pytest.raises(DegenerateConfiguration):
        extract_z_rotation(R)


@given(st.floats(-10, 10, allow_nan=False))
def test_extract_z_roundtrip(theta):
    got, _ = extract_z_rotation(rot_z(theta))
    assert abs(wrap_angle(got - wrap_angle(theta))) < 1e-12
    assert -np.pi < got <= np.pi


# --- triangulation ---------------------------------------------------------

def two_cameras(baseline=0.3, f=800.0):
    # 1280x960 sensor, about 77 degrees horizontal field of view
    a = PinholeCamera(f, f, 640.0, 480.0)
    b = PinholeCamera(f, f, 640.0, 480.0,
                      RigidTransform(rot_z(0.0) @ axis_angle_matrix([0, 1, 0], -0.2),
                                     np.array([baseline, 0.0, 0.0])))
    return a, b


def test_triangulate_exact():
    a, b = two_cameras()
    rng = np.random.default_rng(9)
    for _ in range(50):
        X = rng.uniform([-0.3, -0.3, 0.6], [0.3, 0.3, 1.5])
        got = triangulate(a, b, project_reference(a, X), project_reference(b, X))
        assert np.abs(got - X).max() < 1e-9


def test_triangulate_identical_poses():
    a = PinholeCamera(500.0, 500.0, 320.0, 240.0)
    with pytest.raises(ParallelRays):
        triangulate(a, a, (300, 200), (310, 200))


def test_triangulate_noise_at_one_metre():
    a, b = two_cameras()
    rng = np.random.default_rng(10)
    errs = []
    for _ in range(500):
        X = np.array([0.15, 0.0, 1.0]) + rng.uniform(-0.05, 0.05, size=3)
        pa = project_reference(a, X) + rng.uniform(-0.5, 0.5, size=2)
        pb = project_reference(b, X) + rng.uniform(-0.5, 0.5, size=2)
        errs.append(np.linalg.norm(triangulate(a, b, pa, pb) - X))
    assert max(errs) < 5e-3
