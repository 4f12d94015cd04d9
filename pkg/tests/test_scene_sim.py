import math

import numpy as np
import pytest
from scipy.stats import spearmanr

from egomotion import so3
from egomotion.cascade import cosine_distance
from egomotion.scene_sim import (
    FrameObservation,
    Intrinsics,
    SceneError,
    SceneModel,
    average_parallax,
    generate_scan_trajectory,
    generate_scene,
    look_rotation,
    observe,
    visual_token,
)

ROOM = ((0.0, 0.0, 0.0), (6.0, 5.0, 3.0))
LEVEL = look_rotation(0.0, 0.0)  # camera looking along +x


def _single(point, normal=(-1.0, 0.0, 0.0)):
    return SceneModel(np.array([0]), np.array([point], float), np.array([normal], float),
                      (np.zeros(3), np.full(3, 10.0)))


def _positions(poses):
    return np.array([p.p for p in poses])


def test_scene_determinism_and_seed_dependence():
    a, b, c = generate_scene(5), generate_scene(5), generate_scene(6)
    assert np.array_equal(a.landmarks, b.landmarks) and np.array_equal(a.normals, b.normals)
    assert not np.allclose(a.landmarks, c.landmarks)


def test_landmarks_on_walls():
    scene = generate_scene(1, 500, ROOM)
    lo, hi = np.array(ROOM[0]), np.array(ROOM[1])
    x = scene.landmarks
    assert len(x) == 500 and len(np.unique(scene.ids)) == 500
    assert np.all(x >= lo - 1e-9) and np.all(x <= hi + 1e-9)
    wall = np.minimum(np.abs(x - lo), np.abs(x - hi)).min(axis=1)
    assert wall.max() <= 1e-9


def test_scene_errors_and_json_round_trip(tmp_path):
    with pytest.raises(SceneError):
        generate_scene(0, 500, ((0, 0, 0), (1, 0, 1)))
    with pytest.raises(SceneError):
        generate_scene(0, 10)
    scene = generate_scene(2, 100)
    scene.save(tmp_path / "s.json")
    back = SceneModel.load(tmp_path / "s.json")
    assert np.array_equal(back.landmarks, scene.landmarks) and back.intrinsics == scene.intrinsics


def test_orbit_contract():
    poses = generate_scan_trajectory(3, "orbit", 30.0)
    assert len(poses) == 900
    p = _positions(poses)
    speed = np.linalg.norm(np.diff(p, axis=0), axis=1) * 30.0
    rates = [so3.angle(a.R.T @ b.R) * 30.0 for a, b in zip(poses, poses[1:])]
    assert speed.max() <= 0.6
    assert math.degrees(max(rates)) <= 60.0


@pytest.mark.parametrize("style", ["orbit", "sweep", "walkthrough"])
def test_smooth_and_inside_room(style):
    poses = generate_scan_trajectory(7, style, 40.0, ROOM)
    steps = [math.degrees(so3.angle(a.R.T @ b.R)) for a, b in zip(poses, poses[1:])]
    assert max(steps) < 3.0
    p = _positions(poses)
    assert np.all(p > ROOM[0]) and np.all(p < ROOM[1])
    assert np.all(np.diff([s.t for s in poses]) > 0)


def test_walkthrough_path_length():
    for seed in range(5):
        p = _positions(generate_scan_trajectory(seed, "walkthrough", 60.0))
        length = np.linalg.norm(np.diff(p, axis=0), axis=1).sum()
        assert 6.0 <= length <= 36.0


def test_trajectory_errors():
    with pytest.raises(SceneError):
        generate_scan_trajectory(0, "spiral", 30.0)
    with pytest.raises(SceneError):
        generate_scan_trajectory(0, "orbit", 5.0)


def test_projection_on_axis_and_behind():
    K = Intrinsics()
    scene = _single((2.0, 0.0, 0.0))
    obs = observe(scene, (np.zeros(3), LEVEL))
    assert np.allclose(obs.pixels[0], (K.cx, K.cy))
    behind = observe(scene, (np.zeros(3), look_rotation(math.pi, 0.0)))
    assert len(behind.ids) == 0


def test_lateral_shift_parallax():
    scene = _single((2.0, 0.0, 0.0))
    a = observe(scene, (np.zeros(3), LEVEL))
    b = observe(scene, (np.array([0.0, 0.2, 0.0]), LEVEL))
    p, n = average_parallax(a, b)
    assert n == 1 and p == pytest.approx(600 * 0.2 / 2, rel=1e-12)


def test_average_parallax_cases():
    ids = np.array([1, 2, 3])
    uv = np.array([[10.0, 10.0], [20.0, 30.0], [100.0, 5.0]])
    a = FrameObservation(0, 0.0, ids, uv)
    assert average_parallax(a, a) == (0.0, 3)
    assert average_parallax(a, FrameObservation(1, 0.1, ids, uv + [3.0, 4.0])) == (pytest.approx(5.0), 3)
    p, n = average_parallax(a, FrameObservation(1, 0.1, np.array([7, 8]), uv[:2]))
    assert n == 0 and math.isnan(p)


def test_observations_inside_image():
    scene = generate_scene(4)
    K = scene.intrinsics
    for pose in generate_scan_trajectory(4, "walkthrough", 20.0)[::30]:
        obs = observe(scene, pose)
        assert len(obs.ids) <= scene.max_features
        assert np.all(obs.uv >= 0) and np.all(obs.uv[:, 0] < K.width) and np.all(obs.uv[:, 1] < K.height)
        assert np.all(np.diff(obs.ids) > 0)


def test_parallax_monotone_in_baseline():
    scene = generate_scene(8)
    origin = np.array([1.0, 2.5, 1.5])
    base = observe(scene, (origin, LEVEL))
    values = []
    for b in np.linspace(0.02, 0.2, 10):
        p, n = average_parallax(base, observe(scene, (origin + [0, b, 0], LEVEL)))
        assert n > 0
        values.append(p)
    assert np.all(np.diff(values) >= 0)


def test_token_same_pose_and_small_rotation():
    scene = generate_scene(0)
    p = np.array([2.0, 2.5, 1.5])
    a = visual_token(scene, (p, LEVEL))
    assert np.array_equal(a, visual_token(scene, (p, LEVEL)))
    assert np.linalg.norm(a) == pytest.approx(1.0)
    assert cosine_distance(a, a) == pytest.approx(0.0, abs=1e-12)
    assert cosine_distance(a, visual_token(scene, (p, look_rotation(math.radians(1), 0.0)))) < 0.05


def test_token_disjoint_views_near_orthogonal():
    p = np.array([3.0, 2.5, 1.5])
    sims = []
    for seed in range(100):
        scene = generate_scene(seed)
        a = observe(scene, (p, LEVEL))
        b = observe(scene, (p, look_rotation(math.pi, 0.0)))
        assert len(np.intersect1d(a.ids, b.ids)) == 0
        ta, tb = visual_token(scene, (p, LEVEL)), visual_token(scene, (p, look_rotation(math.pi, 0.0)))
        sims.append(ta @ tb)
    assert np.mean(sims) <= 0.2


def test_token_locality_along_straight_path():
    # large room densely covered: locally isotropic surroundings
    scene = generate_scene(3, 6000, ((0, 0, 0), (12.0, 12.0, 4.0)))
    start = np.array([4.0, 6.0, 2.0])
    ref = visual_token(scene, (start, LEVEL))
    steps = np.arange(1, 16) * 0.05
    dists = [cosine_distance(ref, visual_token(scene, (start + [0, s, 0], LEVEL))) for s in steps]
    rho = spearmanr(steps, dists).statistic
    assert rho >= 0.8


def test_token_empty_view_and_dim_check():
    scene = _single((2.0, 0.0, 0.0))
    assert not np.any(visual_token(scene, (np.zeros(3), look_rotation(math.pi, 0.0)), dim=32))
    with pytest.raises(SceneError):
        visual_token(scene, (np.zeros(3), LEVEL), dim=8)
