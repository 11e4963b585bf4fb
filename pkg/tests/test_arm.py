import numpy as np
import pytest

from latentgoals import arm
from latentgoals.errors import DomainError


def segment_distance_oracle(point, p0, p1, samples=20001):
    """Brute-force point-to-segment distance by dense sampling."""
    ts = np.linspace(0.0, 1.0, samples)
    pts = p0[None, :] + ts[:, None] * (p1 - p0)[None, :]
    return float(np.min(np.linalg.norm(pts - point, axis=1)))


class TestForwardKinematics:
    def test_zero_pose(self):
        assert np.allclose(arm.forward_kinematics([0.0, 0.0, 0.0]), [1.0, 0.0])

    def test_quarter_turn(self):
        x = arm.forward_kinematics([np.pi / 2, 0.0, 0.0])
        assert np.allclose(x, [0.0, 1.0], atol=1e-12)

    def test_bent_pose_hand_evaluated(self):
        # cumulative angles: pi/2, 0, 0 -> (1/3)(0,1) + (2/3)(1,0)
        x = arm.forward_kinematics([np.pi / 2, -np.pi / 2, 0.0])
        assert np.allclose(x, [2.0 / 3.0, 1.0 / 3.0], atol=1e-12)

    def test_reach_bounded(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            a = rng.uniform(-np.pi, np.pi, 3)
            assert np.linalg.norm(arm.forward_kinematics(a)) <= 1.0 + 1e-9

    def test_rejects_non_finite(self):
        with pytest.raises(DomainError):
            arm.forward_kinematics([np.nan, 0.0, 0.0])


class TestRender:
    def test_zero_pose_lights_positive_x_band(self):
        img = arm.render_scene(np.zeros(3), None)
        lit_rows, lit_cols = np.nonzero(img > 0.5)
        # workspace +x maps to the right half, y=0 to the middle rows
        assert np.all(lit_cols >= 24 - 1)
        assert np.all(np.abs(lit_rows - 23.5) <= 3.0)

    def test_deterministic(self):
        a = np.array([0.3, -1.1, 0.7])
        o = np.array([0.2, -0.5])
        img1 = arm.render_scene(a, o)
        img2 = arm.render_scene(a, o)
        assert img1.tobytes() == img2.tobytes()

    def test_overlap_reduces_lit_area(self):
        a = np.zeros(3)
        at_hand = arm.forward_kinematics(a)
        apart = np.array([-0.5, 0.5])
        lit_overlap = np.sum(arm.render_scene(a, at_hand) > 0.1)
        lit_apart = np.sum(arm.render_scene(a, apart) > 0.1)
        assert lit_overlap <= 0.8 * lit_apart

    def test_object_out_of_frame(self):
        with pytest.raises(DomainError):
            arm.render_scene(np.zeros(3), np.array([1.5, 0.0]))


class ZeroRng:
    def normal(self, loc, scale, size=None):
        return np.zeros(size if size is not None else ())


class TestObjectWalk:
    def test_zero_noise_zero_velocity_stays(self):
        walk = arm.ObjectWalk(position=[0.5, 0.1])
        pos = walk.step(ZeroRng())
        assert np.allclose(pos, [0.5, 0.1])

    def test_stays_in_annulus(self):
        rng = np.random.default_rng(1)
        walk = arm.ObjectWalk.random(rng)
        for _ in range(10_000):
            pos = walk.step(rng)
            r = np.hypot(*pos)
            assert arm.INNER_RADIUS - 1e-12 <= r <= arm.OUTER_RADIUS + 1e-12

    def test_step_size_bounded(self):
        rng = np.random.default_rng(2)
        walk = arm.ObjectWalk.random(rng)
        prev = walk.position.copy()
        steps = []
        for _ in range(10_000):
            pos = walk.step(rng)
            steps.append(np.hypot(*(pos - prev)))
            prev = pos.copy()
        assert np.mean(steps) <= 0.05
        # reflections can fold a step, never lengthen it beyond the cap
        assert np.max(steps) <= 2 * arm.ObjectWalk.MAX_SPEED + 1e-9


class TestBuildContext:
    def test_noise_disabled(self):
        c = arm.build_context([0.1, 0.2], [0.3, 0.4], None, noise_std=0.0)
        assert c.tolist() == [0.1, 0.2, 0.3, 0.4, 0.5, 0.5]

    def test_dimension(self):
        rng = np.random.default_rng(3)
        c = arm.build_context([0.1, 0.2], [0.3, 0.4], rng)
        assert c.shape == (6,)

    def test_noise_statistics(self):
        rng = np.random.default_rng(4)
        draws = np.array([arm.build_context([0, 0], [0, 0], rng, noise_std=0.1)[4:]
                          for _ in range(10_000)]).ravel()
        n = draws.size
        assert abs(draws.mean() - 0.5) <= 3 * 0.1 / np.sqrt(n)
        assert abs(draws.std() - 0.1) <= 3 * 0.1 / np.sqrt(2 * n)


class TestContact:
    def test_object_at_hand(self):
        a = np.array([0.2, 0.4, -0.3])
        assert arm.contact_test(a, arm.forward_kinematics(a)) == arm.CONTACT_HAND

    def test_far_object(self):
        assert arm.contact_test(np.zeros(3), np.array([0.0, 0.9])) == arm.CONTACT_NONE

    def test_object_on_middle_segment(self):
        # straight arm: middle segment spans x in [1/3, 2/3] at y = 0
        assert arm.contact_test(np.zeros(3), np.array([0.5, 0.0])) == arm.CONTACT_ARM

    def test_hand_condition_matches_distance_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            a = rng.uniform(-np.pi, np.pi, 3)
            obj = rng.uniform(-1.0, 1.0, 2)
            hand_dist = np.linalg.norm(arm.forward_kinematics(a) - obj)
            result = arm.contact_test(a, obj)
            if hand_dist <= arm.HAND_RADIUS + arm.OBJECT_RADIUS:
                assert result == arm.CONTACT_HAND
            else:
                assert result != arm.CONTACT_HAND

    def test_arm_condition_matches_segment_oracle(self):
        rng = np.random.default_rng(6)
        line_radius = arm.LINE_HALF_WIDTH_PX * arm.UNITS_PER_PIXEL
        for _ in range(100):
            a = rng.uniform(-np.pi, np.pi, 3)
            obj = rng.uniform(-1.0, 1.0, 2)
            pts = arm.joint_positions(a)
            dmin = min(segment_distance_oracle(obj, pts[i], pts[i + 1])
                       for i in range(3))
            result = arm.contact_test(a, obj)
            hand_dist = np.linalg.norm(pts[-1] - obj)
            if hand_dist <= arm.HAND_RADIUS + arm.OBJECT_RADIUS:
                assert result == arm.CONTACT_HAND
            elif dmin <= line_radius + arm.OBJECT_RADIUS - 1e-6:
                assert result == arm.CONTACT_ARM
            elif dmin > line_radius + arm.OBJECT_RADIUS + 1e-6:
                assert result == arm.CONTACT_NONE


class TestTrajectoryLog:
    def test_writes_rows(self, tmp_path):
        path = tmp_path / "traj.tsv"
        rows = [(0, np.zeros(3), np.array([1.0, 0.0]), np.array([0.5, 0.1]), 0.7)]
        arm.write_trajectory(path, rows)
        lines = path.read_text().splitlines()
        assert lines[0].split("\t") == ["t", "a1", "a2", "a3", "x1", "x2",
                                        "o1", "o2", "r"]
        assert lines[1].startswith("0\t")
