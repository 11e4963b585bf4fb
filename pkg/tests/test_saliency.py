import numpy as np
import pytest
from scipy import ndimage
from scipy.stats import spearmanr

from latentgoals import arm
from latentgoals.errors import DomainError, FormatError
from latentgoals.saliency import (IMAGE_SIZE, SaliencyConfig, field_peak,
                                  gaussian_pyramid, read_gray,
                                  reward_from_image, saliency_map, write_gray)


def reference_saliency_map(img):
    """Independent recomputation: pyramid via scipy + explicit differencing."""
    kernel = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
    levels = [np.asarray(img, dtype=float)]
    for _ in range(4):
        sm = ndimage.correlate1d(levels[-1], kernel, axis=0, mode="nearest")
        sm = ndimage.correlate1d(sm, kernel, axis=1, mode="nearest")
        levels.append(sm[::2, ::2])
    out = np.zeros((IMAGE_SIZE, IMAGE_SIZE))
    ups = []
    for lv in levels:
        f = IMAGE_SIZE // lv.shape[0]
        ups.append(np.kron(lv, np.ones((f, f))))
    for i in range(5):
        for j in range(i + 1, 5):
            out += np.abs(ups[i] - ups[j])
    return out


def random_scene(rng):
    angles = rng.uniform(-np.pi, np.pi, 3)
    radius = np.sqrt(rng.uniform(arm.INNER_RADIUS ** 2, arm.OUTER_RADIUS ** 2))
    phi = rng.uniform(0.0, 2.0 * np.pi)
    obj = radius * np.array([np.cos(phi), np.sin(phi)])
    return angles, obj


class TestPyramid:
    def test_constant_image_stays_constant(self):
        img = np.full((48, 48), 0.37)
        for level in gaussian_pyramid(img):
            assert np.max(np.abs(level - 0.37)) <= 1e-12

    def test_level_sizes(self):
        sizes = [lv.shape[0] for lv in gaussian_pyramid(np.zeros((48, 48)))]
        assert sizes == [48, 24, 12, 6, 3]

    def test_impulse_mass_conserved(self):
        # impulse placed so its mass never crosses an image border during
        # smooth-then-decimate; each level then keeps total mass (scaled by
        # the 4x area shrink) -- border-adjacent positions concentrate loss
        img = np.zeros((48, 48))
        img[16, 16] = 1.0
        for i, level in enumerate(gaussian_pyramid(img)):
            mass = level.sum() * (4 ** i)
            assert mass == pytest.approx(1.0, rel=0.02)

    def test_rejects_wrong_size(self):
        with pytest.raises(DomainError):
            gaussian_pyramid(np.zeros((32, 32)))


class TestSaliencyMap:
    def test_constant_image_zero_map(self):
        assert np.max(saliency_map(np.full((48, 48), 0.5))) == 0.0

    def test_nonnegative(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            assert np.min(saliency_map(rng.random((48, 48)))) >= 0.0

    def test_matches_reference_recomputation(self):
        rng = np.random.default_rng(1)
        img = rng.random((48, 48))
        assert np.max(np.abs(saliency_map(img) - reference_saliency_map(img))) <= 1e-12

    def test_disk_peak_near_disk(self):
        yy, xx = np.mgrid[0:48, 0:48]
        img = np.clip(2.5 - np.hypot(yy - 20, xx - 30), 0, 1)
        smap = saliency_map(img)
        peak = np.unravel_index(np.argmax(smap), smap.shape)
        assert np.hypot(peak[0] - 20, peak[1] - 30) <= 3.0


class TestReward:
    def test_blank_image_zero(self):
        assert reward_from_image(np.zeros((48, 48))) == 0.0
        assert reward_from_image(np.full((48, 48), 0.8)) == 0.0

    def test_closer_scene_scores_higher(self):
        angles = np.array([np.pi / 2, -np.pi / 2, 0.0])
        hand = arm.forward_kinematics(angles)
        close = hand + np.array([0.0, -2 * arm.UNITS_PER_PIXEL])
        far = hand + np.array([0.0, -30 * arm.UNITS_PER_PIXEL])
        r_close = reward_from_image(arm.render_scene(angles, close))
        r_far = reward_from_image(arm.render_scene(angles, far))
        assert r_close > r_far

    def test_calibration_percentile(self):
        # the stored norm scale maps the 99th percentile of random-scene
        # field peaks to ~1.0 (estimated here on a smaller resample)
        rng = np.random.default_rng(123)
        cfg = SaliencyConfig()
        rewards = np.empty(2500)
        for i in range(2500):
            angles, obj = random_scene(rng)
            rewards[i] = reward_from_image(arm.render_scene(angles, obj), cfg)
        assert np.percentile(rewards, 99) == pytest.approx(1.0, abs=0.1)

    def test_translation_quasi_invariance(self):
        angles = np.array([0.4, 0.4, 0.4])
        obj = np.array([0.1, 0.45])
        shift = 3 * arm.UNITS_PER_PIXEL
        base = reward_from_image(arm.render_scene(angles, obj))
        # translate the whole scene by moving the object and rotating the
        # base: approximate by shifting the rendered image directly
        img = arm.render_scene(angles, obj)
        shifted = np.roll(img, 3, axis=1)
        r_shift = reward_from_image(shifted)
        assert abs(r_shift - base) <= 0.10 * base

    def test_proximity_spearman(self):
        rng = np.random.default_rng(777)
        dists, rewards = [], []
        for _ in range(200):
            angles, obj = random_scene(rng)
            hand = arm.forward_kinematics(angles)
            dists.append(np.hypot(*(hand - obj)) / arm.UNITS_PER_PIXEL)
            rewards.append(reward_from_image(arm.render_scene(angles, obj)))
        rho = spearmanr(dists, rewards).statistic
        assert rho <= -0.5


class TestImageFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        img = np.clip(rng.random((48, 48)), 0, 1)
        path = tmp_path / "scene.gray"
        write_gray(path, img)
        back = read_gray(path)
        assert back.shape == (48, 48)
        assert np.max(np.abs(back - img)) <= 0.5 / 255.0 + 1e-12

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "bad.gray"
        path.write_bytes(b"\x30\x00\x00\x00\x30\x00\x00\x00abc")
        with pytest.raises(FormatError):
            read_gray(path)
