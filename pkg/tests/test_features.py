import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from comfortnav.features import FEATURE_LENGTH, texture_feature
from comfortnav.simworld import default_classes, striped_world, terrain_color


class TestTextureFeature:
    def test_uniform_patch(self):
        f = texture_feature(np.full((32, 32, 3), 120.0))
        assert f.shape == (FEATURE_LENGTH,)
        assert np.allclose(f[0:3], 120.0)
        assert np.allclose(f[3:6], 0.0)
        intensity = f[6:22]
        assert intensity[120 * 16 // 256] == pytest.approx(1.0)
        assert np.allclose(f[22:30], 1.0 / 8.0)  # zero gradients -> uniform

    def test_grayscale_input_same_length(self):
        f = texture_feature(np.full((16, 16), 50.0))
        assert f.shape == (FEATURE_LENGTH,)
        assert np.allclose(f[0:3], 50.0)

    def test_rotation_invariant_statistics(self):
        rng = np.random.default_rng(0)
        patch = rng.integers(0, 255, size=(24, 24, 3)).astype(float)
        a = texture_feature(patch)
        b = texture_feature(np.rot90(patch, 2))
        assert np.allclose(a[0:6], b[0:6])
        assert np.allclose(a[6:22], b[6:22])

    def test_histogram_segments_sum_to_one(self):
        rng = np.random.default_rng(1)
        f = texture_feature(rng.integers(0, 255, size=(40, 40, 3)).astype(float))
        assert f[6:22].sum() == pytest.approx(1.0, abs=1e-6)
        assert f[22:30].sum() == pytest.approx(1.0, abs=1e-6)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(min_value=-40.0, max_value=40.0))
    def test_mean_shift_covariance(self, c):
        rng = np.random.default_rng(2)
        patch = rng.uniform(60, 180, size=(16, 16, 3))
        a = texture_feature(patch)
        b = texture_feature(patch + c)
        assert np.allclose(b[0:3], a[0:3] + c)
        assert np.allclose(b[3:6], a[3:6])

    def test_separates_world_textures(self):
        """Descriptor distance between classes must exceed the spread
        within a class, measured on seeded generator output."""
        world = striped_world(texture_seed=5)
        rng = np.random.default_rng(3)

        def sample_patch(x0, y0):
            xs, ys = np.meshgrid(x0 + np.arange(64) * 0.01, y0 + np.arange(64) * 0.01)
            return terrain_color(world, xs, ys).astype(float)

        feats = {}
        for cid, x_center in ((0, 5.0), (1, 25.0), (2, 45.0)):
            feats[cid] = [texture_feature(sample_patch(x_center + rng.uniform(0, 5), rng.uniform(-4, 2)))
                          for _ in range(4)]
        intra, inter = [], []
        for cid, fs in feats.items():
            for i in range(len(fs)):
                for j in range(i + 1, len(fs)):
                    intra.append(np.linalg.norm(fs[i] - fs[j]))
                for other, gs in feats.items():
                    if other > cid:
                        inter.extend(np.linalg.norm(fs[i] - g) for g in gs)
        assert min(inter) > max(intra)

    def test_degenerate_patches_rejected(self):
        with pytest.raises(ValueError):
            texture_feature(np.zeros((1, 1, 3)))
        with pytest.raises(ValueError):
            texture_feature(np.zeros((2, 5, 3)))
        with pytest.raises(ValueError):
            texture_feature(np.zeros((3, 3, 4)))

    def test_gradient_histogram_weighted_by_magnitude(self):
        # vertical step edge: all gradient mass points along +x
        patch = np.zeros((16, 16))
        patch[:, 8:] = 200.0
        f = texture_feature(patch)
        orient = f[22:30]
        # arctan2(0, +g) = 0 falls in the bin covering angle 0
        assert orient[4] == pytest.approx(1.0)
