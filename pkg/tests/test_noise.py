import math

import numpy as np
import pytest

from sfsampler.core import ConfigError, derive_stream
from sfsampler.noise import NoisePair, aggregate, aggregate_increments, pair_from_normals, sample_pair


class ZeroStream:
    def standard_normal(self, shape=None):
        return np.zeros(shape)


def _moment_z(samples, expected):
    """z-score of an empirical mean against ``expected``."""
    se = samples.std(ddof=1) / math.sqrt(samples.size)
    return abs(samples.mean() - expected) / se


@pytest.fixture(scope="module")
def big_draw():
    h = 0.25
    z = derive_stream(5, 0).standard_normal((10**6, 2))
    dW, dZ = pair_from_normals(z[:, 0], z[:, 1], h)
    return h, dW, dZ


class TestSamplePair:
    def test_zero_stream(self):
        p = sample_pair(0.5, 3, ZeroStream())
        np.testing.assert_array_equal(p.dW, 0.0)
        np.testing.assert_array_equal(p.dZ, 0.0)
        assert p.h == 0.5

    def test_shape_and_determinism(self):
        a = sample_pair(0.1, 4, derive_stream(1, 2))
        b = sample_pair(0.1, 4, derive_stream(1, 2))
        assert a.dW.shape == (4,) and a.dZ.shape == (4,)
        np.testing.assert_array_equal(a.dW, b.dW)
        np.testing.assert_array_equal(a.dZ, b.dZ)

    @pytest.mark.parametrize("h", [0.0, -0.1])
    def test_rejects_nonpositive_step(self, h):
        with pytest.raises(ConfigError):
            sample_pair(h, 2, derive_stream(0, 0))

    def test_var_dz(self, big_draw):
        h, _, dZ = big_draw
        assert _moment_z(dZ**2, h**3 / 3) < 4
        assert math.isclose(h**3 / 3, 0.005208333333333333, rel_tol=1e-15)

    def test_var_dw(self, big_draw):
        h, dW, _ = big_draw
        assert _moment_z(dW**2, h) < 4

    def test_cov(self, big_draw):
        h, dW, dZ = big_draw
        # Cov(W_h, int_0^h (h - r) dW_r) = int_0^h (h - r) dr = h^2 / 2
        assert _moment_z(dW * dZ, h**2 / 2) < 4

    def test_dimensions_independent(self):
        z = derive_stream(9, 0).standard_normal((2 * 10**5, 2, 2))
        dW, dZ = pair_from_normals(z[:, 0], z[:, 1], 1.0)
        n = dW.shape[0]
        assert abs(np.corrcoef(dW[:, 0], dW[:, 1])[0, 1]) < 4 / math.sqrt(n)
        assert abs(np.corrcoef(dZ[:, 0], dZ[:, 1])[0, 1]) < 4 / math.sqrt(n)
        assert abs(np.corrcoef(dW[:, 0], dZ[:, 1])[0, 1]) < 4 / math.sqrt(n)


class TestAggregate:
    def test_identity_for_one_pair(self):
        p = NoisePair(np.array([0.3]), np.array([0.01]), 0.25)
        assert aggregate([p], 0.25) is p

    def test_two_halves_by_hand(self):
        p1 = NoisePair(np.array([0.7]), np.array([0.11]), 0.5)
        p2 = NoisePair(np.array([-0.2]), np.array([0.05]), 0.5)
        out = aggregate([p1, p2], 1.0)
        np.testing.assert_allclose(out.dW, [0.7 - 0.2], rtol=0, atol=1e-15)
        np.testing.assert_allclose(out.dZ, [0.11 + 0.5 * 0.7 + 0.05], rtol=0, atol=1e-15)
        assert out.h == 1.0

    def test_mismatched_steps(self):
        p1 = NoisePair(np.zeros(1), np.zeros(1), 0.5)
        p2 = NoisePair(np.zeros(1), np.zeros(1), 0.25)
        with pytest.raises(ConfigError):
            aggregate([p1, p2], 0.75)

    def test_wrong_coarse_step(self):
        p = NoisePair(np.zeros(1), np.zeros(1), 0.5)
        with pytest.raises(ConfigError):
            aggregate([p, p], 0.5)

    def test_empty(self):
        with pytest.raises(ConfigError):
            aggregate([], 1.0)

    def test_associative(self):
        rng = derive_stream(3, 3)
        pairs = [sample_pair(0.125, 3, rng) for _ in range(4)]
        flat = aggregate(pairs, 0.5)
        nested = aggregate([aggregate(pairs[:2], 0.25), aggregate(pairs[2:], 0.25)], 0.5)
        np.testing.assert_allclose(flat.dW, nested.dW, rtol=0, atol=1e-12)
        np.testing.assert_allclose(flat.dZ, nested.dZ, rtol=0, atol=1e-12)

    def test_matches_riemann_sum_of_fine_path(self):
        # dZ over [0, H] is int (H - r) dW_r; refine far below the fine step and compare.
        h_f, m, k = 0.1, 4, 250
        z = derive_stream(4, 0).standard_normal(m * k)
        dw = math.sqrt(h_f / k) * z
        r = (np.arange(m * k) + 0.5) * (h_f / k)
        exact_dZ = ((m * h_f - r) * dw).sum()
        fine = []
        for j in range(m):
            seg = dw[j * k : (j + 1) * k]
            rs = (np.arange(k) + 0.5) * (h_f / k)
            fine.append(NoisePair(np.array([seg.sum()]), np.array([((h_f - rs) * seg).sum()]), h_f))
        out = aggregate(fine, m * h_f)
        assert abs(out.dZ[0] - exact_dZ) < 1e-12
        assert abs(out.dW[0] - dw.sum()) < 1e-12

    def test_aggregated_moments_match_direct(self):
        h, m, trials = 0.5, 8, 10**6
        z = derive_stream(8, 1).standard_normal((trials, m, 2))
        dW, dZ = pair_from_normals(z[..., 0:1], z[..., 1:2], h / m)
        cW, cZ = aggregate_increments(dW, dZ, h / m, m)
        cW, cZ = cW[:, 0, 0], cZ[:, 0, 0]
        assert _moment_z(cW**2, h) < 4
        assert _moment_z(cZ**2, h**3 / 3) < 4
        assert _moment_z(cW * cZ, h**2 / 2) < 4

    def test_increments_group_check(self):
        with pytest.raises(ConfigError):
            aggregate_increments(np.zeros((5, 1)), np.zeros((5, 1)), 0.1, 2)
