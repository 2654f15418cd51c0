import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shapetex.detect import (
    DetectionParams,
    MaximaSet,
    are_neighbours,
    components,
    detection_window,
    latent_points,
    local_maxima,
    neighbour_pairs,
    representatives,
)
from shapetex.geometry import CameraModel, ObservationWindow, SurfaceOrientation
from shapetex.imaging import ProbabilityMap, default_window
from shapetex.render import gaussian_bumps
from shapetex.simulate import SimulationSpec, simulate_on_plane


def brute_force_maxima(y, k1):
    """Interior pixels that are the row-major first maximum of their window."""
    h, w = y.shape
    out = []
    for r in range(k1, h - k1):
        for c in range(k1, w - k1):
            win = y[r - k1:r + k1 + 1, c - k1:c + k1 + 1]
            if np.argmax(win) == k1 * (2 * k1 + 1) + k1:
                out.append((r, c))
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def brute_force_neighbours(y, a, b, k2, step=0.5):
    from scipy import ndimage

    a, b = sorted([tuple(map(float, a)), tuple(map(float, b))])
    a, b = np.array(a), np.array(b)
    m = max(1, int(np.ceil(np.hypot(*(b - a)) / step)))
    t = np.arange(m + 1) / m
    pos = a[None] + t[:, None] * (b - a)[None]
    vals = ndimage.map_coordinates(y, pos.T, order=1, mode="nearest")
    return vals.min() >= k2 * max(vals[0], vals[-1])


class TestLocalMaxima:
    def test_single_bump(self):
        m = local_maxima(gaussian_bumps([(20, 25)], (40, 50)), 5)
        np.testing.assert_array_equal(m.rc, [[20, 25]])
        assert m.values[0] == 1.0

    def test_two_bumps(self):
        m = local_maxima(gaussian_bumps([(15, 15), (15, 45)], (30, 60)), 7)
        np.testing.assert_array_equal(m.rc, [[15, 15], [15, 45]])

    def test_constant_map_has_none(self):
        assert len(local_maxima(np.full((30, 30), 0.7), 4)) == 0

    def test_edge_excluded(self):
        y = np.zeros((30, 30))
        y[2, 15] = 1.0
        y[15, 15] = 0.5
        np.testing.assert_array_equal(local_maxima(y, 4).rc, [[15, 15]])

    def test_plateau_takes_first_pixel(self):
        y = np.zeros((30, 30))
        y[14:17, 13:18] = 1.0
        np.testing.assert_array_equal(local_maxima(y, 5).rc, [[14, 13]])

    def test_window_must_fit(self):
        with pytest.raises(ValueError):
            local_maxima(np.zeros((10, 30)), 5)

    @pytest.mark.parametrize("k1", [1, 2, 4])
    def test_brute_force_random(self, k1):
        rng = np.random.default_rng(k1)
        for _ in range(5):
            y = rng.integers(0, 6, (25, 31)) / 5.0
            np.testing.assert_array_equal(local_maxima(y, k1).rc, brute_force_maxima(y, k1))

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.int8, st.tuples(st.integers(3, 14), st.integers(3, 14)), elements=st.integers(0, 3)),
           st.integers(1, 3))
    def test_brute_force_property(self, raw, k1):
        y = raw / 3.0
        if 2 * k1 + 1 > min(y.shape):
            return
        np.testing.assert_array_equal(local_maxima(y, k1).rc, brute_force_maxima(y, k1))

    def test_sorted_and_values(self):
        y = np.random.default_rng(9).uniform(size=(40, 40))
        m = local_maxima(y, 3)
        assert [tuple(r) for r in m.rc] == sorted(tuple(r) for r in m.rc)
        np.testing.assert_array_equal(m.values, y[m.rc[:, 0], m.rc[:, 1]])


class TestNeighbours:
    def test_bumps_with_valley(self):
        y = gaussian_bumps([(20, 10), (20, 30)], (40, 40), sigma=4).grid
        # valley between peaks 20 px apart: exp(-100 / 32) ~ 0.044
        assert not are_neighbours((20, 10), (20, 30), y, 0.25)
        assert are_neighbours((20, 10), (20, 30), y, 0.03)

    def test_ridge(self):
        y = np.full((20, 40), 0.6)
        y[10, 5] = y[10, 35] = 1.0
        assert are_neighbours((10, 5), (10, 35), y, 0.5)
        assert not are_neighbours((10, 5), (10, 35), y, 0.7)

    def test_same_point(self):
        y = np.random.default_rng(1).uniform(size=(10, 10))
        assert are_neighbours((3, 4), (3, 4), y, 0.99)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000), st.tuples(*[st.integers(0, 19)] * 4), st.floats(0.05, 0.95))
    def test_symmetric_and_matches_brute_force(self, seed, pts, k2):
        y = np.random.default_rng(seed).uniform(size=(20, 20))
        a, b = pts[:2], pts[2:]
        got = are_neighbours(a, b, y, k2)
        assert got == are_neighbours(b, a, y, k2)
        assert got == brute_force_neighbours(y, a, b, k2)

    def test_pairs_match_pointwise(self):
        rng = np.random.default_rng(2)
        y = rng.uniform(0.3, 1, (60, 60))
        m = local_maxima(y, 3)
        params = DetectionParams(k1=3, k2=0.45)
        got = {tuple(p) for p in neighbour_pairs(m, y, params)}
        want = {(i, j) for i in range(len(m)) for j in range(i + 1, len(m))
                if are_neighbours(m.rc[i], m.rc[j], y, 0.45)}
        assert got == want

    def test_cutoff_limits_pairs(self):
        y = np.full((20, 80), 0.9)
        y[10, 10] = y[10, 70] = 1.0
        m = MaximaSet(np.array([[10, 10], [10, 70]]), np.array([1.0, 1.0]))
        assert len(neighbour_pairs(m, y, DetectionParams(k1=3))) == 1
        assert len(neighbour_pairs(m, y, DetectionParams(k1=3, cutoff=50))) == 0


class TestComponents:
    def test_chain(self):
        y = np.full((20, 80), 0.8)
        rc = np.array([[10, 10], [10, 30], [10, 50]])
        y[tuple(rc.T)] = [1.0, 0.95, 0.9]
        m = MaximaSet(rc, y[tuple(rc.T)])
        comps = components(m, y, DetectionParams(k1=3, k2=0.5, cutoff=25))
        assert comps == [[0, 1, 2]]
        np.testing.assert_array_equal(representatives(m, comps), [0])

    def test_singletons(self):
        pm = gaussian_bumps([(15, 15), (15, 45), (45, 30)], (60, 60), sigma=3)
        m = local_maxima(pm, 6)
        assert components(m, pm, DetectionParams(k1=6)) == [[0], [1], [2]]

    def test_partition(self):
        y = np.random.default_rng(7).uniform(size=(50, 50))
        m = local_maxima(y, 2)
        comps = components(m, y, DetectionParams(k1=2, k2=0.3))
        flat = sorted(i for c in comps for i in c)
        assert flat == list(range(len(m)))

    def test_tie_goes_to_first(self):
        y = np.full((21, 41), 0.7)
        y[10, 30] = y[10, 10] = 1.0
        m = local_maxima(y, 4)
        comps = components(m, y, DetectionParams(k1=4))
        np.testing.assert_array_equal(m.rc[representatives(m, comps)], [[10, 10]])


class TestLatentPoints:
    def test_bumps_recovered(self):
        centers = [(30, 30), (30, 90), (90, 30), (90, 90), (60, 60)]
        pm = gaussian_bumps(centers, (120, 120), sigma=4)
        pat = latent_points(pm, DetectionParams(k1=10))
        np.testing.assert_allclose(np.sort(pm.to_pixel(pat.points), axis=0), np.sort(centers, axis=0), atol=1e-9)
        assert pat.window == detection_window(pm, 10)
        assert pat.metadata["detection"]["n_components"] == 5

    @pytest.mark.parametrize("k2", [0.15, 0.25, 0.5])
    def test_k2_robust_on_separated_bumps(self, k2):
        rng = np.random.default_rng(0)
        centers = [(r + rng.uniform(-1, 1), c + rng.uniform(-1, 1)) for r in range(20, 100, 25) for c in range(20, 100, 25)]
        pm = gaussian_bumps(centers, (120, 120), sigma=3)
        pat = latent_points(pm, DetectionParams(k1=8, k2=k2))
        assert len(pat) == len(centers)

    def test_lattice_round_trip(self):
        cam = CameraModel(0.98, ObservationWindow.symmetric(1.0, 1.0))
        spec = SimulationSpec.for_beta("regular", 300, SurfaceOrientation.from_degrees(30, 45), cam,
                                       seed=3, random_phase=True)
        truth = simulate_on_plane(spec).points
        size = 400
        pm0 = ProbabilityMap(np.zeros((size, size)), default_window(size, size))
        rc = pm0.to_pixel(truth)
        h, w = size, size
        rr, cc = np.mgrid[0:h, 0:w].astype(float)
        y = np.zeros((h, w))
        for r0, c0 in np.round(rc):
            y = np.maximum(y, np.exp(-((rr - r0) ** 2 + (cc - c0) ** 2) / (2 * 2.0 ** 2)))
        pm = ProbabilityMap(y, pm0.window)
        k1 = 6
        pat = latent_points(pm, DetectionParams(k1=k1))
        inside = truth[pat.window.contains(truth)]
        # every detected point is a true point up to pixel rounding, and vice versa
        d = np.hypot(*(pat.points[:, None, :] - inside[None, :, :]).transpose(2, 0, 1))
        assert np.all(d.min(axis=1) <= pm.pixel_size)
        interior = inside[pat.window.shrink(2 * pm.pixel_size).contains(inside)]
        dd = np.hypot(*(interior[:, None, :] - pat.points[None, :, :]).transpose(2, 0, 1))
        assert np.all(dd.min(axis=1) <= pm.pixel_size)

    def test_zero_map_gives_empty_pattern(self):
        pm = ProbabilityMap(np.zeros((40, 40)), default_window(40, 40))
        pat = latent_points(pm, DetectionParams(k1=5))
        assert len(pat) == 0

    def test_params_validation(self):
        for bad in [dict(k1=0), dict(k1=2.5), dict(k2=1.0), dict(k2=0), dict(segment_step=0), dict(cutoff=-1)]:
            with pytest.raises(ValueError):
                DetectionParams(**bad)

    def test_metadata_records_params(self):
        pm = gaussian_bumps([(20, 20)], (40, 40))
        meta = latent_points(pm, DetectionParams(k1=5, k2=0.3)).metadata["detection"]
        assert meta["k1_px"] == 5 and meta["window_px"] == 11 and meta["k2"] == 0.3
