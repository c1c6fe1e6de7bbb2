import numpy as np
import pytest

from conftest import smooth_noise_image
from planeflow.homography import Homography
from planeflow.imgcore import FlowField, Image
from planeflow.occlusion import (agreement_check, final_occlusion_map,
                                 multiplicity_filter, symmetry_check,
                                 warped_consistency_error)
from planeflow.plane_match import PlaneAssignment, PlaneModel, Window


def model_with(h_fwd, h_bwd, mid=0):
    return PlaneModel(mid, h_fwd, h_bwd, Window(10, 10, 10), 1, "first")


class TestSymmetryCheck:
    def test_inverse_backward_near_one(self):
        h = Homography.translation(5.0, -3.0)
        m = model_with(h, h.inverse())
        ys, xs = np.mgrid[10:30, 10:30]
        ratio = symmetry_check(m, xs.ravel(), ys.ravel(), (64, 64), (64, 64))
        assert ratio >= 0.95

    def test_disjoint_backward_near_zero(self):
        m = model_with(Homography.translation(5.0, 0.0),
                       Homography.translation(40.0, 40.0))
        ys, xs = np.mgrid[5:15, 5:15]
        ratio = symmetry_check(m, xs.ravel(), ys.ravel(), (64, 64), (64, 64))
        assert ratio <= 0.05

    def test_absent_backward_is_zero(self):
        m = model_with(Homography.identity(), None)
        ys, xs = np.mgrid[0:4, 0:4]
        assert symmetry_check(m, xs.ravel(), ys.ravel(), (8, 8), (8, 8)) == 0.0

    def test_wrong_surface_backward_below_threshold(self):
        # accidental forward match onto a differently moving surface: the
        # back-projection misses most of the small forward region
        m = model_with(Homography.translation(12.0, 12.0),
                       Homography.identity())
        ys, xs = np.mgrid[20:52, 20:52]  # 32x32 plane
        ratio = symmetry_check(m, xs.ravel(), ys.ravel(), (128, 128), (128, 128))
        assert ratio < 0.5
        expected = (32 - 12) ** 2 / 32.0**2
        assert abs(ratio - expected) < 0.05


class TestAgreementCheck:
    def test_identical_sets(self):
        m = model_with(Homography.identity(), None)
        m.geo_inlier_idx = np.arange(50)
        m.photo_inlier_idx = np.arange(50)
        assert agreement_check(m) == 1.0

    def test_disjoint_sets(self):
        m = model_with(Homography.identity(), None)
        m.geo_inlier_idx = np.arange(50)
        m.photo_inlier_idx = np.arange(50, 100)
        assert agreement_check(m) == 0.0

    def test_hand_jaccard(self):
        m = model_with(Homography.identity(), None)
        m.geo_inlier_idx = np.arange(100)
        m.photo_inlier_idx = np.arange(30, 110)  # 80 px, intersection 70
        got = agreement_check(m)
        assert abs(got - 70.0 / 110.0) < 1e-12


class TestMultiplicityFilter:
    def _assignment_with(self, h, w, regions):
        # regions: list of (mid, ys slice, xs slice, loss)
        a = PlaneAssignment(h, w)
        for mid, ys, xs, loss in regions:
            a.model_id[ys, xs] = mid
            a.loss[ys, xs] = loss
            a.level[ys, xs] = 1
        return a

    def test_disjoint_targets_no_demotion(self):
        m0 = model_with(Homography.identity(), None, 0)
        m1 = model_with(Homography.identity(), None, 1)
        a = self._assignment_with(20, 20, [
            (0, slice(0, 5), slice(0, 5), 0.01),
            (1, slice(10, 15), slice(10, 15), 0.02)])
        demoted, cover = multiplicity_filter([m0, m1], a)
        assert demoted == 0
        assert cover.max() == 1

    def test_worse_model_demoted_on_collision(self):
        # both map their sources onto the same target square
        m0 = model_with(Homography.identity(), None, 0)
        m1 = model_with(Homography.translation(-10.0, 0.0), None, 1)
        a = self._assignment_with(20, 20, [
            (0, slice(0, 5), slice(0, 5), 0.001),
            (1, slice(0, 5), slice(10, 15), 0.030)])
        demoted, cover = multiplicity_filter([m0, m1], a)
        assert demoted == 25
        assert not (a.model_id == 1).any()
        assert (a.model_id == 0).sum() == 25

    def test_equal_losses_keep_both(self):
        m0 = model_with(Homography.identity(), None, 0)
        m1 = model_with(Homography.translation(-10.0, 0.0), None, 1)
        a = self._assignment_with(20, 20, [
            (0, slice(0, 5), slice(0, 5), 0.010),
            (1, slice(0, 5), slice(10, 15), 0.010)])
        demoted, _ = multiplicity_filter([m0, m1], a)
        assert demoted == 0
        assert (a.model_id == 0).sum() == 25 and (a.model_id == 1).sum() == 25

    def test_never_demotes_strictly_best(self):
        m0 = model_with(Homography.identity(), None, 0)
        m1 = model_with(Homography.translation(-10.0, 0.0), None, 1)
        m2 = model_with(Homography.translation(10.0, 0.0), None, 2)
        a = self._assignment_with(30, 30, [
            (0, slice(0, 5), slice(0, 5), 0.001),
            (1, slice(0, 5), slice(10, 15), 0.030),
            (2, slice(0, 5), slice(20, 25), 0.0005)])
        multiplicity_filter([m0, m1, m2], a)
        assert (a.model_id == 2).sum() == 25  # strictly minimal survives


class TestFinalOcclusionMap:
    def test_identity_pair_empty_mask(self, rng):
        a = smooth_noise_image(rng, 16, 16)
        flow = FlowField.zeros(16, 16)
        occ = final_occlusion_map(flow, a, a)
        assert not occ.occluded.any()

    def test_out_of_bounds_occluded(self, rng):
        a = smooth_noise_image(rng, 16, 16)
        u = np.zeros((16, 16))
        u[:, -3:] = 50.0
        flow = FlowField(u, np.zeros((16, 16)), np.ones((16, 16), bool))
        occ = final_occlusion_map(flow, a, a)
        assert occ.occluded[:, -3:].all()
        assert not occ.occluded[:, :10].any()

    def test_monotone_in_threshold(self, rng):
        a = smooth_noise_image(rng, 24, 24)
        b = smooth_noise_image(np.random.default_rng(99), 24, 24)
        flow = FlowField.zeros(24, 24)
        lo = final_occlusion_map(flow, a, b, theta_occ=0.02)
        hi = final_occlusion_map(flow, a, b, theta_occ=0.10)
        assert not (hi.occluded & ~lo.occluded).any()

    def test_forced_pixels_occluded(self, rng):
        a = smooth_noise_image(rng, 16, 16)
        forced = np.zeros((16, 16), bool)
        forced[4:8, 4:8] = True
        occ = final_occlusion_map(FlowField.zeros(16, 16), a, a,
                                  forced_occluded=forced)
        np.testing.assert_array_equal(occ.occluded, forced)

    def test_requires_dense_flow(self, rng):
        a = smooth_noise_image(rng, 8, 8)
        valid = np.ones((8, 8), bool)
        valid[0, 0] = False
        with pytest.raises(ValueError):
            final_occlusion_map(FlowField(np.zeros((8, 8)), np.zeros((8, 8)),
                                          valid), a, a)

    def test_warped_error_matches_direct_sample(self, rng):
        a = smooth_noise_image(rng, 20, 20)
        b = Image(np.roll(a.data, 3, axis=1).copy())
        u = np.full((20, 20), 3.0)
        flow = FlowField(u, np.zeros((20, 20)), np.ones((20, 20), bool))
        err = warped_consistency_error(flow, a, b)
        assert np.all(err[:, :16] < 1e-12)
