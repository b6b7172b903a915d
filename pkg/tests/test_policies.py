"""Placement strategies: entropy scores, detection profiles, argmax placement."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curtainsim.geometry import GridGeometry, build_ray_table
from curtainsim.grid import GAUSS_JITTER, DynamicOccupancyGrid
from curtainsim.policies import (
    LOG2_2PIE,
    StrategyId,
    _segmented_argmax,
    combined_field,
    combined_score,
    depth_prob_profile,
    info_gain_cell,
    occ_entropy,
    place_curtain,
    vel_entropy,
    vel_entropy_field,
)

CORNERS = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]])
QUARTERS = np.full(4, 0.25)
# Gaussian fit of CORNERS/QUARTERS has covariance (1 + jitter) * I.
H_CORNERS = 4.0941926130556014


def one_ray_grid(occupancy, r_min=0.0, r_max=1.0, m=4):
    geom = GridGeometry(
        width=3, height=3, cell_size=0.1, num_rays=1, r_min=r_min, r_max=r_max
    )
    rays = build_ray_table(geom)
    g = DynamicOccupancyGrid.zeros(geom, m)
    g.weights[:] = 1.0 / m
    g.occupancy[[1, 4, 7]] = occupancy
    return g, rays


class TestOccEntropy:
    def test_frozen_values(self):
        assert occ_entropy(0.25) == pytest.approx(0.8112781244591328, abs=1e-15)
        assert occ_entropy(0.5) == 1.0
        assert occ_entropy(0.0) == 0.0
        assert occ_entropy(1.0) == 0.0

    def test_array_in_array_out(self):
        out = occ_entropy(np.array([0.0, 0.25, 0.5, 1.0]))
        np.testing.assert_allclose(out, [0.0, 0.8112781244591328, 1.0, 0.0], atol=1e-15)

    @given(p=st.floats(0.0, 1.0))
    @settings(max_examples=80, deadline=None)
    def test_symmetric_and_bounded(self, p):
        h = occ_entropy(p)
        assert 0.0 <= h <= 1.0
        assert h == pytest.approx(occ_entropy(1.0 - p), abs=1e-12)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            occ_entropy(1.2)
        with pytest.raises(ValueError):
            occ_entropy(-0.1)


class TestVelEntropy:
    def test_frozen_unit_covariance(self):
        assert vel_entropy(CORNERS, QUARTERS) == pytest.approx(H_CORNERS, abs=1e-15)
        assert LOG2_2PIE == pytest.approx(4.094191170361282, abs=1e-15)

    def test_degenerate_particles_hit_the_jitter_floor(self):
        h = vel_entropy(np.ones((4, 2)), QUARTERS)
        assert h == pytest.approx(LOG2_2PIE + np.log2(GAUSS_JITTER), abs=1e-12)

    def test_scale_adds_log_determinant(self):
        h = vel_entropy(3.0 * CORNERS, QUARTERS)
        assert h == pytest.approx(LOG2_2PIE + np.log2(9.0 + GAUSS_JITTER), abs=1e-12)

    def test_field_matches_per_cell(self, rng):
        geom = GridGeometry(width=4, height=4, cell_size=0.25)
        g = DynamicOccupancyGrid.zeros(geom, 6)
        g.velocities[:] = rng.normal(size=(geom.n_cells, 6, 2))
        w = rng.random((geom.n_cells, 6)) + 1e-3
        g.weights[:] = w / w.sum(axis=1, keepdims=True)
        field = vel_entropy_field(g)
        for c in range(geom.n_cells):
            assert field[c] == pytest.approx(
                vel_entropy(g.velocities[c], g.weights[c]), abs=1e-12
            )

    def test_field_subset_matches_full(self, rng):
        geom = GridGeometry(width=4, height=4, cell_size=0.25)
        g = DynamicOccupancyGrid.zeros(geom, 3)
        g.velocities[:] = rng.normal(size=(geom.n_cells, 3, 2))
        g.weights[:] = 1.0 / 3
        cells = np.array([2, 7, 11])
        np.testing.assert_allclose(
            vel_entropy_field(g, cells), vel_entropy_field(g)[cells], atol=1e-15
        )


class TestCombinedScore:
    def test_frozen_value(self):
        got = combined_score(0.5, CORNERS, QUARTERS)
        assert got == pytest.approx(1.0 + 0.5 * H_CORNERS, abs=1e-15)

    def test_vacant_cell_scores_pure_occupancy_entropy(self):
        assert combined_score(0.0, CORNERS, QUARTERS) == 0.0
        assert combined_score(1.0, CORNERS, QUARTERS) == pytest.approx(H_CORNERS)

    def test_field_matches_scalar(self, rng):
        geom = GridGeometry(width=3, height=3, cell_size=0.25)
        g = DynamicOccupancyGrid.zeros(geom, 5)
        g.occupancy[:] = rng.random(geom.n_cells)
        g.velocities[:] = rng.normal(size=(geom.n_cells, 5, 2))
        g.weights[:] = 1.0 / 5
        field = combined_field(g)
        for c in range(geom.n_cells):
            assert field[c] == pytest.approx(
                combined_score(g.occupancy[c], g.velocities[c], g.weights[c]), abs=1e-12
            )


class TestInfoGain:
    def test_frozen_value(self):
        assert info_gain_cell(0.5, 0.1, 0.1) == pytest.approx(
            0.5310044064107188, abs=1e-15
        )

    def test_noise_free_gain_is_the_occupancy_entropy(self):
        om = np.linspace(0.0, 1.0, 101)
        np.testing.assert_allclose(info_gain_cell(om, 0.0, 0.0), occ_entropy(om), atol=1e-12)

    def test_certain_cells_gain_nothing(self):
        assert info_gain_cell(0.0, 0.1, 0.2) == pytest.approx(0.0, abs=1e-12)
        assert info_gain_cell(1.0, 0.1, 0.2) == pytest.approx(0.0, abs=1e-12)

    @given(
        om=st.floats(0.0, 1.0),
        fp=st.floats(0.0, 0.49),
        fn=st.floats(0.0, 0.49),
    )
    @settings(max_examples=100, deadline=None)
    def test_nonnegative_and_capped_by_prior_entropy(self, om, fp, fn):
        g = info_gain_cell(om, fp, fn)
        assert g >= -1e-12
        assert g <= occ_entropy(om) + 1e-12

    def test_symmetric_noise_peaks_at_half(self):
        om = np.linspace(0.01, 0.99, 99)
        gains = info_gain_cell(om, 0.07, 0.07)
        assert abs(om[np.argmax(gains)] - 0.5) < 1e-9


class TestDepthProbProfile:
    def test_frozen_example(self):
        g, rays = one_ray_grid([0.5, 0.5, 1.0])
        prof = depth_prob_profile(g, rays.cells)
        np.testing.assert_allclose(prof.p_detect, [0.5, 0.25, 0.25], atol=1e-15)
        np.testing.assert_allclose(prof.p_vacant, [0.5, 0.25, 0.0], atol=1e-15)

    def test_matches_quadratic_reference(self, rng):
        """Cumulative-product marching equals explicit first-return products."""
        for _ in range(30):
            n = int(rng.integers(1, 40))
            om = rng.random(n)
            geom = GridGeometry(width=n, height=1, cell_size=0.1)
            g = DynamicOccupancyGrid.zeros(geom, 2)
            g.occupancy[:] = om
            prof = depth_prob_profile(g, np.arange(n))
            for k in range(n):
                prod = 1.0
                for j in range(k):
                    prod *= 1.0 - om[j]
                assert prof.p_detect[k] == pytest.approx(om[k] * prod, abs=1e-12)
                assert prof.p_vacant[k] == pytest.approx(prod * (1.0 - om[k]), abs=1e-12)

    def test_outcomes_form_a_distribution(self, rng):
        om = rng.random(25)
        geom = GridGeometry(width=25, height=1, cell_size=0.1)
        g = DynamicOccupancyGrid.zeros(geom, 2)
        g.occupancy[:] = om
        prof = depth_prob_profile(g, np.arange(25))
        assert prof.p_detect.sum() + prof.p_vacant[-1] == pytest.approx(1.0, abs=1e-12)


class TestSegmentedArgmax:
    def test_picks_best_in_window_per_ray(self, rays_mid):
        rng = np.random.default_rng(2)
        scores = rng.random(rays_mid.cells.shape[0])
        slots = _segmented_argmax(scores, rays_mid)
        for r in range(rays_mid.num_rays):
            lo, hi = int(rays_mid.in_lo[r]), int(rays_mid.in_hi[r])
            o = int(rays_mid.offsets[r])
            assert slots[r] == (lo - o) + int(np.argmax(scores[lo:hi]))

    def test_ties_resolve_to_the_nearest_slot(self, rays_mid):
        scores = np.ones(rays_mid.cells.shape[0])
        slots = _segmented_argmax(scores, rays_mid)
        np.testing.assert_array_equal(
            slots, (rays_mid.in_lo - rays_mid.offsets[:-1]).astype(np.int32)
        )

    def test_out_of_window_scores_cannot_win(self, rays_mid):
        scores = np.zeros(rays_mid.cells.shape[0])
        scores[rays_mid.offsets[:-1]] = 100.0  # slot 0 sits below r_min here
        slots = _segmented_argmax(scores, rays_mid)
        assert np.all(slots == rays_mid.in_lo - rays_mid.offsets[:-1])

    def test_empty_window_yields_minus_one(self):
        geom = GridGeometry(
            width=8, height=8, cell_size=0.25, num_rays=8, r_min=2.9, r_max=3.0
        )
        rays = build_ray_table(geom)
        slots = _segmented_argmax(np.ones(rays.cells.shape[0]), rays)
        assert np.all(slots == -1)


class TestPlaceCurtain:
    def test_depth_prob_places_first_return_mode(self):
        g, rays = one_ray_grid([0.3, 0.6, 0.9])
        # p_detect = [0.3, 0.42, 0.252] -> slot 1
        assert place_curtain(g, StrategyId.DEPTH_PROB, rays).slots.tolist() == [1]

    def test_depth_prob_respects_the_range_window(self):
        g, rays = one_ray_grid([0.99, 0.1, 0.1], r_min=0.05)
        # global argmax (slot 0) is below r_min; among slots 1, 2 the nearer wins
        assert place_curtain(g, StrategyId.DEPTH_PROB, rays).slots.tolist() == [1]

    def test_occ_entropy_places_most_uncertain_cell(self):
        g, rays = one_ray_grid([0.1, 0.5, 0.9])
        assert place_curtain(g, StrategyId.OCC_ENTROPY, rays).slots.tolist() == [1]

    def test_occ_entropy_tie_takes_nearest(self):
        g, rays = one_ray_grid([0.2, 0.8, 0.2])  # equal entropies everywhere
        assert place_curtain(g, StrategyId.OCC_ENTROPY, rays).slots.tolist() == [0]

    def test_vel_entropy_places_widest_velocity_spread(self):
        g, rays = one_ray_grid([0.5, 0.5, 0.5])
        g.velocities[:] = 0.0
        g.velocities[4] = CORNERS  # only the middle ray cell has spread
        assert place_curtain(g, StrategyId.VEL_ENTROPY, rays).slots.tolist() == [1]

    def test_combined_weighs_velocity_spread_by_occupancy(self):
        g, rays = one_ray_grid([0.5, 0.5, 0.5])
        g.velocities[:] = 0.0
        g.velocities[1] = CORNERS
        g.velocities[7] = 2.0 * CORNERS
        # equal occupancy: the larger spread (farther cell) wins
        assert place_curtain(g, StrategyId.COMBINED, rays).slots.tolist() == [2]
        g.occupancy[[1, 4, 7]] = [0.5, 0.5, 0.0]
        # zero occupancy silences the far cell's velocity term
        assert place_curtain(g, StrategyId.COMBINED, rays).slots.tolist() == [0]

    @pytest.mark.parametrize("strategy", list(StrategyId))
    def test_placements_are_always_valid(self, strategy, geom_mid, rays_mid, rng):
        g = DynamicOccupancyGrid.zeros(geom_mid, 4)
        g.occupancy[:] = rng.random(geom_mid.n_cells)
        g.velocities[:] = rng.normal(size=(geom_mid.n_cells, 4, 2))
        g.weights[:] = 0.25
        curtain = place_curtain(g, strategy, rays_mid)
        curtain.validate(rays_mid)
        assert np.all(curtain.slots >= 0)

    def test_strategy_accepts_name_and_index(self):
        g, rays = one_ray_grid([0.1, 0.5, 0.9])
        by_enum = place_curtain(g, StrategyId.OCC_ENTROPY, rays).slots
        by_name = place_curtain(g, "occ_entropy", rays).slots
        by_int = place_curtain(g, 1, rays).slots
        np.testing.assert_array_equal(by_enum, by_name)
        np.testing.assert_array_equal(by_enum, by_int)


class TestStrategyId:
    def test_arm_order(self):
        assert [s.value for s in StrategyId] == [0, 1, 2, 3]
        assert StrategyId.DEPTH_PROB == 0
        assert StrategyId.COMBINED == 3

    def test_from_name_is_forgiving_about_case(self):
        assert StrategyId.from_name("depth_prob") is StrategyId.DEPTH_PROB
        assert StrategyId.from_name(" VEL_ENTROPY ") is StrategyId.VEL_ENTROPY

    def test_from_name_rejects_unknown(self):
        with pytest.raises(ValueError, match="unknown strategy"):
            StrategyId.from_name("nearest")
