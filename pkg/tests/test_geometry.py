import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from errors import ExponentTooSmall, InvalidDomain, LengthMismatch
from geometry import (
    ball_indices,
    cell_ball_mass,
    cell_distances,
    decay_integral_check,
    estimate_doubling,
    integrate,
    make_grid,
    volume,
)


class TestMakeGrid:
    def test_torus_layout(self, torus_grid):
        assert torus_grid.size == 16
        assert torus_grid.points[0] == -8.0
        assert torus_grid.quad_weights.sum() == pytest.approx(16.0)
        assert torus_grid.dimension == 1.0

    def test_halfline_masses(self, halfline_grid):
        # x^{2λ}dx with λ = 1/2 on (0, 8]: total mass 8²/2
        assert halfline_grid.quad_weights.sum() == pytest.approx(32.0)
        assert halfline_grid.edges[0] == 0.0
        assert halfline_grid.edges[-1] == 8.0
        assert halfline_grid.dimension == 2.0

    def test_halfline_grading(self):
        grid = make_grid("halfline", 64, right_endpoint=10.0)
        assert grid.widths[0] == pytest.approx(1e-2, rel=1e-6)
        assert np.all(np.diff(grid.widths) > 0)

    def test_coarse_halfline_is_uniform(self):
        grid = make_grid("halfline", 8, right_endpoint=4.0, grading=0.2)
        np.testing.assert_allclose(grid.widths, 0.5)

    def test_arrays_are_read_only(self, torus_grid):
        with pytest.raises(ValueError):
            torus_grid.points[0] = 1.0

    def test_invalid_domains(self):
        with pytest.raises(InvalidDomain):
            make_grid("sphere", 16)
        with pytest.raises(InvalidDomain):
            make_grid("line-periodic", 4)
        with pytest.raises(InvalidDomain):
            make_grid("line-periodic", 16, period=-1.0)
        with pytest.raises(InvalidDomain):
            make_grid("halfline", 16)
        with pytest.raises(InvalidDomain):
            make_grid("halfline", 16, right_endpoint=4.0, bessel_lambda=-0.5)


class TestVolumes:
    def test_torus_volume_saturates(self, torus_grid):
        assert volume(torus_grid, 0.0, 3.0) == 6.0
        assert volume(torus_grid, 0.0, 20.0) == 16.0

    def test_halfline_closed_form(self, halfline_grid):
        assert volume(halfline_grid, 0.0, 1.0) == pytest.approx(0.5)
        assert volume(halfline_grid, 3.0, 1.0) == pytest.approx((16.0 - 4.0) / 2.0)

    def test_nonpositive_radius(self, torus_grid):
        with pytest.raises(InvalidDomain):
            volume(torus_grid, 0.0, 0.0)

    @settings(max_examples=50, deadline=None)
    @given(x=st.floats(0.01, 7.9), r1=st.floats(0.01, 5.0), r2=st.floats(0.01, 5.0))
    def test_monotone_in_radius(self, halfline_grid, x, r1, r2):
        lo, hi = sorted((r1, r2))
        assert volume(halfline_grid, x, lo) <= volume(halfline_grid, x, hi) + 1e-12

    def test_cell_model_ball_mass_on_torus(self, torus_grid):
        np.testing.assert_allclose(cell_ball_mass(torus_grid, torus_grid.points, 3.3), 6.6)
        np.testing.assert_allclose(cell_ball_mass(torus_grid, torus_grid.points, 0.4), 0.8)

    def test_ball_indices(self, torus_grid):
        idx = ball_indices(torus_grid, 0.0, 2.5)
        np.testing.assert_array_equal(torus_grid.points[idx], [-2.0, -1.0, 0.0, 1.0, 2.0])

    def test_cell_distances_wrap(self, torus_grid):
        d = cell_distances(torus_grid, [-8.0])
        # the last cell [6.5, 7.5] is 0.5 away across the seam
        assert d[0, -1] == pytest.approx(0.5)
        assert d[0, 0] == 0.0


class TestIntegrate:
    def test_constant(self, halfline_grid):
        assert integrate(halfline_grid, np.ones(halfline_grid.size)) == pytest.approx(32.0)

    def test_length_mismatch(self, torus_grid):
        with pytest.raises(LengthMismatch):
            integrate(torus_grid, np.ones(5))


class TestDoubling:
    def test_torus_is_one_dimensional(self):
        d = estimate_doubling(make_grid("line-periodic", 64, period=32.0))
        assert d.n_hat == pytest.approx(1.0)
        assert d.D_hat == pytest.approx(0.0, abs=1e-9)

    def test_bessel_dimension(self, halfline_grid):
        d = estimate_doubling(halfline_grid)
        assert 1.5 < d.n_hat <= 2.0 + 1e-9
        assert 0.0 <= d.D_hat <= d.n_hat
        assert d.sampling_plan["far_pair_threshold"] == 3.0


class TestDecayIntegral:
    def test_torus_closed_form(self):
        grid = make_grid("line-periodic", 32, period=32.0)
        result = decay_integral_check(grid, 0.0, 1.0, 2.0, n_hat=1.0)
        assert result.lhs == pytest.approx(32.0 / 17.0)
        assert result.bound_ratio == pytest.approx(16.0 / 17.0)

    def test_exponent_must_exceed_dimension(self, torus_grid):
        with pytest.raises(ExponentTooSmall):
            decay_integral_check(torus_grid, 0.0, 1.0, 1.0, n_hat=1.0)
