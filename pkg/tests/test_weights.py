import math

import numpy as np
import pytest

from config import CRITICAL_INDEX_RESOLUTION
from errors import ExponentTooSmall, GridMismatch, HypothesisViolated, InvalidP
from geometry import estimate_doubling
from weights import (
    ap_characteristic,
    critical_index,
    fs_maximal_check,
    make_constant_weight,
    make_power_weight,
    make_tabulated_weight,
    make_weight,
    sequence_norm,
    smfx_domination_check,
    strong_maximal,
    weighted_lp_norm,
)


@pytest.fixture(scope="module")
def grids(torus_grid):
    return (torus_grid, torus_grid)


@pytest.fixture(scope="module")
def power_weight(grids):
    return make_power_weight(grids, 0.5, 0.5)


class TestConstruction:
    def test_constant(self, grids):
        w = make_constant_weight(grids)
        assert w.separable
        np.testing.assert_allclose(w.values, 1.0)
        assert w.describe() == {"label": "constant", "axes": [{"kind": "constant"}, {"kind": "constant"}]}

    def test_power_cell_averages(self, grids, power_weight):
        # the cell around the origin averages |x|^{1/2} over [-1/2, 1/2]
        center = (2.0 / 3.0) * 0.5 ** 0.5
        assert power_weight.values[8, 8] == pytest.approx(center ** 2)
        assert power_weight.label == "power(0.5,0.5)"

    def test_zero_exponent_axis_is_constant(self, grids):
        w = make_power_weight(grids, 0.0, 0.5)
        assert w.descriptors[0] == {"kind": "constant"}

    def test_make_weight(self, grids):
        assert make_weight(grids, {"kind": "constant"}).label == "constant"
        assert make_weight(grids, {"kind": "power", "a1": 1.0}).label == "power(1,0)"
        with pytest.raises(ValueError):
            make_weight(grids, {"kind": "exponential"})

    def test_tabulated(self, grids):
        w = make_tabulated_weight(grids, np.full((16, 16), 2.0))
        assert not w.separable
        with pytest.raises(GridMismatch):
            make_tabulated_weight(grids, np.ones((16, 8)))
        with pytest.raises(ValueError):
            make_tabulated_weight(grids, np.zeros((16, 16)))

    def test_scaled(self, grids):
        w = make_constant_weight(grids).scaled(3.0)
        assert w.scale == 3.0
        np.testing.assert_allclose(w.values, 3.0)


class TestApCharacteristic:
    def test_constant_weight(self, grids):
        w = make_constant_weight(grids)
        for p in (1.0, 2.0, 4.0):
            result = ap_characteristic(w, p)
            assert result.value == 1.0
            assert not result.divergent

    def test_power_weight_thresholds(self, power_weight):
        assert ap_characteristic(power_weight, 1.0).divergent
        assert ap_characteristic(power_weight, 1.4).divergent
        finite = ap_characteristic(power_weight, 2.0)
        assert not finite.divergent
        assert 1.0 < finite.value < math.inf

    def test_non_integrable_weight(self, grids):
        w = make_power_weight(grids, -1.5, 0.0)
        result = ap_characteristic(w, 4.0)
        assert result.divergent
        assert result.to_dict()["value"] is None

    def test_results_are_cached(self, power_weight):
        assert ap_characteristic(power_weight, 3.0) is ap_characteristic(power_weight, 3.0)

    def test_tabulated_constant(self, grids):
        w = make_tabulated_weight(grids, np.full((16, 16), 2.0))
        result = ap_characteristic(w, 2.0)
        assert result.value == pytest.approx(1.0)
        assert not result.divergent

    def test_invalid_p(self, power_weight):
        with pytest.raises(InvalidP):
            ap_characteristic(power_weight, 0.5)

    @pytest.mark.parametrize("p", [1.2, 2.0, 4.0])
    @pytest.mark.parametrize("a", [-1.5, -0.5, 0.0, 0.5, 1.0, 3.0])
    def test_power_weight_classification(self, grids, a, p):
        result = ap_characteristic(make_power_weight(grids, a, a), p)
        in_ap = -1.0 < a < p - 1.0
        assert bool(result.divergent) == (not in_ap)
        if in_ap:
            assert 1.0 - 1e-9 <= result.value < math.inf


class TestCriticalIndex:
    def test_constant(self, grids):
        assert critical_index(make_constant_weight(grids)) == 1.0

    def test_power_weight(self, power_weight):
        # |x|^{1/2} is in A_p exactly for p > 3/2
        q_w = critical_index(power_weight)
        assert 1.5 < q_w <= 1.5 + CRITICAL_INDEX_RESOLUTION + 1e-12

    def test_never_finite(self, grids):
        assert critical_index(make_power_weight(grids, -1.5, 0.0)) == math.inf


class TestNorms:
    def test_weighted_lp_norm(self, grids):
        w = make_constant_weight(grids)
        ones = np.ones((16, 16))
        assert weighted_lp_norm(ones, w, 2.0) == pytest.approx(16.0)
        assert weighted_lp_norm(ones, w, 0.5) == pytest.approx(256.0 ** 2)
        with pytest.raises(InvalidP):
            weighted_lp_norm(ones, w, 0.0)
        with pytest.raises(GridMismatch):
            weighted_lp_norm(np.ones((8, 8)), w, 2.0)

    def test_sequence_norm(self, grids):
        w = make_constant_weight(grids)
        seq = np.stack([np.full((16, 16), 3.0), np.full((16, 16), 4.0)])
        assert sequence_norm(seq, w, 2.0, 2.0) == pytest.approx(5.0 * 16.0)
        assert sequence_norm(seq, w, 2.0, math.inf) == pytest.approx(4.0 * 16.0)


class TestStrongMaximal:
    def test_constant_field(self, grids):
        np.testing.assert_allclose(strong_maximal(np.full((16, 16), 2.5), grids), 2.5)

    def test_dominates_the_field(self, grids):
        rng = np.random.default_rng(2)
        f = rng.standard_normal((16, 16))
        assert np.all(strong_maximal(f, grids) >= np.abs(f) - 1e-12)

    def test_point_mass_decays_like_one_over_area(self, grids):
        f = np.zeros((16, 16))
        f[8, 8] = 1.0
        m = strong_maximal(f, grids)
        assert m[8, 8] == 1.0
        assert m[8, 9] == pytest.approx(0.5)
        assert m[9, 9] == pytest.approx(0.25)

    def test_shape_mismatch(self, grids):
        with pytest.raises(GridMismatch):
            strong_maximal(np.ones((4, 4)), grids)


class TestMaximalChecks:
    def test_smfx_domination(self, grids):
        rng = np.random.default_rng(4)
        f = rng.standard_normal((16, 16))
        doubling = [estimate_doubling(g) for g in grids]
        report = smfx_domination_check(f, grids, [(1.0, 1.0), (2.0, 0.5)], 2.0, 2.0, doubling)
        assert 0 < report.ratio < math.inf
        assert report.samples > 0
        with pytest.raises(ExponentTooSmall):
            smfx_domination_check(f, grids, [(1.0, 1.0)], 0.5, 2.0, doubling)

    def test_fs_maximal(self, grids):
        rng = np.random.default_rng(6)
        fields = rng.standard_normal((3, 16, 16))
        report = fs_maximal_check(fields, make_constant_weight(grids), 2.0, 2.0, q_w=1.0)
        assert report.ratio >= 1.0
        assert report.samples == 3

    def test_fs_maximal_hypotheses(self, grids, power_weight):
        fields = np.ones((1, 16, 16))
        with pytest.raises(InvalidP):
            fs_maximal_check(fields, power_weight, 1.0, 2.0, q_w=1.5)
        with pytest.raises(InvalidP):
            fs_maximal_check(fields, power_weight, 2.0, 1.0, q_w=1.5)
        with pytest.raises(HypothesisViolated):
            fs_maximal_check(fields, power_weight, 1.2, 2.0, q_w=1.5)
