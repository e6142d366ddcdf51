import math

import numpy as np
import pytest

from errors import NotDecaying, NotEven, ProfileNotAdmissible, TauberianGapUncovered
from multipliers import (
    BUILTIN_PROFILES,
    build_calderon,
    make_profile,
    partition_residual,
    profile_square_integral,
    reconstruct,
    validate_class_A,
)
from spectral_models import project_mean_zero

SAMPLES = np.geomspace(1e-3, 1e3, 241)


class TestMakeProfile:
    def test_builtin_tags(self):
        for tag in BUILTIN_PROFILES:
            profile = make_profile(tag)
            assert profile.tauberian_epsilon is not None
            assert profile(1.3) == pytest.approx(profile(-1.3))

    def test_vanishing_orders(self, heat, lp_heat):
        assert heat.vanishing_order == 0
        assert lp_heat.vanishing_order == 2
        assert make_profile("lp-heat-m", m=2).vanishing_order == 4
        assert make_profile("bump-omega").vanishing_order == 0
        assert make_profile("bump-gamma", eps=1.0).vanishing_order > 6

    def test_labels(self):
        assert make_profile("lp-heat-m", m=3).label == "lp-heat-m(m=3)"
        assert make_profile("bump-gamma", eps=0.5).label == "bump-gamma(eps=0.5)"
        assert make_profile("heat", label="psi").label == "psi"

    def test_custom_evaluator(self):
        profile = make_profile(lambda lam: lam ** 4 * np.exp(-lam ** 2))
        assert profile.label == "custom"
        assert profile.vanishing_order == 4
        assert profile(np.array([0.0, 1.0])).shape == (2,)

    def test_rejections(self):
        with pytest.raises(NotEven):
            make_profile(lambda lam: lam * np.exp(-lam ** 2))
        with pytest.raises(NotDecaying):
            make_profile(lambda lam: np.ones_like(lam))
        with pytest.raises(ValueError):
            make_profile("lp-heat-m", m=0)
        with pytest.raises(ValueError):
            make_profile("bump-omega", eps=-1.0)
        with pytest.raises(ValueError):
            make_profile("mexican-hat")


class TestValidation:
    def test_heat_is_class_a_but_not_admissible(self, heat):
        report = validate_class_A(heat)
        assert report.passed
        assert not report.admissible
        assert report.value_at_zero == 1.0

    def test_lp_heat_is_admissible(self, lp_heat):
        report = validate_class_A(lp_heat)
        assert report.admissible
        assert report.to_dict()["vanishing_order"] == 2

    def test_missing_annulus(self):
        report = validate_class_A(make_profile(lambda lam: np.zeros_like(lam)))
        assert "no Tauberian annulus" in report.failures

    def test_square_integral(self, heat, lp_heat):
        assert profile_square_integral(lp_heat) == pytest.approx(1.0 / 8.0, rel=1e-8)
        assert profile_square_integral(heat) == math.inf


class TestCalderon:
    def test_homogeneous_identity(self, lp_heat):
        partition = build_calderon(lp_heat, "homogeneous")
        assert partition_residual(partition, np.concatenate([[0.0], SAMPLES])) < 1e-12

    def test_inhomogeneous_identity(self, lp_heat):
        partition = build_calderon(lp_heat, "inhomogeneous")
        assert partition_residual(partition, np.concatenate([[0.0], SAMPLES])) < 1e-12
        assert partition.psi.value_at_zero == 1.0

    def test_inhomogeneous_from_heat(self, heat):
        partition = build_calderon(heat, "inhomogeneous")
        assert partition_residual(partition, SAMPLES) < 1e-12

    def test_truncation_leaves_a_residual(self, lp_heat):
        partition = build_calderon(lp_heat, "homogeneous")
        assert partition_residual(partition, SAMPLES, max_terms=2) > 0.1

    def test_tabulated_theta(self, lp_heat):
        partition = build_calderon(lp_heat, "homogeneous", tabulate=True)
        assert partition.interpolation_error is not None
        assert partition_residual(partition, SAMPLES) < 1e-6

    def test_rejections(self, heat, lp_heat):
        with pytest.raises(ProfileNotAdmissible):
            build_calderon(heat, "homogeneous")
        with pytest.raises(TauberianGapUncovered):
            build_calderon(make_profile(lambda lam: np.zeros_like(lam)))
        with pytest.raises(ValueError):
            build_calderon(lp_heat, "dyadic")

    def test_reconstruction(self, torus_model, lp_heat):
        rng = np.random.default_rng(11)
        f = rng.standard_normal(torus_model.grid.size)
        inhom = build_calderon(lp_heat, "inhomogeneous")
        np.testing.assert_allclose(reconstruct(torus_model, inhom, 1.0, f), f, atol=1e-10)
        hom = build_calderon(lp_heat, "homogeneous")
        f0 = project_mean_zero(f, (torus_model,))
        np.testing.assert_allclose(reconstruct(torus_model, hom, 1.0, f0), f0, atol=1e-10)
