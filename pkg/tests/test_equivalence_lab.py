import math

import numpy as np
import pytest

import equivalence_lab
from equivalence_lab import (
    Corpus,
    FunctionalCache,
    LabSetup,
    default_band,
    generate_corpus,
    hardy_norm,
    hypothesis_record,
    inequality_suite,
    make_functional,
    pointwise_violations,
    ratio_experiment,
    single_mode_field,
    submean_check,
    theorem_suite,
)
from errors import BandLimitExceeded, EmptyCorpus, HypothesisViolated, NonpositiveSigma, ProfileNotAdmissible
from geometry import make_grid
from spectral_models import build_operator
from weights import make_constant_weight, make_power_weight


@pytest.fixture(scope="module")
def corpus(torus_model):
    return generate_corpus(torus_model, torus_model, count=4, seed=3)


@pytest.fixture(scope="module")
def constant_weight(torus_setup):
    return make_constant_weight(torus_setup.grids)


def l2(grid, values):
    return math.sqrt(float(np.sum(np.abs(values) ** 2 * np.outer(grid.quad_weights, grid.quad_weights))))


class TestCorpus:
    def test_labels_cycle_through_families(self, corpus):
        assert [e.label for e in corpus.entries] == [
            "single-modes-000", "band-limited-001", "bumps-002", "mixtures-003"]
        assert corpus.band == (1, 4)
        assert len(corpus) == 4

    def test_entries_are_normalized(self, torus_grid, corpus):
        for entry in corpus.entries:
            assert l2(torus_grid, entry.field) == pytest.approx(1.0)
            assert np.abs(entry.field.sum(axis=0)).max() < 1e-10

    def test_deterministic(self, torus_model, corpus):
        again = generate_corpus(torus_model, torus_model, count=4, seed=3)
        for a, b in zip(corpus.entries, again.entries):
            np.testing.assert_array_equal(a.field, b.field)
        other = generate_corpus(torus_model, torus_model, count=4, seed=4)
        assert not np.allclose(corpus.entries[1].field, other.entries[1].field)

    def test_same_functions_on_a_refined_grid(self, torus_model):
        fine = build_operator(make_grid("line-periodic", 32, period=16.0), "laplacian")
        families = ("single-modes", "band-limited", "mixtures")
        coarse_corpus = generate_corpus(torus_model, torus_model, families, count=3, seed=9, band=(1, 4))
        fine_corpus = generate_corpus(fine, fine, families, count=3, seed=9, band=(1, 4))
        for a, b in zip(coarse_corpus.entries, fine_corpus.entries):
            assert a.label == b.label
            np.testing.assert_allclose(b.field[::2, ::2], a.field, atol=1e-10)

    def test_dense_backend(self, bessel_model):
        result = generate_corpus(bessel_model, bessel_model, ("single-modes", "bumps"), count=2, seed=1)
        assert result.entries[0].field.shape == (32, 32)
        assert default_band(bessel_model, bessel_model) == (1, 8)

    def test_rejections(self, torus_model):
        with pytest.raises(BandLimitExceeded):
            generate_corpus(torus_model, torus_model, count=2, band=(1, 8))
        with pytest.raises(EmptyCorpus):
            generate_corpus(torus_model, torus_model, families=(), count=2)
        with pytest.raises(EmptyCorpus):
            generate_corpus(torus_model, torus_model, count=0)
        with pytest.raises(ValueError):
            generate_corpus(torus_model, torus_model, families=("wavelets",))

    def test_single_mode_field(self, torus_model):
        f = single_mode_field((torus_model, torus_model), 2, 3)
        assert np.iscomplexobj(f)
        np.testing.assert_allclose(np.abs(f), 1.0 / 16.0)


class TestRatios:
    def test_area_and_g_agree_in_l2(self, corpus, torus_setup, constant_weight):
        result = ratio_experiment(corpus, make_functional("area", torus_setup), make_functional("g", torus_setup),
                                  constant_weight, 2.0)
        assert result.c_low == pytest.approx(1.0, rel=1e-10)
        assert result.C_high == pytest.approx(1.0, rel=1e-10)
        assert result.spread == pytest.approx(1.0, rel=1e-9)

    def test_zero_denominators_are_excluded(self, corpus, torus_setup, constant_weight):
        result = ratio_experiment(corpus, make_functional("g", torus_setup), lambda f: np.zeros((16, 16)),
                                  constant_weight, 2.0)
        assert result.excluded == [e.label for e in corpus.entries]
        assert math.isnan(result.c_low)

    def test_threads_keep_entry_order(self, corpus, torus_setup, constant_weight):
        g, area = make_functional("g", torus_setup), make_functional("gstar", torus_setup)
        serial = ratio_experiment(corpus, area, g, constant_weight, 1.0)
        threaded = ratio_experiment(corpus, area, g, constant_weight, 1.0, threads=3)
        assert serial.ratios == threaded.ratios

    def test_rejections(self, torus_setup, constant_weight):
        g = make_functional("g", torus_setup)
        with pytest.raises(EmptyCorpus):
            ratio_experiment(Corpus(seed=0, entries=[]), g, g, constant_weight, 2.0)
        with pytest.raises(ValueError):
            make_functional("lusin", torus_setup)


class TestTheoremSuite:
    def test_reports(self, corpus, torus_setup, constant_weight):
        reports = theorem_suite(corpus, torus_setup, [constant_weight], [1.0, 2.0])
        assert [(r.weight, r.p) for r in reports] == [("constant", 1.0), ("constant", 2.0)]
        l2_report = reports[1]
        assert len(l2_report.pairs) == 6
        assert l2_report.pairs["g/area"].c_low == pytest.approx(1.0, rel=1e-10)
        assert set(l2_report.hardy_norms) == {e.label for e in corpus.entries}
        assert l2_report.hypotheses["lambda_ok"]
        assert l2_report.hypotheses["lambda_prime_ok"]
        assert math.isfinite(l2_report.max_spread)
        assert l2_report.to_dict()["pairs"]["g/gstar"]["ratios"][0][0] == "single-modes-000"

    def test_hypothesis_record_flags_a_hard_weight(self, torus_setup):
        w = make_power_weight(torus_setup.grids, 0.5, 0.5)
        record = hypothesis_record(torus_setup, w, 2.0)
        # q_w is just above 3/2, so λ must exceed 2·q_w/2 ≈ 1.5
        assert record["q_w"] > 1.5
        assert record["lambda_ok"]
        narrow = LabSetup(torus_setup.models, torus_setup.profiles, torus_setup.ladder, lambdas=(1.0, 1.0))
        small = hypothesis_record(narrow, w, 2.0)
        assert not small["lambda_ok"]


class TestInequalities:
    def test_pointwise_checks_hold(self, corpus, torus_setup):
        v = pointwise_violations(torus_setup, corpus.entries[2].field)
        assert v["peetre_below_modulus"] == 0
        assert v["area_above_gstar"] == 0
        assert v["area_above_peetre"] == 0
        assert 0 < v["area_over_peetre_max"] <= 1.0

    def test_suite(self, corpus, torus_setup, constant_weight):
        results = inequality_suite(corpus, torus_setup, constant_weight, 2.0)
        assert set(results) == {
            "gstar_by_area", "peetre_generator_change", "peetre_generator_change_converse", "peetre_by_g",
            "shifted_peetre_by_gstar", "area_by_peetre_pointwise", "pointwise_chain"}
        assert results["area_by_peetre_pointwise"].status == "pass"
        assert results["area_by_peetre_pointwise"].constant == 2.0 ** 6
        assert results["pointwise_chain"].violations == 0
        # same profile on both sides: the generator change is the identity
        assert results["peetre_generator_change"].max_ratio == pytest.approx(1.0)
        assert all(r.status == "pass" for r in results.values())

    def test_shared_cache_gives_the_same_results(self, corpus, torus_setup, constant_weight):
        fresh = inequality_suite(corpus, torus_setup, constant_weight, 1.0)
        cache = FunctionalCache(torus_setup)
        theorem_suite(corpus, torus_setup, [constant_weight], [2.0], cache=cache)
        filled = len(cache)
        shared = inequality_suite(corpus, torus_setup, constant_weight, 1.0, cache=cache)
        for name, result in fresh.items():
            assert shared[name].ratios == result.ratios
            assert shared[name].violations == result.violations

        # a second (weight, p) reads every field from the cache
        grown = len(cache)
        assert grown > filled
        inequality_suite(corpus, torus_setup, make_power_weight(torus_setup.grids, 0.5, 0.5), 2.0, cache=cache)
        assert len(cache) == grown

    def test_cache_computes_each_field_once(self, corpus, torus_setup, monkeypatch):
        calls = []
        real = equivalence_lab._functional

        def counting(sf, kind, lambdas=()):
            calls.append(kind)
            return real(sf, kind, lambdas)

        monkeypatch.setattr(equivalence_lab, "_functional", counting)
        cache = FunctionalCache(torus_setup)
        entry = corpus.entries[0]
        wanted = {"g": ("g", (), None), "gstar": ("gstar", (3.0, 3.0), None)}
        first = cache.fields(entry, wanted)
        again = cache.fields(entry, {"g2": ("g", (), None)})
        assert calls == ["g", "gstar"]
        assert again["g2"] is first["g"]

    def test_pointwise_pass_seeds_the_cache(self, corpus, torus_setup):
        cache = FunctionalCache(torus_setup)
        entry = corpus.entries[1]
        counts = cache.pointwise(entry)
        assert counts == pointwise_violations(torus_setup, entry.field)
        assert len(cache) == 3
        cache.fields(entry, {"pv": ("pv", torus_setup.lambdas, None), "area": ("area", (), None)})
        assert len(cache) == 3


class TestStability:
    """Pairwise spreads stay bounded and settle under grid doubling."""

    FAMILIES = ("single-modes", "band-limited", "mixtures")

    @pytest.fixture(scope="class")
    def reports(self, lp_heat, small_ladder):
        out = []
        for size in (16, 32):
            model = build_operator(make_grid("line-periodic", size, period=16.0), "laplacian")
            setup = LabSetup((model, model), (lp_heat, lp_heat), small_ladder)
            corpus = generate_corpus(model, model, self.FAMILIES, count=6, seed=21, band=(1, 4))
            weights = [make_constant_weight(setup.grids), make_power_weight(setup.grids, 0.5, 0.5)]
            out.append(theorem_suite(corpus, setup, weights, [0.5, 1.0, 2.0]))
        return out

    def test_spreads_are_bounded(self, reports):
        for report in reports[0] + reports[1]:
            for pair, stats in report.pairs.items():
                assert stats.spread < 10.0, (report.weight, report.p, pair)

    def test_spreads_settle_under_refinement(self, reports):
        coarse, fine = reports
        for a, b in zip(coarse, fine):
            assert (a.weight, a.p) == (b.weight, b.p)
            for pair in a.pairs:
                assert abs(b.pairs[pair].spread / a.pairs[pair].spread - 1.0) < 0.2, (a.weight, a.p, pair)


class TestSubmean:
    def test_constant_is_finite(self, corpus, torus_setup):
        report = submean_check(torus_setup.models, torus_setup.profiles, corpus.entries[1].field, 1.0, 1.0,
                               (3.0, 3.0), torus_setup.ladder, j_pairs=[(0, 0), (1, 2)], n_points=4)
        assert 0 < report.constant < math.inf
        assert report.samples == 2 * 4 * 16
        assert report.tail_fraction >= 0

    def test_hypotheses(self, corpus, torus_setup):
        args = (torus_setup.models, torus_setup.profiles, corpus.entries[0].field)
        with pytest.raises(HypothesisViolated):
            submean_check(*args, 0.0, 1.0, (3.0, 3.0), torus_setup.ladder)
        with pytest.raises(NonpositiveSigma):
            submean_check(*args, 1.0, 0.0, (3.0, 3.0), torus_setup.ladder)
        with pytest.raises(HypothesisViolated):
            submean_check(*args, 1.0, 1.0, (0.0, 3.0), torus_setup.ladder)


class TestHardyNorm:
    def test_lp_heat(self, corpus, torus_setup, constant_weight):
        # unit-L² input: ‖S f‖₂ = ‖g f‖₂ = (1/8)‖f‖₂
        value = hardy_norm(corpus.entries[1].field, torus_setup, constant_weight, 2.0)
        assert value == pytest.approx(1.0 / 8.0, rel=1e-2)

    def test_heat_is_not_admissible(self, corpus, torus_setup, constant_weight, heat):
        with pytest.raises(ProfileNotAdmissible):
            hardy_norm(corpus.entries[0].field, torus_setup, constant_weight, 2.0, profiles=(heat, heat))
