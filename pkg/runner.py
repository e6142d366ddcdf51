"""Experiment orchestration: config -> lab objects -> suites -> RunReport.

Each suite runs in isolation: an exception is logged with its traceback and
recorded as an ``error`` suite, and the remaining suites still run.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from config import (
    DRIFT_LIMIT,
    G_IDENTITY_TOL,
    GSTAR_IDENTITY_TOL,
    PARTITION_TOL,
    S_IDENTITY_TOL,
    SPREAD_LIMIT,
)
from equivalence_lab import (
    FunctionalCache,
    LabSetup,
    generate_corpus,
    hardy_norm,
    inequality_suite,
    submean_check,
    theorem_suite,
)
from errors import ConfigInvalid
from experiment import ExperimentConfig, load_config
from geometry import decay_integral_check, estimate_doubling, make_grid
from multipliers import build_calderon, make_profile, partition_residual, profile_square_integral, reconstruct
from reports import CheckResult, RunReport, SuiteResult, write_report
from spectral_models import build_operator, decay_check, gaussian_bound_fit, multiplier_symbols
from squarefns import (
    area_function,
    g_function,
    gstar_function,
    ladder_tail_energy,
    make_ladder,
    ry_bound,
    ry_convolve,
)
from utils import finite_or_none, relative_drift
from weights import (
    ap_characteristic,
    critical_index,
    fs_maximal_check,
    make_constant_weight,
    make_weight,
    sequence_norm,
    smfx_domination_check,
    weighted_lp_norm,
)

logger = logging.getLogger(__name__)

DECAY_SCALES = (0.5, 1.0, 2.0)
PARTITION_SAMPLES = np.geomspace(1e-3, 1e3, 241)
RECONSTRUCTION_TOL = 1e-6
SUBMEAN_ENTRIES = 3


@dataclass
class LabContext:
    config: ExperimentConfig
    models: tuple
    profiles: tuple
    comparison: tuple | None
    ladder: object
    weights: list
    corpus: object
    setup: LabSetup
    doubling: list
    cache: FunctionalCache
    plot_data: dict = field(default_factory=dict)

    @property
    def grids(self) -> tuple:
        return tuple(m.grid for m in self.models)

    def axis_label(self, i: int) -> str:
        return f"axis{i + 1}:{self.models[i].label}"

    def plot(self, name: str, header: tuple, rows):
        entry = self.plot_data.setdefault(name, (header, []))
        entry[1].extend(rows)


def build_context(cfg: ExperimentConfig, band=None) -> LabContext:
    """Instantiate grids, models, profiles, ladder, weights and corpus for a config."""
    try:
        models = []
        for axis in cfg.axes:
            grid = make_grid(axis.grid_kind, axis.size, period=axis.period, right_endpoint=axis.right_endpoint,
                             bessel_lambda=axis.bessel_lambda, grading=axis.grading)
            models.append(build_operator(grid, axis.model, origin=axis.origin,
                                         schrodinger_lambda=axis.schrodinger_lambda))
        profiles = tuple(make_profile(p.tag, **p.params) for p in cfg.profiles)
        comparison = tuple(make_profile(p.tag, **p.params) for p in cfg.comparison) if cfg.comparison else None
        ladder = make_ladder(cfg.ladder.j_min, cfg.ladder.j_max, cfg.ladder.samples_per_octave)
        grids = tuple(m.grid for m in models)
        weights = [make_weight(grids, w.to_spec()) for w in cfg.weights]
        corpus = generate_corpus(models[0], models[1], families=cfg.corpus.families, count=cfg.corpus.count,
                                 seed=cfg.corpus.seed, band=band or cfg.corpus.band)
    except ValueError as exc:
        raise ConfigInvalid(f"cannot build experiment: {exc}", [("$", f"{type(exc).__name__}: {exc}")]) from exc

    setup = LabSetup(models=tuple(models), profiles=profiles, ladder=ladder, lambdas=cfg.exponents.lambdas,
                     lambda_prime=cfg.exponents.lambda_prime, comparison=comparison, threads=cfg.threads)
    return LabContext(config=cfg, models=tuple(models), profiles=profiles, comparison=comparison, ladder=ladder,
                      weights=weights, corpus=corpus, setup=setup,
                      doubling=[estimate_doubling(g) for g in grids], cache=FunctionalCache(setup))


# ── Suites ────────────────────────────────────────────────

def _finite_status(value) -> str:
    return "pass" if value is not None and math.isfinite(value) else "flag"


def run_decay_suite(ctx: LabContext) -> SuiteResult:
    suite = SuiteResult("decay")
    exps = ctx.config.exponents
    for i, model in enumerate(ctx.models):
        axis = ctx.axis_label(i)
        profile = ctx.profiles[i]
        single = decay_check(model, profile, scale_pairs=list(DECAY_SCALES), exponents=exps.decay_N)
        for N, C in single.constants.items():
            suite.checks.append(CheckResult(f"kernel_decay_N{N:g}", axis, value=C, status=_finite_status(C)))
        details = {"single": single.to_dict()}

        if profile.vanishing_order >= 1:
            composed = decay_check(model, profile, profile, mode="composed")
            fitted = composed.fitted_exponent
            ratio = fitted / composed.expected_exponent if fitted is not None else None
            suite.checks.append(CheckResult("composed_decay", axis, value=fitted, ratio=ratio,
                                            status="pass" if composed.passed else "flag"))
            details["composed"] = composed.to_dict()
            ctx.plot("decay_fits", ("axis", "scale_ratio", "peak"),
                     [(axis, r, peak) for r, peak in composed.samples])

        fit = gaussian_bound_fit(model)
        suite.checks.append(CheckResult("gaussian_bound", axis, value=fit.C, ratio=fit.c, status=_finite_status(fit.C)))
        details["gaussian_bound"] = {"C": fit.C, "c": fit.c, "table": fit.table}

        d = ctx.doubling[i]
        suite.checks.append(CheckResult("doubling_dimension", axis, value=d.n_hat))
        suite.checks.append(CheckResult("translation_exponent", axis, value=d.D_hat))
        details["doubling"] = {"n_hat": d.n_hat, "D_hat": d.D_hat, "tos_constant": d.tos_constant,
                               "sampling_plan": d.sampling_plan}

        x = float(model.grid.points[model.grid.size // 2])
        for N in exps.decay_N:
            if N <= d.n_hat:
                suite.checks.append(CheckResult(f"decay_integral_N{N:g}", axis, status="skip"))
                continue
            di = decay_integral_check(model.grid, x, 1.0, N, n_hat=d.n_hat)
            suite.checks.append(CheckResult(f"decay_integral_N{N:g}", axis, value=di.lhs, ratio=di.bound_ratio,
                                            status=_finite_status(di.bound_ratio)))
        suite.details[axis] = details
    return suite


def _distinct_profiles(ctx: LabContext) -> list:
    seen, out = set(), []
    for profile in ctx.profiles + (ctx.comparison or ()):
        if profile.label not in seen:
            seen.add(profile.label)
            out.append(profile)
    return out


def run_partition_suite(ctx: LabContext) -> SuiteResult:
    suite = SuiteResult("partition")
    model = ctx.models[0]
    f = ctx.corpus.entries[0].field
    for profile in _distinct_profiles(ctx):
        kinds = ["inhomogeneous"] + (["homogeneous"] if profile.vanishing_order >= 1 else [])
        for kind in kinds:
            partition = build_calderon(profile, kind=kind)
            samples = PARTITION_SAMPLES if kind == "homogeneous" else np.concatenate([[0.0], PARTITION_SAMPLES])
            residual = partition_residual(partition, samples)
            entry = f"{profile.label}:{kind}"
            suite.checks.append(CheckResult("partition_residual", entry, value=residual,
                                            status="pass" if residual <= PARTITION_TOL else "flag"))
            rebuilt = reconstruct(model, partition, 1.0, f, axis=0)
            err = float(np.linalg.norm(rebuilt - f) / np.linalg.norm(f))
            suite.checks.append(CheckResult("reconstruction", entry, value=err,
                                            status="pass" if err <= RECONSTRUCTION_TOL else "flag"))
            pointwise = np.abs(partition.identity_sum(samples) - 1.0)
            ctx.plot("partition_residuals", ("profile", "kind", "lambda", "residual"),
                     [(profile.label, kind, lam, res) for lam, res in zip(samples, pointwise)])
            suite.details[entry] = {"epsilon": partition.epsilon, "residual": residual}
    return suite


def _octave_sequence(ctx: LabContext, f) -> np.ndarray:
    """|Φ₁(2^{-j₁}t√L₁)⊗Φ₂(2^{-j₂}t√L₂)f| at one t per octave, indexed (j₁, j₂, x₁, x₂)."""
    sf = ctx.setup.scale_field(f)
    octave = np.arange(0, ctx.ladder.size, ctx.ladder.samples_per_octave)
    return np.stack([np.abs(sf.slab(i1)[octave]) for i1 in octave])


def run_weights_suite(ctx: LabContext) -> SuiteResult:
    suite = SuiteResult("weights")
    exps = ctx.config.exponents
    f = ctx.corpus.entries[0].field
    seq = _octave_sequence(ctx, f)
    diagonal = np.stack([seq[j, j] for j in range(seq.shape[0])])

    for weight in ctx.weights:
        q_w = critical_index(weight)
        suite.checks.append(CheckResult("critical_index", weight.label, value=finite_or_none(q_w),
                                        status=_finite_status(q_w)))
        details = {"describe": weight.describe(), "q_w": finite_or_none(q_w), "ap": {}}
        for p in [p for p in exps.p if p >= 1]:
            ap = ap_characteristic(weight, p)
            entry = f"{weight.label}@p={p:g}"
            suite.checks.append(CheckResult("ap_characteristic", entry, value=finite_or_none(ap.value),
                                            status="flag" if ap.divergent else "pass"))
            details["ap"][f"{p:g}"] = ap.to_dict()

            if p > 1 and p > q_w:
                fs = fs_maximal_check(diagonal, weight, p, 2.0, q_w=q_w)
                suite.checks.append(CheckResult("fs_maximal", entry, value=fs.ratio, status=_finite_status(fs.ratio)))
            else:
                suite.checks.append(CheckResult("fs_maximal", entry, status="skip"))

            # Young's inequality for the two-parameter convolution holds pointwise in x
            h = ry_convolve(seq, exps.sigma, exps.sigma)
            flat = seq.reshape(-1, *seq.shape[2:])
            lhs = sequence_norm(h.reshape(-1, *h.shape[2:]), weight, p, 2.0)
            rhs = ry_bound(exps.sigma, exps.sigma) * sequence_norm(flat, weight, p, 2.0)
            ratio = lhs / rhs if rhs > 0 else 0.0
            suite.checks.append(CheckResult("sequence_convolution", entry, value=lhs, ratio=ratio,
                                            status="fail" if ratio > 1.0 + 1e-9 else "pass"))
        suite.details[weight.label] = details

    N = [d.n_hat + d.D_hat + 1.0 for d in ctx.doubling]
    dom = smfx_domination_check(f, ctx.grids, [(t, t) for t in DECAY_SCALES], N[0], N[1], doubling=ctx.doubling)
    suite.checks.append(CheckResult("strong_maximal_domination", "corpus[0]", value=dom.ratio,
                                    status=_finite_status(dom.ratio)))
    suite.details["strong_maximal_domination"] = {"ratio": dom.ratio, "samples": dom.samples, **dom.details}
    return suite


def _spectral_energy(ctx: LabContext, f) -> np.ndarray:
    """E[t₁, t₂] = ‖Φ₁(t₁√L₁)⊗Φ₂(t₂√L₂)f‖₂² by Parseval."""
    m1, m2 = ctx.models
    coeffs = np.abs(m1.forward(m2.forward(f, axis=1), axis=0)) ** 2
    s1 = np.abs(multiplier_symbols(m1, ctx.profiles[0], ctx.ladder.t)) ** 2
    s2 = np.abs(multiplier_symbols(m2, ctx.profiles[1], ctx.ladder.t)) ** 2
    return s1 @ coeffs @ s2.T


def run_identities_suite(ctx: LabContext) -> SuiteResult:
    suite = SuiteResult("identities")
    unit = make_constant_weight(ctx.grids)
    lw = ctx.ladder.log_weights
    squares = [profile_square_integral(p) for p in ctx.profiles]
    expected_g = math.sqrt(squares[0] * squares[1])
    lines = all(m.grid.periodic for m in ctx.models)
    suite.details["profile_square_integrals"] = squares
    suite.details["ladder_tail_energy"] = [
        ladder_tail_energy(p, ctx.ladder, m.frequencies) for p, m in zip(ctx.profiles, ctx.models)]
    if not lines:
        suite.details["skipped"] = "area and g* identities need line axes"

    if lines:
        # cone and off-cone averages integrate to these per-scale factors on a uniform torus
        lam = ctx.setup.lambdas
        factors = [
            np.array([decay_integral_check(m.grid, 0.0, t, m.grid.dimension * l, n_hat=0.0).bound_ratio
                      for t in ctx.ladder.t])
            for m, l in zip(ctx.models, lam)
        ]

    for entry in ctx.corpus.entries:
        f = entry.field
        sf = ctx.setup.scale_field(f)
        norm_f = weighted_lp_norm(f, unit, 2.0)
        g = weighted_lp_norm(g_function(sf), unit, 2.0)
        if math.isfinite(expected_g):
            ratio = g / (expected_g * norm_f)
            status = "pass" if abs(ratio - 1.0) <= G_IDENTITY_TOL else "flag"
            suite.checks.append(CheckResult("g_identity", entry.label, value=g / norm_f, ratio=ratio, status=status))
        else:
            suite.checks.append(CheckResult("g_identity", entry.label, status="skip"))

        if not lines:
            suite.checks.append(CheckResult("area_identity", entry.label, status="skip"))
            suite.checks.append(CheckResult("gstar_identity", entry.label, status="skip"))
            continue
        S = weighted_lp_norm(area_function(sf), unit, 2.0)
        ratio = S / g if g > 0 else math.nan
        suite.checks.append(CheckResult("area_identity", entry.label, value=S / norm_f, ratio=ratio,
                                        status="pass" if abs(ratio - 1.0) <= S_IDENTITY_TOL else "flag"))

        energy = _spectral_energy(ctx, f) * np.outer(lw, lw)
        expected = math.sqrt(float(np.sum(energy * np.outer(*factors))) / float(np.sum(energy)))
        gstar = weighted_lp_norm(gstar_function(sf, *ctx.setup.lambdas), unit, 2.0)
        ratio = (gstar / g) / expected if g > 0 else math.nan
        suite.checks.append(CheckResult("gstar_identity", entry.label, value=gstar / norm_f, ratio=ratio,
                                        status="pass" if abs(ratio - 1.0) <= GSTAR_IDENTITY_TOL else "flag"))
    return suite


def run_theorem_suite(ctx: LabContext) -> SuiteResult:
    suite = SuiteResult("theorem_suite")
    reports = theorem_suite(ctx.corpus, ctx.setup, ctx.weights, ctx.config.exponents.p,
                           doubling=ctx.doubling, cache=ctx.cache)
    rows = []
    for report in reports:
        tag = f"{report.weight}|p={report.p:g}"
        observational = not (report.hypotheses["lambda_ok"] and report.hypotheses["lambda_prime_ok"])
        for pair, stats in report.pairs.items():
            for label, r in stats.ratios:
                suite.checks.append(CheckResult(pair, f"{label}|{tag}", ratio=r,
                                                status="flag" if observational else "pass"))
                rows.append((report.weight, report.p, pair, label, r))
        spread = report.max_spread
        suite.checks.append(CheckResult("max_spread", tag, value=finite_or_none(spread),
                                        status="pass" if spread < SPREAD_LIMIT else "flag"))
        for label, value in report.hardy_norms.items():
            suite.checks.append(CheckResult("hardy_norm", f"{label}|{tag}", value=value))
        suite.details[tag] = report.to_dict()

    if ctx.comparison and all(p.vanishing_order >= 1 for p in ctx.comparison):
        # Hardy norms under a second admissible generator pair
        weight, p = ctx.weights[0], ctx.config.exponents.p[-1]
        for entry in ctx.corpus.entries:
            a = hardy_norm(entry.field, ctx.setup, weight, p)
            b = hardy_norm(entry.field, ctx.setup, weight, p, profiles=ctx.comparison)
            suite.checks.append(CheckResult("hardy_generator_change", f"{entry.label}|{weight.label}|p={p:g}",
                                            value=a, ratio=a / b if b > 0 else None))
    ctx.plot("ratios", ("weight", "p", "pair", "entry", "ratio"), rows)
    return suite


def run_inequality_suite(ctx: LabContext) -> SuiteResult:
    suite = SuiteResult("inequality_suite")
    for weight in ctx.weights:
        for p in ctx.config.exponents.p:
            tag = f"{weight.label}|p={p:g}"
            results = inequality_suite(ctx.corpus, ctx.setup, weight, p, doubling=ctx.doubling, cache=ctx.cache)
            for name, result in results.items():
                for label, r in result.ratios:
                    suite.checks.append(CheckResult(name, f"{label}|{tag}", ratio=r,
                                                    status="fail" if result.hard and r > 1.0 + 1e-6 else "pass"))
                suite.checks.append(CheckResult(f"{name}_max", tag, value=finite_or_none(result.max_ratio),
                                                status=result.status))
            suite.details[tag] = {name: result.to_dict() for name, result in results.items()}
    return suite


def run_submean_suite(ctx: LabContext) -> SuiteResult:
    suite = SuiteResult("submean")
    exps = ctx.config.exponents
    for entry in ctx.corpus.entries[:SUBMEAN_ENTRIES]:
        for r in exps.r:
            report = submean_check(ctx.models, ctx.profiles, entry.field, r, exps.sigma, exps.lambdas, ctx.ladder,
                                   j_pairs=exps.j_pairs, doubling=ctx.doubling)
            status = "pass" if math.isfinite(report.constant) and report.within_budget else "flag"
            suite.checks.append(CheckResult(f"submean_r{r:g}", entry.label, value=report.constant,
                                            ratio=report.tail_fraction, status=status))
    return suite


SUITE_RUNNERS = {
    "decay": run_decay_suite,
    "partition": run_partition_suite,
    "weights": run_weights_suite,
    "identities": run_identities_suite,
    "theorem_suite": run_theorem_suite,
    "inequality_suite": run_inequality_suite,
    "submean": run_submean_suite,
}


def run_suites(ctx: LabContext) -> tuple[dict, dict]:
    """Every enabled suite in config order; returns (results, seconds per suite)."""
    results, timing = {}, {}
    for name in ctx.config.checks:
        start = time.perf_counter()
        try:
            results[name] = SUITE_RUNNERS[name](ctx)
        except Exception as exc:
            logger.exception("Suite %s failed", name)
            results[name] = SuiteResult(name, error=f"{type(exc).__name__}: {exc}")
        timing[name] = time.perf_counter() - start
        logger.info("Suite %s finished in %.2fs: %s", name, timing[name], results[name].status)
    return results, timing


def apply_drift(base: dict, refined: dict):
    """Attach refinement drift to every check present in both runs; large drift flags a pass."""
    lookup = {}
    for name, suite in refined.items():
        for c in suite.checks:
            lookup[(name, c.check, c.entry)] = c
    for name, suite in base.items():
        for c in suite.checks:
            other = lookup.get((name, c.check, c.entry))
            if other is None:
                continue
            a = c.value if c.value is not None else c.ratio
            b = other.value if other.value is not None else other.ratio
            if a is None or b is None or not (math.isfinite(a) and math.isfinite(b)):
                continue
            c.drift = relative_drift(a, b)
            if c.drift > DRIFT_LIMIT and c.status == "pass":
                c.status = "flag"


def run_experiment(config, out_dir=None, formats=None, threads=None, seed=None, p=None,
                   write: bool = True) -> tuple[RunReport, list[Path]]:
    """Load (if needed), run and write one experiment. Returns the report and the files written."""
    if isinstance(config, ExperimentConfig):
        cfg = config.with_overrides(seed=seed, threads=threads, out_dir=out_dir, formats=formats, p=p)
    else:
        cfg = load_config(config, seed=seed, threads=threads, out_dir=out_dir, formats=formats, p=p)

    started = time.perf_counter()
    ctx = build_context(cfg)
    suites, timing = run_suites(ctx)

    if cfg.refinement.enabled:
        logger.info("Refinement pass: grid sizes x%d", cfg.refinement.factor)
        fine = build_context(cfg.refined(), band=ctx.corpus.band)
        refined, fine_timing = run_suites(fine)
        apply_drift(suites, refined)
        timing["refinement"] = fine_timing

    timing["total"] = time.perf_counter() - started
    timing["threads"] = cfg.threads
    fields = {}
    if "plot" in cfg.output.formats:
        first = ctx.corpus.entries[0]
        fields = {"corpus0": first.field, "corpus0_g": g_function(ctx.setup.scale_field(first.field))}
    report = RunReport(config=cfg.to_dict(), seed=cfg.corpus.seed, suites=suites,
                       plot_data=ctx.plot_data, fields=fields, timing=timing)
    paths = write_report(report, cfg.output.dir, cfg.output.formats) if write else []
    if report.hard_failures:
        logger.error("Hard failures in: %s", ", ".join(report.hard_failures))
    return report, paths
