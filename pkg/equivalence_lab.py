"""Empirical norm-equivalence experiments over function corpora.

Each corpus entry is pushed through the four functionals (g, area S, g*,
vertical Peetre norm) once; every (weight, p) combination then only costs a
few weighted norms. Constants are empirical: min/max ratios over the corpus.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from config import POINTWISE_SLACK, SPREAD_LIMIT, SUBMEAN_J_PAIRS, SUBMEAN_T_SAMPLES, SUBMEAN_X_POINTS, TAIL_ENERGY_BUDGET
from errors import BandLimitExceeded, EmptyCorpus, HypothesisViolated, NonpositiveSigma, ProfileNotAdmissible
from geometry import cell_ball_mass, cell_distances, cell_integrals, decay_primitive, estimate_doubling
from multipliers import validate_class_A
from spectral_models import SpectralModel, multiplier_symbols, project_mean_zero
from squarefns import (
    ScaleLadder,
    area_function,
    g_function,
    gstar_function,
    multiplier_field,
    peetre_field,
    vertical_peetre_norm,
)
from weights import ProductWeight, critical_index, weighted_lp_norm

logger = logging.getLogger(__name__)

CORPUS_FAMILIES = ("single-modes", "band-limited", "bumps", "mixtures")
FUNCTIONALS = ("g", "area", "gstar", "peetre_vertical")


@dataclass(frozen=True)
class CorpusEntry:
    label: str
    family: str
    field: np.ndarray


@dataclass(frozen=True)
class Corpus:
    seed: int
    entries: list
    band: tuple = ()

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class LabSetup:
    """Everything a functional needs besides the input field."""
    models: tuple
    profiles: tuple
    ladder: ScaleLadder
    lambdas: tuple = (3.0, 3.0)
    lambda_prime: tuple = (3.0, 3.0)
    comparison: tuple | None = None
    threads: int = 1

    @property
    def grids(self) -> tuple:
        return self.models[0].grid, self.models[1].grid

    def scale_field(self, f, profiles=None):
        p1, p2 = profiles or self.profiles
        return multiplier_field(self.models[0], self.models[1], p1, p2, self.ladder, f, threads=self.threads)


@dataclass(frozen=True)
class RatioResult:
    c_low: float
    C_high: float
    ratios: list
    excluded: list = field(default_factory=list)

    @property
    def spread(self) -> float:
        return self.C_high / self.c_low if self.c_low > 0 else math.inf

    def to_dict(self) -> dict:
        return {
            "c_low": self.c_low,
            "C_high": self.C_high,
            "spread": self.spread if math.isfinite(self.spread) else None,
            "ratios": [[label, r] for label, r in self.ratios],
            "excluded": list(self.excluded),
        }


@dataclass
class EquivalenceReport:
    weight: str
    p: float
    norms: dict
    pairs: dict
    hypotheses: dict
    hardy_norms: dict
    excluded: list = field(default_factory=list)
    drift: dict = field(default_factory=dict)

    @property
    def max_spread(self) -> float:
        return max((r.spread for r in self.pairs.values()), default=1.0)

    def to_dict(self) -> dict:
        return {
            "weight": self.weight,
            "p": self.p,
            "norms": self.norms,
            "pairs": {k: v.to_dict() for k, v in self.pairs.items()},
            "max_spread": self.max_spread if math.isfinite(self.max_spread) else None,
            "hypotheses": self.hypotheses,
            "hardy_norms": self.hardy_norms,
            "excluded": list(self.excluded),
            "drift": dict(self.drift),
        }


@dataclass(frozen=True)
class InequalityResult:
    name: str
    max_ratio: float
    ratios: list
    constant: float | None = None
    violations: int = 0
    hard: bool = False

    @property
    def status(self) -> str:
        if self.hard and self.violations:
            return "fail"
        return "pass" if math.isfinite(self.max_ratio) else "flag"

    def to_dict(self) -> dict:
        return {
            "max_ratio": self.max_ratio if math.isfinite(self.max_ratio) else None,
            "constant": self.constant,
            "violations": self.violations,
            "hard": self.hard,
            "status": self.status,
            "ratios": [[label, r] for label, r in self.ratios],
        }


@dataclass(frozen=True)
class SubmeanReport:
    constant: float
    r: float
    sigma: float
    samples: int
    tail_fraction: float
    within_budget: bool


# ── Corpus ────────────────────────────────────────────────

def _band_indices(model: SpectralModel, band: tuple) -> np.ndarray:
    """Spectral indices inside the band, ordered by signed frequency.

    The order and count depend only on the band, so the same seed draws the
    same function on a refined grid.
    """
    lo, hi = band
    n = model.grid.size
    if hi >= n // 2:
        if model.backend == "fourier-torus":
            raise BandLimitExceeded(f"band |k| <= {hi} exceeds the torus Nyquist index {n // 2 - 1}")
        raise BandLimitExceeded(f"band up to mode {hi} exceeds the resolvable half of {n} eigenmodes")
    ks = np.arange(lo, hi + 1)
    if model.backend == "fourier-torus":
        return np.concatenate([ks, n - ks])
    return ks


def _synthesize(model: SpectralModel, indices: np.ndarray, values) -> np.ndarray:
    c = np.zeros(model.grid.size, dtype=complex if model.backend == "fourier-torus" else float)
    c[indices] = values
    return model.inverse(c)


def _random_band_1d(model: SpectralModel, indices: np.ndarray, rng) -> np.ndarray:
    values = rng.standard_normal(len(indices))
    if model.backend == "fourier-torus":
        values = values + 1j * rng.standard_normal(len(indices))
        return np.real(_synthesize(model, indices, values))
    return _synthesize(model, indices, values)


def _bump_1d(model: SpectralModel, indices: np.ndarray, rng) -> np.ndarray:
    """Band-projected lp-heat kernel centred at a random point of the middle half."""
    grid = model.grid
    lo, hi = grid.points[0], grid.points[-1]
    centre = int(np.argmin(np.abs(grid.points - (lo + rng.uniform(0.25, 0.75) * (hi - lo)))))
    scale = float(rng.uniform(0.5, 1.5))
    delta = np.zeros(grid.size)
    delta[centre] = 1.0 / grid.quad_weights[centre]
    mask = np.zeros(grid.size)
    mask[indices] = 1.0
    u = scale * model.frequencies
    return np.real(model.apply_symbol(mask * u ** 2 * np.exp(-u ** 2), delta))


def _normalize(f, models) -> np.ndarray:
    f = project_mean_zero(f, models)
    g1, g2 = models[0].grid, models[1].grid
    norm = math.sqrt(float(np.sum(np.abs(f) ** 2 * np.outer(g1.quad_weights, g2.quad_weights))))
    return f / norm if norm > 0 else f


def default_band(model1: SpectralModel, model2: SpectralModel) -> tuple:
    return 1, max(1, min(model1.grid.size, model2.grid.size) // 4)


def generate_corpus(model1: SpectralModel, model2: SpectralModel, families=CORPUS_FAMILIES,
                    count: int = 20, seed: int = 0, band: tuple | None = None) -> Corpus:
    """Deterministic corpus of mean-zero, unit-L² fields band-limited to ``band``.

    ``band`` is an inclusive (lo, hi) mode-index range; the default is
    (1, N//4) for the smaller grid. On the torus, index k covers both ±k.
    """
    unknown = [f for f in families if f not in CORPUS_FAMILIES]
    if unknown:
        raise ValueError(f"unknown corpus families {unknown}; expected some of {CORPUS_FAMILIES}")
    if not families or count < 1:
        raise EmptyCorpus("corpus needs at least one family and one entry")
    models = (model1, model2)
    band = tuple(band or default_band(model1, model2))
    indices = [_band_indices(m, band) for m in models]
    lo, hi = band
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(count):
        family = families[i % len(families)]
        if family == "single-modes":
            parts = []
            for model, k in zip(models, rng.integers(lo, hi + 1, size=2)):
                flip = rng.random() < 0.5
                index = model.grid.size - k if flip and model.backend == "fourier-torus" else k
                parts.append(_synthesize(model, np.array([index]), 1.0))
            f = np.outer(*parts)
        elif family == "band-limited":
            shape = (len(indices[0]), len(indices[1]))
            values = rng.standard_normal(shape)
            if "fourier-torus" in (model1.backend, model2.backend):
                values = values + 1j * rng.standard_normal(shape)
            coeffs = np.zeros((model1.grid.size, model2.grid.size), dtype=values.dtype)
            coeffs[np.ix_(indices[0], indices[1])] = values
            f = np.real(model1.inverse(model2.inverse(coeffs, axis=1), axis=0))
        elif family == "bumps":
            f = np.outer(*(_bump_1d(m, idx, rng) for m, idx in zip(models, indices)))
        else:
            terms = int(rng.integers(3, 6))
            f = sum(
                np.cos(rng.uniform(0, 2 * np.pi))
                * np.outer(_random_band_1d(model1, indices[0], rng), _random_band_1d(model2, indices[1], rng))
                for _ in range(terms)
            )
        entries.append(CorpusEntry(label=f"{family}-{i:03d}", family=family, field=_normalize(f, models)))
    logger.info("Generated corpus of %d entries (seed=%d)", len(entries), seed)
    return Corpus(seed=seed, entries=entries, band=band)


# ── Functionals ───────────────────────────────────────────

def _functional(sf, kind: str, lambdas=()) -> np.ndarray:
    if kind == "g":
        return g_function(sf)
    if kind == "area":
        return area_function(sf)
    if kind == "gstar":
        return gstar_function(sf, *lambdas)
    return vertical_peetre_norm(peetre_field(sf, *lambdas))


def _profile_key(profiles) -> tuple:
    return tuple(id(p) for p in profiles)


class FunctionalCache:
    """Functional fields per corpus entry, computed once and shared by every (weight, p).

    A field depends only on the entry, the generator pair and the exponents,
    so the theorem and inequality suites read the same arrays. Keys hold the
    entry label and the profile objects; one cache serves one corpus and setup.
    """

    def __init__(self, setup: LabSetup):
        self.setup = setup
        self._fields = {}
        self._pointwise = {}

    def _key(self, label: str, kind: str, lambdas, profiles) -> tuple:
        return label, kind, tuple(float(v) for v in lambdas), _profile_key(profiles or self.setup.profiles)

    def fields(self, entry: CorpusEntry, wanted: dict) -> dict:
        """wanted maps a name to (kind, lambdas, profiles or None)."""
        out, fields_by_pair = {}, {}
        for name, (kind, lambdas, profiles) in wanted.items():
            key = self._key(entry.label, kind, lambdas if kind in ("gstar", "pv") else (), profiles)
            if key not in self._fields:
                pair = key[3]
                if pair not in fields_by_pair:
                    fields_by_pair[pair] = self.setup.scale_field(entry.field, profiles)
                self._fields[key] = _functional(fields_by_pair[pair], kind, key[2])
            out[name] = self._fields[key]
        return out

    def pointwise(self, entry: CorpusEntry) -> dict:
        if entry.label not in self._pointwise:
            counts, fields = _pointwise_pass(self.setup, self.setup.scale_field(entry.field))
            l1, l2 = self.setup.lambdas
            for kind, lambdas in (("area", ()), ("gstar", (l1, l2)), ("pv", (l1, l2))):
                self._fields.setdefault(self._key(entry.label, kind, lambdas, None), fields[kind])
            self._pointwise[entry.label] = counts
        return self._pointwise[entry.label]

    def __len__(self) -> int:
        return len(self._fields)


def make_functional(kind: str, setup: LabSetup, profiles=None, lambdas=None):
    """Callable f -> functional field for ratio experiments."""
    if kind not in FUNCTIONALS:
        raise ValueError(f"unknown functional {kind!r}; expected one of {FUNCTIONALS}")
    if kind == "peetre_vertical":
        kind, lambdas = "pv", lambdas or setup.lambda_prime
    elif kind == "gstar":
        lambdas = lambdas or setup.lambdas

    def functional(f):
        return _functional(setup.scale_field(f, profiles), kind, lambdas or ())

    return functional


def _ratio_stats(pairs: list[tuple[str, float, float]]) -> RatioResult:
    ratios, excluded = [], []
    for label, a, b in pairs:
        if b <= 0 or not math.isfinite(a) or not math.isfinite(b):
            excluded.append(label)
            continue
        ratios.append((label, a / b))
    if not ratios:
        return RatioResult(c_low=math.nan, C_high=math.nan, ratios=[], excluded=excluded)
    values = [r for _, r in ratios]
    return RatioResult(c_low=min(values), C_high=max(values), ratios=ratios, excluded=excluded)


def ratio_experiment(corpus: Corpus, functional_a, functional_b, weight: ProductWeight, p: float,
                     threads: int = 1) -> RatioResult:
    """‖A(f)‖_{L^p_w} / ‖B(f)‖_{L^p_w} across the corpus."""
    if not corpus.entries:
        raise EmptyCorpus("ratio experiment needs a non-empty corpus")

    def one(entry):
        a = weighted_lp_norm(functional_a(entry.field), weight, p)
        b = weighted_lp_norm(functional_b(entry.field), weight, p)
        return entry.label, a, b

    result = _ratio_stats(_map_entries(one, corpus.entries, threads))
    if result.excluded:
        logger.warning("Excluded %d zero-norm entries from ratio experiment", len(result.excluded))
    return result


def _map_entries(fn, entries, threads: int) -> list:
    if threads <= 1:
        return [fn(e) for e in entries]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, entries))


# ── Theorem suite ─────────────────────────────────────────

def hypothesis_record(setup: LabSetup, weight: ProductWeight, p: float, doubling=None) -> dict:
    doubling = doubling or [estimate_doubling(g) for g in setup.grids]
    q_w = critical_index(weight)
    base = min(p, 2.0)
    lambda_bound = 2.0 * q_w / base
    prime_bounds = [(d.n_hat + d.D_hat) * q_w / base for d in doubling]
    record = {
        "p": p,
        "weight": weight.label,
        "q_w": q_w if math.isfinite(q_w) else None,
        "n_hat": [d.n_hat for d in doubling],
        "D_hat": [d.D_hat for d in doubling],
        "lambda": list(setup.lambdas),
        "lambda_bound": lambda_bound if math.isfinite(lambda_bound) else None,
        "lambda_prime": list(setup.lambda_prime),
        "lambda_prime_bound": [b if math.isfinite(b) else None for b in prime_bounds],
        "profiles": [getattr(pr, "label", "custom") for pr in setup.profiles],
    }
    record["lambda_ok"] = all(lam > lambda_bound for lam in setup.lambdas)
    record["lambda_prime_ok"] = all(lam > b for lam, b in zip(setup.lambda_prime, prime_bounds))
    if not (record["lambda_ok"] and record["lambda_prime_ok"]):
        logger.warning("Hypotheses violated for weight=%s p=%g; results are observational", weight.label, p)
    return record


def theorem_suite(corpus: Corpus, setup: LabSetup, weights, p_set, doubling=None,
                  cache: FunctionalCache | None = None) -> list[EquivalenceReport]:
    """The four equivalent (quasi-)norms for every (weight, p), with pairwise ratio statistics."""
    if not corpus.entries:
        raise EmptyCorpus("theorem suite needs a non-empty corpus")
    doubling = doubling or [estimate_doubling(g) for g in setup.grids]
    cache = FunctionalCache(setup) if cache is None else cache
    wanted = {"g": ("g", (), None), "area": ("area", (), None), "gstar": ("gstar", setup.lambdas, None),
              "peetre_vertical": ("pv", setup.lambda_prime, None)}
    fields = _map_entries(lambda e: cache.fields(e, wanted), corpus.entries, setup.threads)

    reports = []
    for weight in weights:
        for p in p_set:
            norms = {
                e.label: {name: weighted_lp_norm(fs[name], weight, p) for name in FUNCTIONALS}
                for e, fs in zip(corpus.entries, fields)
            }
            pairs = {}
            excluded = set()
            for i, a in enumerate(FUNCTIONALS):
                for b in FUNCTIONALS[i + 1:]:
                    stats = _ratio_stats([(label, n[a], n[b]) for label, n in norms.items()])
                    excluded.update(stats.excluded)
                    pairs[f"{a}/{b}"] = stats
            reports.append(EquivalenceReport(
                weight=weight.label,
                p=float(p),
                norms=norms,
                pairs=pairs,
                hypotheses=hypothesis_record(setup, weight, p, doubling),
                hardy_norms={label: n["area"] for label, n in norms.items()},
                excluded=sorted(excluded),
            ))
            spread = reports[-1].max_spread
            if spread >= SPREAD_LIMIT:
                logger.warning("Ratio spread %.2f >= %.0f for weight=%s p=%g", spread, SPREAD_LIMIT, weight.label, p)
    return reports


# ── Inequality suite ──────────────────────────────────────

def _pointwise_pass(setup: LabSetup, sf) -> tuple[dict, dict]:
    """Violation counts plus the area, g* and vertical Peetre fields they were read from."""
    l1, l2 = setup.lambdas
    n1, n2 = (g.dimension for g in setup.grids)
    peetre = peetre_field(sf, l1, l2).materialize()

    below = 0
    for i1 in range(sf.shape[0]):
        v = np.abs(sf.slab(i1))
        below += int(np.count_nonzero(peetre.slab(i1) < v - POINTWISE_SLACK * (1.0 + v)))

    S = area_function(sf)
    gstar = gstar_function(sf, l1, l2)
    pv = vertical_peetre_norm(peetre)
    c_gstar = 2.0 ** ((n1 * l1 + n2 * l2) / 2.0)
    c_peetre = 2.0 ** (l1 + l2)
    slack = POINTWISE_SLACK * (1.0 + np.abs(S))
    counts = {
        "peetre_below_modulus": below,
        "area_above_gstar": int(np.count_nonzero(S > c_gstar * gstar + slack)),
        "area_above_peetre": int(np.count_nonzero(S > c_peetre * pv + slack)),
        "area_over_peetre_max": float(np.max(S / np.maximum(c_peetre * pv, 1e-300))),
    }
    return counts, {"area": S, "gstar": gstar, "pv": pv}


def pointwise_violations(setup: LabSetup, f) -> dict:
    """Exact grid statements: Peetre ≥ |v|, S ≤ 2^{Σnλ/2}·g*, S ≤ 2^{λ₁+λ₂}·vertical Peetre."""
    return _pointwise_pass(setup, setup.scale_field(f))[0]


def inequality_suite(corpus: Corpus, setup: LabSetup, weight: ProductWeight, p: float, doubling=None,
                     cache: FunctionalCache | None = None) -> dict:
    """Empirical constants for the five comparison inequalities, plus exact pointwise checks."""
    if not corpus.entries:
        raise EmptyCorpus("inequality suite needs a non-empty corpus")
    l1, l2 = setup.lambdas
    doubling = doubling or [estimate_doubling(g) for g in setup.grids]
    D = [d.D_hat for d in doubling]
    n = [g.dimension for g in setup.grids]
    cache = FunctionalCache(setup) if cache is None else cache
    wanted = {
        "g": ("g", (), None),
        "area": ("area", (), None),
        "gstar": ("gstar", (l1, l2), None),
        "pv": ("pv", (l1, l2), None),
        "pv_tilde": ("pv", (l1, l2), setup.comparison),
        "pv_prime": ("pv", setup.lambda_prime, None),
        "pv_shifted": ("pv", (l1 + D[0] / 2.0, l2 + D[1] / 2.0), None),
        "gstar_rescaled": ("gstar", (2.0 * l1 / n[0], 2.0 * l2 / n[1]), None),
    }

    def one(entry):
        counts = cache.pointwise(entry)
        fields = cache.fields(entry, wanted)
        return entry.label, {name: weighted_lp_norm(v, weight, p) for name, v in fields.items()}, counts

    rows = _map_entries(one, corpus.entries, setup.threads)

    def stat(name, num, den, constant=None):
        r = _ratio_stats([(label, nm[num], nm[den]) for label, nm, _ in rows])
        top = r.C_high if r.ratios else math.nan
        return InequalityResult(name=name, max_ratio=top, ratios=r.ratios, constant=constant)

    results = {
        "gstar_by_area": stat("gstar_by_area", "gstar", "area"),
        "peetre_generator_change": stat("peetre_generator_change", "pv_tilde", "pv"),
        "peetre_generator_change_converse": stat("peetre_generator_change_converse", "pv", "pv_tilde"),
        "peetre_by_g": stat("peetre_by_g", "pv_prime", "g"),
        "shifted_peetre_by_gstar": stat("shifted_peetre_by_gstar", "pv_shifted", "gstar_rescaled"),
    }
    violations = sum(v["area_above_peetre"] for _, _, v in rows)
    worst = max(v["area_over_peetre_max"] for _, _, v in rows)
    results["area_by_peetre_pointwise"] = InequalityResult(
        name="area_by_peetre_pointwise", max_ratio=worst,
        ratios=[(label, v["area_over_peetre_max"]) for label, _, v in rows],
        constant=2.0 ** (l1 + l2), violations=violations, hard=True)
    exact = sum(v["peetre_below_modulus"] + v["area_above_gstar"] for _, _, v in rows)
    results["pointwise_chain"] = InequalityResult(
        name="pointwise_chain", max_ratio=float(exact), ratios=[], violations=exact, hard=True)
    if violations or exact:
        logger.error("Pointwise inequality violated: %d area/Peetre, %d chain", violations, exact)
    return results


# ── Sub-mean value check ──────────────────────────────────

def submean_check(models, profiles, f, r: float, sigma: float, lambdas, ladder: ScaleLadder,
                  j_pairs=None, doubling=None, n_points: int = SUBMEAN_X_POINTS,
                  t_samples: int = SUBMEAN_T_SAMPLES) -> SubmeanReport:
    """Smallest C with (Peetre value)^r <= C · (weighted sum of finer-scale L^r averages)."""
    if not r > 0:
        raise HypothesisViolated(f"r must be positive, got {r!r}")
    if not sigma > 0:
        raise NonpositiveSigma(f"sigma must be positive, got {sigma!r}")
    grids = [m.grid for m in models]
    doubling = doubling or [estimate_doubling(g) for g in grids]
    for i, (lam, d) in enumerate(zip(lambdas, doubling), start=1):
        if lam <= d.D_hat / 2.0:
            raise HypothesisViolated(f"axis {i}: lambda={lam} must exceed D/2={d.D_hat / 2.0:.3f}")
    j_pairs = list(j_pairs or SUBMEAN_J_PAIRS)
    s = ladder.samples_per_octave
    inner = 2.0 ** ((np.arange(s) + 0.5) / s)
    t_primes = np.unique(inner[np.unique(np.linspace(0, s - 1, min(t_samples, s)).round().astype(int))])
    picks = [np.unique(np.linspace(0, g.size - 1, n_points).round().astype(int)) for g in grids]
    top = ladder.j_max
    geometric = 2.0 ** -sigma / (1.0 - 2.0 ** -sigma)
    f = np.asarray(f)

    worst, count, tail = 0.0, 0, 0.0
    for j1, j2 in j_pairs:
        k1s, k2s = np.arange(j1, max(top, j1) + 1), np.arange(j2, max(top, j2) + 1)
        for t1 in t_primes:
            for t2 in t_primes:
                sc1, sc2 = 2.0 ** -k1s * t1, 2.0 ** -k2s * t2
                sym1 = multiplier_symbols(models[0], profiles[0], sc1)
                sym2 = multiplier_symbols(models[1], profiles[1], sc2)
                half = models[1].apply_symbol(sym2[:, None, :], f, axis=1)
                coeffs = models[0].forward(half, axis=1)
                v = np.stack([models[0].inverse(sym1[a][None, :, None] * coeffs, axis=1) for a in range(len(k1s))])
                mod = np.abs(v)

                # LHS: Peetre value at the coarsest pair (j1, j2)
                P1 = (1.0 + cell_distances(grids[0], grids[0].points[picks[0]]) / sc1[0]) ** -lambdas[0]
                P2 = (1.0 + cell_distances(grids[1], grids[1].points[picks[1]]) / sc2[0]) ** -lambdas[1]
                base = mod[0, 0]
                lhs = np.max(P1[:, None, :, None] * P2[None, :, None, :] * base[None, None], axis=(2, 3)) ** r

                rhs = np.zeros_like(lhs)
                finest = np.zeros_like(lhs)
                R1s = [_submean_kernel(grids[0], picks[0], s1, lambdas[0] * r) for s1 in sc1]
                R2s = [_submean_kernel(grids[1], picks[1], s2, lambdas[1] * r) for s2 in sc2]
                for a, R1 in enumerate(R1s):
                    for b, R2 in enumerate(R2s):
                        c = 2.0 ** ((j1 - k1s[a]) * sigma) * 2.0 ** ((j2 - k2s[b]) * sigma)
                        term = c * (R1 @ mod[a, b] ** r @ R2.T)
                        rhs += term
                        if (len(sc1) > 1 and a == len(sc1) - 1) or (len(sc2) > 1 and b == len(sc2) - 1):
                            finest += term
                ok = rhs > 0
                if np.any(ok):
                    worst = max(worst, float(np.max(lhs[ok] / rhs[ok])))
                    # geometric remainder beyond the ladder top
                    tail = max(tail, geometric * float(np.max(finest[ok] / rhs[ok])))
                count += lhs.size
    if tail > TAIL_ENERGY_BUDGET:
        logger.warning("Sub-mean k-sum tail carries %.2e of the right side (budget %.0e)", tail, TAIL_ENERGY_BUDGET)
    return SubmeanReport(constant=worst, r=float(r), sigma=float(sigma), samples=count,
                         tail_fraction=tail, within_budget=tail <= TAIL_ENERGY_BUDGET)


def _submean_kernel(grid, idx, s: float, a: float) -> np.ndarray:
    """R[x, z] = density_z · ∫_{cell_z}(1+ρ(x,·)/s)^{-a} / Ṽ(z, s)."""
    mass = cell_integrals(grid, grid.points[idx], decay_primitive(s, a)) * grid.density[None, :]
    return mass / cell_ball_mass(grid, grid.points, s)[None, :]


# ── Hardy norm ────────────────────────────────────────────

def hardy_norm(f, setup: LabSetup, weight: ProductWeight, p: float, profiles=None) -> float:
    """‖S(f)‖_{L^p_w} for admissible profiles (class A with Φ(0) = 0)."""
    profiles = profiles or setup.profiles
    for profile in profiles:
        report = validate_class_A(profile)
        if not report.admissible:
            raise ProfileNotAdmissible(
                f"profile {report.label!r} is not admissible "
                f"(Φ(0)={report.value_at_zero:g}, failures={report.failures})")
    f = project_mean_zero(f, setup.models)
    return weighted_lp_norm(area_function(setup.scale_field(f, profiles)), weight, p)


def single_mode_field(models, k1: int, k2: int) -> np.ndarray:
    """Tensor of the k-th modes: e^{iξx} on the torus, the k-th eigenvector otherwise."""
    parts = []
    for model, k in zip(models, (k1, k2)):
        c = np.zeros(model.grid.size, dtype=complex if model.backend == "fourier-torus" else float)
        c[k] = 1.0
        parts.append(model.inverse(c))
    return np.outer(*parts)
