"""Experiment configuration: JSON file -> frozen dataclasses.

Every problem found while loading is collected as a (path, message) pair and
raised together in one ``ConfigInvalid``; unknown keys are errors at every
level. Missing sections take the defaults from ``config``.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from config import (
    DEFAULT_J_MAX,
    DEFAULT_J_MIN,
    DEFAULT_P_SET,
    DEFAULT_PERIOD,
    DEFAULT_SAMPLES_PER_OCTAVE,
    DEFAULT_THREADS,
    HALFLINE_GRADING,
    MIN_GRID_SIZE,
    SCHEMA_VERSION,
    SUBMEAN_J_PAIRS,
)
from equivalence_lab import CORPUS_FAMILIES
from errors import ConfigInvalid
from spectral_models import MODEL_TAGS
from utils import REPORT_FORMATS

logger = logging.getLogger(__name__)

SUITES = ("decay", "partition", "weights", "identities", "theorem_suite", "inequality_suite", "submean")
# tabulated weights are library-only
CONFIG_WEIGHT_KINDS = ("constant", "power")


@dataclass(frozen=True)
class AxisConfig:
    model: str = "laplacian"
    size: int = 32
    period: float = DEFAULT_PERIOD
    right_endpoint: float | None = None
    bessel_lambda: float = 0.0
    schrodinger_lambda: float | None = None
    origin: str | None = None
    grading: float = HALFLINE_GRADING

    @property
    def grid_kind(self) -> str:
        return "line-periodic" if self.model == "laplacian" else "halfline"


@dataclass(frozen=True)
class ProfileConfig:
    tag: str = "lp-heat"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LadderConfig:
    j_min: int = DEFAULT_J_MIN
    j_max: int = DEFAULT_J_MAX
    samples_per_octave: int = DEFAULT_SAMPLES_PER_OCTAVE


@dataclass(frozen=True)
class WeightConfig:
    kind: str = "constant"
    a1: float = 0.0
    a2: float = 0.0

    def to_spec(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ExponentsConfig:
    p: tuple = tuple(DEFAULT_P_SET)
    lambdas: tuple = (3.0, 3.0)
    lambda_prime: tuple = (3.0, 3.0)
    decay_N: tuple = (2.0, 4.0)
    r: tuple = (1.0, 2.0)
    sigma: float = 1.0
    j_pairs: tuple = tuple(SUBMEAN_J_PAIRS)


@dataclass(frozen=True)
class CorpusConfig:
    families: tuple = CORPUS_FAMILIES
    count: int = 8
    seed: int = 0
    band: tuple | None = None


@dataclass(frozen=True)
class RefinementConfig:
    enabled: bool = False
    factor: int = 2


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "results"
    formats: tuple = ("json", "csv")


@dataclass(frozen=True)
class ExperimentConfig:
    axes: tuple = (AxisConfig(), AxisConfig())
    profiles: tuple = (ProfileConfig(), ProfileConfig())
    comparison: tuple | None = None
    ladder: LadderConfig = LadderConfig()
    weights: tuple = (WeightConfig(),)
    exponents: ExponentsConfig = ExponentsConfig()
    corpus: CorpusConfig = CorpusConfig()
    checks: tuple = SUITES
    refinement: RefinementConfig = RefinementConfig()
    output: OutputConfig = OutputConfig()
    threads: int = DEFAULT_THREADS
    schema_version: int = SCHEMA_VERSION

    def with_overrides(self, seed: int | None = None, threads: int | None = None,
                       out_dir: str | None = None, formats=None, p=None) -> "ExperimentConfig":
        cfg = self
        if p is not None:
            cfg = replace(cfg, exponents=replace(cfg.exponents, p=tuple(sorted(set(float(v) for v in p)))))
        if seed is not None:
            cfg = replace(cfg, corpus=replace(cfg.corpus, seed=int(seed)))
        if threads is not None:
            cfg = replace(cfg, threads=int(threads))
        if out_dir is not None or formats is not None:
            cfg = replace(cfg, output=replace(cfg.output, dir=str(out_dir or cfg.output.dir),
                                              formats=tuple(formats or cfg.output.formats)))
        return cfg

    def refined(self, factor: int | None = None) -> "ExperimentConfig":
        """Same experiment with every grid size multiplied by ``factor``."""
        factor = factor or self.refinement.factor
        return replace(self, axes=tuple(replace(a, size=a.size * factor) for a in self.axes))

    def to_dict(self) -> dict:
        """Echo for the report; threads and output location do not change numbers."""
        out = asdict(self)
        out.pop("threads")
        out.pop("output")
        return out


# ── Loading ───────────────────────────────────────────────

class _Diagnostics:
    def __init__(self):
        self.items: list[tuple[str, str]] = []

    def add(self, path: str, message: str):
        self.items.append((path, message))


def _section(raw, path: str, allowed, diags: _Diagnostics) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        diags.add(path, f"expected an object, got {type(raw).__name__}")
        return {}
    for key in raw:
        if key not in allowed:
            diags.add(f"{path}.{key}", "unknown key")
    return raw


def _number(raw: dict, key: str, path: str, default, diags: _Diagnostics, integer=False,
            minimum=None, allow_none=False):
    if key not in raw:
        return default
    value = raw[key]
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        diags.add(f"{path}.{key}", f"expected a number, got {value!r}")
        return default
    if integer and int(value) != value:
        diags.add(f"{path}.{key}", f"expected an integer, got {value!r}")
        return default
    if minimum is not None and value < minimum:
        diags.add(f"{path}.{key}", f"must be >= {minimum}, got {value!r}")
        return default
    return int(value) if integer else float(value)


def _choice(raw: dict, key: str, path: str, default, options, diags: _Diagnostics):
    value = raw.get(key, default)
    if value not in options:
        diags.add(f"{path}.{key}", f"expected one of {list(options)}, got {value!r}")
        return default
    return value


def _number_list(raw: dict, key: str, path: str, default, diags: _Diagnostics, length=None, positive=True):
    if key not in raw:
        return default
    value = raw[key]
    if not isinstance(value, list) or not value or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) for v in value):
        diags.add(f"{path}.{key}", f"expected a non-empty list of numbers, got {value!r}")
        return default
    if length is not None and len(value) != length:
        diags.add(f"{path}.{key}", f"expected {length} entries, got {len(value)}")
        return default
    if positive and any(v <= 0 for v in value):
        diags.add(f"{path}.{key}", f"entries must be positive, got {value!r}")
        return default
    return tuple(float(v) for v in value)


def _axis(raw, path: str, diags: _Diagnostics) -> AxisConfig:
    d = AxisConfig()
    raw = _section(raw, path, {f for f in AxisConfig.__dataclass_fields__}, diags)
    model = _choice(raw, "model", path, d.model, MODEL_TAGS, diags)
    axis = AxisConfig(
        model=model,
        size=_number(raw, "size", path, d.size, diags, integer=True, minimum=MIN_GRID_SIZE),
        period=_number(raw, "period", path, d.period, diags),
        right_endpoint=_number(raw, "right_endpoint", path, 8.0 if model != "laplacian" else None, diags,
                               allow_none=True),
        bessel_lambda=_number(raw, "bessel_lambda", path, d.bessel_lambda, diags, minimum=0.0),
        schrodinger_lambda=_number(raw, "schrodinger_lambda", path, None, diags, allow_none=True),
        origin=_choice(raw, "origin", path, None, (None, "dirichlet", "natural"), diags),
        grading=_number(raw, "grading", path, d.grading, diags),
    )
    if model == "bessel-schrodinger" and not (axis.schrodinger_lambda or 0) > 0:
        diags.add(f"{path}.schrodinger_lambda", "bessel-schrodinger needs schrodinger_lambda > 0")
    if model == "laplacian" and raw.get("bessel_lambda"):
        diags.add(f"{path}.bessel_lambda", "only meaningful on halfline models")
    return axis


def _profile(raw, path: str, diags: _Diagnostics) -> ProfileConfig:
    if isinstance(raw, str):
        return ProfileConfig(tag=raw)
    raw = _section(raw, path, {"tag", "params"}, diags)
    params = raw.get("params", {})
    if not isinstance(params, dict):
        diags.add(f"{path}.params", "expected an object")
        params = {}
    return ProfileConfig(tag=raw.get("tag", "lp-heat"), params=dict(params))


def _profile_pair(raw, path: str, diags: _Diagnostics):
    if raw is None:
        return None
    if not isinstance(raw, list) or len(raw) != 2:
        diags.add(path, "expected a list of two profiles")
        return None
    return tuple(_profile(p, f"{path}[{i}]", diags) for i, p in enumerate(raw))


def _weights(raw, path: str, diags: _Diagnostics) -> tuple:
    if raw is None:
        return (WeightConfig(),)
    if not isinstance(raw, list) or not raw:
        diags.add(path, "expected a non-empty list of weights")
        return (WeightConfig(),)
    out = []
    for i, item in enumerate(raw):
        p = f"{path}[{i}]"
        item = _section(item, p, {"kind", "a1", "a2"}, diags)
        out.append(WeightConfig(
            kind=_choice(item, "kind", p, "constant", CONFIG_WEIGHT_KINDS, diags),
            a1=_number(item, "a1", p, 0.0, diags),
            a2=_number(item, "a2", p, 0.0, diags),
        ))
    return tuple(out)


def _exponents(raw, path: str, diags: _Diagnostics) -> ExponentsConfig:
    d = ExponentsConfig()
    raw = _section(raw, path, {"p", "lambda", "lambda_prime", "decay_N", "r", "sigma", "j_pairs"}, diags)
    j_pairs = d.j_pairs
    if "j_pairs" in raw:
        value = raw["j_pairs"]
        ok = isinstance(value, list) and value and all(
            isinstance(pair, list) and len(pair) == 2 and all(isinstance(j, int) and not isinstance(j, bool)
                                                              for j in pair)
            for pair in value)
        if ok:
            j_pairs = tuple(tuple(pair) for pair in value)
        else:
            diags.add(f"{path}.j_pairs", f"expected a list of [j1, j2] integer pairs, got {value!r}")
    return ExponentsConfig(
        p=tuple(sorted(set(_number_list(raw, "p", path, d.p, diags)))),
        lambdas=_number_list(raw, "lambda", path, d.lambdas, diags, length=2),
        lambda_prime=_number_list(raw, "lambda_prime", path, d.lambda_prime, diags, length=2),
        decay_N=_number_list(raw, "decay_N", path, d.decay_N, diags),
        r=_number_list(raw, "r", path, d.r, diags),
        sigma=_number(raw, "sigma", path, d.sigma, diags),
        j_pairs=j_pairs,
    )


def _corpus(raw, path: str, diags: _Diagnostics) -> CorpusConfig:
    d = CorpusConfig()
    raw = _section(raw, path, {"families", "count", "seed", "band"}, diags)
    families = raw.get("families", list(d.families))
    if not isinstance(families, list) or not families or any(f not in CORPUS_FAMILIES for f in families):
        diags.add(f"{path}.families", f"expected a non-empty subset of {list(CORPUS_FAMILIES)}, got {families!r}")
        families = list(d.families)
    band = raw.get("band")
    if band is not None:
        if not (isinstance(band, list) and len(band) == 2 and all(isinstance(b, int) for b in band)
                and 1 <= band[0] <= band[1]):
            diags.add(f"{path}.band", f"expected [lo, hi] with 1 <= lo <= hi, got {band!r}")
            band = None
        else:
            band = tuple(band)
    return CorpusConfig(
        families=tuple(families),
        count=_number(raw, "count", path, d.count, diags, integer=True, minimum=1),
        seed=_number(raw, "seed", path, d.seed, diags, integer=True, minimum=0),
        band=band,
    )


def _checks(raw, path: str, diags: _Diagnostics) -> tuple:
    if raw is None:
        return SUITES
    raw = _section(raw, path, set(SUITES), diags)
    enabled = []
    for name in SUITES:
        value = raw.get(name, False)
        if not isinstance(value, bool):
            diags.add(f"{path}.{name}", f"expected true/false, got {value!r}")
        elif value:
            enabled.append(name)
    return tuple(enabled)


def parse_config(raw, overrides: dict | None = None) -> ExperimentConfig:
    """Validate a decoded JSON document; raises ConfigInvalid listing every problem."""
    diags = _Diagnostics()
    top = _section(raw, "$", {"schema_version", "models", "profiles", "ladder", "weights", "exponents",
                              "corpus", "checks", "refinement", "output"}, diags)
    if not isinstance(raw, dict):
        raise ConfigInvalid("config must be a JSON object", diags.items)

    version = top.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        diags.add("$.schema_version", f"unsupported schema version {version!r}; expected {SCHEMA_VERSION}")

    models = top.get("models", [{}, {}])
    if not isinstance(models, list) or len(models) != 2:
        diags.add("$.models", "expected a list of two axis models")
        models = [{}, {}]
    axes = tuple(_axis(m, f"$.models[{i}]", diags) for i, m in enumerate(models))

    profiles_raw = _section(top.get("profiles"), "$.profiles", {"primary", "comparison"}, diags)
    primary = _profile_pair(profiles_raw.get("primary"), "$.profiles.primary", diags) or ExperimentConfig.profiles
    comparison = _profile_pair(profiles_raw.get("comparison"), "$.profiles.comparison", diags)

    ladder_raw = _section(top.get("ladder"), "$.ladder", {"j_min", "j_max", "samples_per_octave"}, diags)
    ld = LadderConfig()
    ladder = LadderConfig(
        j_min=_number(ladder_raw, "j_min", "$.ladder", ld.j_min, diags, integer=True),
        j_max=_number(ladder_raw, "j_max", "$.ladder", ld.j_max, diags, integer=True),
        samples_per_octave=_number(ladder_raw, "samples_per_octave", "$.ladder", ld.samples_per_octave, diags,
                                   integer=True, minimum=1),
    )
    if ladder.j_min > ladder.j_max:
        diags.add("$.ladder", f"j_min={ladder.j_min} exceeds j_max={ladder.j_max}")

    refinement_raw = _section(top.get("refinement"), "$.refinement", {"enabled", "factor"}, diags)
    enabled = refinement_raw.get("enabled", False)
    if not isinstance(enabled, bool):
        diags.add("$.refinement.enabled", f"expected true/false, got {enabled!r}")
        enabled = False
    refinement = RefinementConfig(
        enabled=enabled,
        factor=_number(refinement_raw, "factor", "$.refinement", 2, diags, integer=True, minimum=2),
    )

    output_raw = _section(top.get("output"), "$.output", {"dir", "formats"}, diags)
    formats = output_raw.get("formats", list(OutputConfig.formats))
    if not isinstance(formats, list) or not formats or any(f not in REPORT_FORMATS for f in formats):
        diags.add("$.output.formats", f"expected a non-empty subset of {list(REPORT_FORMATS)}, got {formats!r}")
        formats = list(OutputConfig.formats)
    out_dir = output_raw.get("dir", OutputConfig.dir)
    if not isinstance(out_dir, str) or not out_dir:
        diags.add("$.output.dir", f"expected a path string, got {out_dir!r}")
        out_dir = OutputConfig.dir

    cfg = ExperimentConfig(
        axes=axes,
        profiles=primary,
        comparison=comparison,
        ladder=ladder,
        weights=_weights(top.get("weights"), "$.weights", diags),
        exponents=_exponents(top.get("exponents"), "$.exponents", diags),
        corpus=_corpus(top.get("corpus"), "$.corpus", diags),
        checks=_checks(top.get("checks"), "$.checks", diags),
        refinement=refinement,
        output=OutputConfig(dir=out_dir, formats=tuple(f for f in REPORT_FORMATS if f in formats)),
    )
    if diags.items:
        raise ConfigInvalid(f"{len(diags.items)} problem(s) in experiment config", diags.items)
    return cfg.with_overrides(**(overrides or {}))


def load_config(path, **overrides) -> ExperimentConfig:
    """Read and validate a JSON experiment config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc.strerror or exc}", [("$", "unreadable")]) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"invalid JSON in {path}",
                            [(f"line {exc.lineno}, column {exc.colno}", exc.msg)]) from exc
    cfg = parse_config(raw, {k: v for k, v in overrides.items() if v is not None})
    logger.info("Loaded config %s: %d suite(s), seed=%d", path.name, len(cfg.checks), cfg.corpus.seed)
    return cfg
