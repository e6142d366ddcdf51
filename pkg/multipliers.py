"""Multiplier profiles of class A and Calderón partitions built from them.

A profile is an even, rapidly decaying Φ: ℝ → ℝ. It is in class A when |Φ|
stays away from zero on some annulus ε/2 < |λ| < 2ε.

Partitions use one invariant sum,

    Ξ(λ) = Σ_{k∈ℤ} Φ(2^{-k}λ)·s·Γ(2^{-k}λ),

where Γ is a bump on the Tauberian annulus and s is the sign of Φ there. Ξ is
dilation invariant and positive off the origin, and at most two terms are
nonzero for any λ. From it:

    Θ = sΓ/Ξ                               Σ_k Φ(2^{-k}λ)Θ(2^{-k}λ) = 1
    Υ = [Σ_{k≤0} Φ(2^{-k}λ)sΓ(2^{-k}λ)/Ξ]/Ψ   ΨΥ + Σ_{k≥1} Φ(2^{-k}λ)Θ(2^{-k}λ) = 1
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from config import EVEN_TOL, INTERPOLATION_BUDGET, MAX_CERTIFIED_ORDER, TAIL_SEMINORM_LIMIT
from errors import NotDecaying, NotEven, ProfileNotAdmissible, TauberianGapUncovered

logger = logging.getLogger(__name__)

PARTITION_KINDS = ("inhomogeneous", "homogeneous")

_EVEN_SAMPLES = np.concatenate([np.geomspace(1e-4, 1e3, 1500), np.linspace(0.0, 20.0, 801)])
_TAIL_SAMPLES = np.linspace(500.0, 1000.0, 101)


@dataclass(frozen=True, eq=False)
class MultiplierProfile:
    evaluator: Callable
    label: str
    tauberian_epsilon: float | None = None
    vanishing_order: int = 0
    decay_metadata: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __call__(self, lam):
        return self.evaluator(np.asarray(lam, dtype=float))

    @property
    def value_at_zero(self) -> float:
        return float(self(0.0))


@dataclass(frozen=True)
class ValidationReport:
    label: str
    evenness_residual: float
    epsilon: float | None
    tauberian_min: float
    vanishing_order: int
    value_at_zero: float
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def admissible(self) -> bool:
        """Class A and Φ(0) = 0: usable for square functions and Hardy norms."""
        return self.passed and self.value_at_zero == 0.0

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "evenness_residual": self.evenness_residual,
            "epsilon": self.epsilon,
            "tauberian_min": self.tauberian_min,
            "vanishing_order": self.vanishing_order,
            "value_at_zero": self.value_at_zero,
            "passed": self.passed,
            "admissible": self.admissible,
            "failures": list(self.failures),
        }


# ── Built-in evaluators ───────────────────────────────────

def _heat(lam):
    return np.exp(-lam ** 2)


def _lp_heat_m(m: int):
    def phi(lam):
        return lam ** (2 * m) * np.exp(-lam ** 2)
    return phi


def _bump_omega(eps: float):
    """exp(-1/(1-(λ/2ε)²)) on |λ| < 2ε, zero elsewhere."""
    def omega(lam):
        u = (lam / (2.0 * eps)) ** 2
        inside = u < 1.0
        out = np.zeros_like(lam, dtype=float)
        out[inside] = np.exp(-1.0 / (1.0 - u[inside]))
        return out
    return omega


def _bump_gamma(eps: float):
    """Product of one-sided bumps on ε/2 < |λ| < 2ε, peak 1 mid-annulus."""
    def gamma(lam):
        u = (np.abs(lam) - eps / 2.0) / (1.5 * eps)
        inside = (u > 0.0) & (u < 1.0)
        out = np.zeros_like(lam, dtype=float)
        v = u[inside]
        out[inside] = np.exp(4.0 - 1.0 / v - 1.0 / (1.0 - v))
        return out
    return gamma


def _vectorized(fn):
    def wrapped(lam):
        lam = np.asarray(lam, dtype=float)
        return np.asarray(fn(np.atleast_1d(lam)), dtype=float).reshape(lam.shape)
    return wrapped


BUILTIN_PROFILES = {
    "heat": "e^{-λ²}",
    "lp-heat": "λ²e^{-λ²}",
    "lp-heat-m": "λ^{2m}e^{-λ²} (param m >= 1)",
    "bump-omega": "smooth bump on |λ| < 2ε (param eps)",
    "bump-gamma": "smooth bump on ε/2 < |λ| < 2ε (param eps)",
}


def _builtin(tag: str, params: dict) -> tuple[Callable, str]:
    if tag == "heat":
        return _heat, "heat"
    if tag == "lp-heat":
        return _lp_heat_m(1), "lp-heat"
    if tag == "lp-heat-m":
        m = params.get("m", 2)
        if int(m) != m or m < 1:
            raise ValueError(f"lp-heat-m needs an integer m >= 1, got {m!r}")
        return _lp_heat_m(int(m)), f"lp-heat-m(m={int(m)})"
    if tag in ("bump-omega", "bump-gamma"):
        eps = float(params.get("eps", 1.0))
        if eps <= 0:
            raise ValueError(f"{tag} needs eps > 0, got {eps!r}")
        maker = _bump_omega if tag == "bump-omega" else _bump_gamma
        return maker(eps), f"{tag}(eps={eps:g})"
    raise ValueError(f"unknown profile {tag!r}; built-ins are {sorted(BUILTIN_PROFILES)}")


# ── Metadata estimation ───────────────────────────────────

def _evenness_residual(evaluator) -> tuple[float, float]:
    plus = evaluator(_EVEN_SAMPLES)
    minus = evaluator(-_EVEN_SAMPLES)
    return float(np.max(np.abs(plus - minus))), float(np.max(np.abs(plus)))


def estimate_vanishing_order(evaluator) -> int:
    """Largest ν with Φ^{(k)}(0) = 0 for k < ν, from the local power law at 0.

    Orders above MAX_CERTIFIED_ORDER come back as MAX_CERTIFIED_ORDER + 1.
    """
    scale = max(float(np.max(np.abs(evaluator(_EVEN_SAMPLES)))), 1e-300)
    if abs(float(evaluator(np.array([0.0]))[0])) > 1e-12 * scale:
        return 0
    hs = 1e-2 * 2.0 ** -np.arange(8)
    vals = np.abs(evaluator(hs))
    if np.any(vals <= 1e-300 * scale):
        return MAX_CERTIFIED_ORDER + 1
    slopes = np.log2(vals[:-1] / vals[1:])
    # slope = ν + O(h²): one Richardson step removes the leading error
    richardson = (4.0 * slopes[-1] - slopes[-2]) / 3.0
    order = int(round(richardson))
    return int(min(max(order, 0), MAX_CERTIFIED_ORDER + 1))


def tauberian_scan(evaluator, k_range=range(-6, 7), n_samples: int = 257) -> tuple[float | None, float]:
    """Dyadic ε = 2^k maximizing min |Φ| on the open annulus (ε/2, 2ε)."""
    best_eps, best_min = None, 0.0
    interior = np.linspace(0.0, 1.0, n_samples + 2)[1:-1]
    for k in k_range:
        eps = 2.0 ** k
        lam = eps / 2.0 + 1.5 * eps * interior
        low = float(np.min(np.abs(evaluator(lam))))
        if low > best_min:
            best_eps, best_min = eps, low
    return best_eps, best_min


def _decay_metadata(evaluator) -> dict:
    lam = np.concatenate([_EVEN_SAMPLES, _TAIL_SAMPLES])
    vals = np.abs(evaluator(lam))
    return {
        "sup": float(np.max(vals)),
        "sup_lambda2": float(np.max(lam ** 2 * vals)),
        "sup_lambda4": float(np.max(lam ** 4 * vals)),
        "tail_lambda4": float(np.max(_TAIL_SAMPLES ** 4 * np.abs(evaluator(_TAIL_SAMPLES)))),
    }


def make_profile(tag_or_evaluator, label: str | None = None, **params) -> MultiplierProfile:
    """Built-in profile by tag, or a custom evaluator, with validated metadata."""
    if callable(tag_or_evaluator):
        evaluator, default_label = _vectorized(tag_or_evaluator), "custom"
    else:
        raw, default_label = _builtin(tag_or_evaluator, params)
        evaluator = _vectorized(raw)
    label = label or default_label

    residual, scale = _evenness_residual(evaluator)
    if not residual < EVEN_TOL * max(1.0, scale):
        raise NotEven(f"profile {label!r} is not even (residual {residual:.3e})")
    decay = _decay_metadata(evaluator)
    if not np.isfinite(decay["tail_lambda4"]) or decay["tail_lambda4"] > TAIL_SEMINORM_LIMIT:
        raise NotDecaying(f"profile {label!r} does not decay: sup λ⁴|Φ| on the tail is {decay['tail_lambda4']:.3e}")

    eps, _ = tauberian_scan(evaluator)
    return MultiplierProfile(
        evaluator=evaluator,
        label=label,
        tauberian_epsilon=eps,
        vanishing_order=estimate_vanishing_order(evaluator),
        decay_metadata=decay,
        params=dict(params),
    )


def validate_class_A(profile: MultiplierProfile) -> ValidationReport:
    residual, scale = _evenness_residual(profile)
    eps, low = tauberian_scan(profile)
    failures = []
    if not residual < EVEN_TOL * max(1.0, scale):
        failures.append("not even")
    if eps is None:
        failures.append("no Tauberian annulus")
    return ValidationReport(
        label=profile.label,
        evenness_residual=residual,
        epsilon=eps,
        tauberian_min=low,
        vanishing_order=profile.vanishing_order,
        value_at_zero=profile.value_at_zero,
        failures=failures,
    )


def profile_square_integral(profile) -> float:
    """∫_0^∞ |Φ(s)|² ds/s; infinite when Φ(0) ≠ 0."""
    if abs(float(profile(0.0))) > 0.0:
        return math.inf

    def integrand(s):
        return float(profile(s)) ** 2 / s

    head, _ = quad(integrand, 0.0, 1.0, limit=200)
    tail, _ = quad(integrand, 1.0, np.inf, limit=200)
    return head + tail


# ── Calderón partitions ───────────────────────────────────

@dataclass(frozen=True, eq=False)
class CalderonPartition:
    phi: MultiplierProfile
    theta: MultiplierProfile
    kind: str
    epsilon: float
    psi: MultiplierProfile | None = None
    upsilon: MultiplierProfile | None = None
    interpolation_error: float | None = None

    def _k_bounds(self, lam) -> tuple[int, int]:
        a = np.abs(np.asarray(lam, dtype=float))
        a = a[a > 0]
        if a.size == 0:
            return 1, 0
        eps = self.epsilon
        k_hi = int(math.ceil(math.log2(a.max() / (eps / 2.0)))) + 1
        k_lo = int(math.floor(math.log2(a.min() / (2.0 * eps)))) - 1
        return k_lo, k_hi

    def identity_sum(self, lam, max_terms: int | None = None) -> np.ndarray:
        """Left side of the partition identity at every λ.

        Inhomogeneous: ΨΥ + Σ_{k=1}^{K} Φ(2^{-k}λ)Θ(2^{-k}λ).
        Homogeneous: Σ_k Φ(2^{-k}λ)Θ(2^{-k}λ) over the k-range that can
        contribute (0 at λ = 0). ``max_terms`` truncates the k-sum.
        """
        lam = np.asarray(lam, dtype=float)
        k_lo, k_hi = self._k_bounds(lam)
        if self.kind == "inhomogeneous":
            total = self.psi(lam) * self.upsilon(lam)
            k_lo = 1
        else:
            total = np.zeros_like(lam)
        if max_terms is not None:
            k_hi = min(k_hi, k_lo + max_terms - 1)
        for k in range(k_lo, k_hi + 1):
            u = lam * 2.0 ** -k
            total = total + self.phi(u) * self.theta(u)
        return total


def _xi(phi, gamma, sign: float, eps: float, lam, k_max: int | None = None) -> np.ndarray:
    """Σ_k Φ(2^{-k}λ)·s·Γ(2^{-k}λ) (restricted to k <= k_max when given)."""
    a = np.abs(np.asarray(lam, dtype=float))
    out = np.zeros_like(a)
    nz = a > 0
    if not np.any(nz):
        return out
    k0 = np.floor(np.log2(a[nz] / (2.0 * eps)))
    acc = np.zeros(np.count_nonzero(nz))
    for dk in range(4):
        k = k0 + dk
        u = a[nz] * 2.0 ** -k
        term = phi(u) * sign * gamma(u)
        if k_max is not None:
            term = np.where(k <= k_max, term, 0.0)
        acc += term
    out[nz] = acc
    return out


def _tabulate(evaluator, lo: float, hi: float, n: int = 8193):
    """Monotone cubic table of ``evaluator`` on [lo, hi] and its max error at midpoints."""
    nodes = np.geomspace(lo, hi, n)
    table = PchipInterpolator(nodes, evaluator(nodes), extrapolate=False)
    mids = np.sqrt(nodes[:-1] * nodes[1:])
    err = float(np.max(np.abs(table(mids) - evaluator(mids))))

    def tabulated(lam):
        a = np.abs(lam)
        out = np.zeros_like(a)
        inside = (a >= lo) & (a <= hi)
        out[inside] = table(a[inside])
        return out
    return tabulated, err


def build_calderon(profile: MultiplierProfile, kind: str = "inhomogeneous",
                   tabulate: bool = False) -> CalderonPartition:
    if kind not in PARTITION_KINDS:
        raise ValueError(f"unknown partition kind {kind!r}; expected one of {PARTITION_KINDS}")
    report = validate_class_A(profile)
    if report.epsilon is None:
        raise TauberianGapUncovered(f"profile {profile.label!r} has no Tauberian annulus")
    if kind == "homogeneous" and profile.vanishing_order < 1:
        raise ProfileNotAdmissible(f"homogeneous partition needs Φ(0) = 0, {profile.label!r} has Φ(0)={profile.value_at_zero:g}")

    eps = report.epsilon
    gamma = _bump_gamma(eps)
    sign = float(np.sign(profile(eps)))

    samples = np.geomspace(1e-3, 1e3, 2001)
    xi_samples = _xi(profile, gamma, sign, eps, samples)
    if np.min(xi_samples) <= 0:
        raise TauberianGapUncovered(f"Ξ vanishes for profile {profile.label!r} near λ={samples[np.argmin(xi_samples)]:.3g}")

    def theta_eval(lam):
        g = gamma(lam)
        out = np.zeros_like(lam)
        on = g != 0
        out[on] = sign * g[on] / _xi(profile, gamma, sign, eps, lam[on])
        return out

    interpolation_error = None
    if tabulate:
        table, err = _tabulate(theta_eval, eps / 2.0, 2.0 * eps)
        interpolation_error = err
        if err <= INTERPOLATION_BUDGET:
            theta_eval = table
        else:
            logger.warning("Θ table error %.2e exceeds budget %.0e; keeping direct evaluation", err, INTERPOLATION_BUDGET)

    theta = MultiplierProfile(evaluator=_vectorized(theta_eval), label=f"theta[{profile.label}]",
                              tauberian_epsilon=eps, vanishing_order=MAX_CERTIFIED_ORDER + 1)
    if kind == "homogeneous":
        return CalderonPartition(phi=profile, theta=theta, kind=kind, epsilon=eps,
                                 interpolation_error=interpolation_error)

    psi = make_profile("heat", label="psi")

    def upsilon_eval(lam):
        a = np.abs(lam)
        out = np.zeros_like(a)
        out[a == 0] = 1.0
        on = (a > 0) & (a < 2.0 * eps)
        if np.any(on):
            head = _xi(profile, gamma, sign, eps, a[on], k_max=0)
            full = _xi(profile, gamma, sign, eps, a[on])
            out[on] = head / full / psi(a[on])
        return out

    upsilon = MultiplierProfile(evaluator=_vectorized(upsilon_eval), label=f"upsilon[{profile.label}]",
                                tauberian_epsilon=None, vanishing_order=0)
    return CalderonPartition(phi=profile, theta=theta, kind=kind, epsilon=eps, psi=psi, upsilon=upsilon,
                             interpolation_error=interpolation_error)


def partition_residual(partition: CalderonPartition, lambda_samples, max_terms: int | None = None) -> float:
    """max |identity sum − 1| over the samples (λ = 0 skipped for homogeneous)."""
    lam = np.atleast_1d(np.asarray(lambda_samples, dtype=float))
    if partition.kind == "homogeneous":
        lam = lam[lam != 0]
    if lam.size == 0:
        return 0.0
    return float(np.max(np.abs(partition.identity_sum(lam, max_terms=max_terms) - 1.0)))


def reconstruct(model, partition: CalderonPartition, t: float, f, axis: int = -1):
    """Apply the partition identity as an operator: Σ_k Φ(2^{-k}t√L)Θ(2^{-k}t√L) f (+ ΨΥ head)."""
    symbol = partition.identity_sum(t * model.frequencies)
    if partition.kind == "homogeneous":
        symbol = np.where(model.frequencies == 0, 0.0, symbol)
    return model.apply_symbol(symbol, f, axis=axis)
