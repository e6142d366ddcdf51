"""Model operators with exact finite-dimensional functional calculus.

Two backends:

* ``fourier-torus``: the Laplacian on a periodic grid, diagonalized by the FFT.
* ``dense-eigen``: Bessel-type operators on a graded half-line, built as a
  conservative finite-volume matrix, symmetrized with the quadrature weights
  and diagonalized with ``scipy.linalg.eigh``.

Mode transforms are unitary for ⟨f, g⟩ = Σ f·conj(g)·w, so Φ(t√L) is applied
as ``inverse(Φ(t·√spectrum) · forward(f))``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from config import MAX_DENSE_SIZE, NEGATIVE_EIGEN_TOL, RADIUS_CAP_FRACTION, SYMMETRY_TOL, ZERO_MODE_TOL
from errors import EigenFailure, HypothesisViolated, IncompatibleModel, ScaleNonpositive, ScaleOrderViolation
from geometry import Grid, volume

logger = logging.getLogger(__name__)

MODEL_TAGS = ("laplacian", "bessel", "bessel-schrodinger")
ORIGIN_CONDITIONS = ("dirichlet", "natural")


@dataclass(frozen=True, eq=False)
class SpectralModel:
    grid: Grid
    backend: str
    spectrum: np.ndarray
    model_tag: str
    eigvecs: np.ndarray | None = None
    matrix: np.ndarray | None = None
    origin: str | None = None
    schrodinger_lambda: float | None = None
    clamped: int = 0

    @property
    def frequencies(self) -> np.ndarray:
        """√spectrum, the argument profiles are evaluated at (times t)."""
        return np.sqrt(self.spectrum)

    @property
    def label(self) -> str:
        if self.model_tag == "laplacian":
            return "laplacian"
        if self.model_tag == "bessel":
            return f"bessel({self.grid.bessel_lambda:g})"
        return f"bessel-schrodinger({self.schrodinger_lambda:g})"

    def describe(self) -> dict:
        out = {"model": self.model_tag, "backend": self.backend, "grid": self.grid.describe()}
        if self.origin:
            out["origin"] = self.origin
        if self.schrodinger_lambda is not None:
            out["schrodinger_lambda"] = self.schrodinger_lambda
        return out

    def forward(self, f, axis: int = -1) -> np.ndarray:
        """Point samples → spectral coefficients along ``axis``."""
        f = np.moveaxis(np.asarray(f), axis, -1)
        sqrt_w = np.sqrt(self.grid.quad_weights)
        if self.backend == "fourier-torus":
            c = np.fft.fft(f, axis=-1, norm="ortho") * sqrt_w[0]
        else:
            c = (f * sqrt_w) @ self.eigvecs
        return np.moveaxis(c, -1, axis)

    def inverse(self, c, axis: int = -1) -> np.ndarray:
        c = np.moveaxis(np.asarray(c), axis, -1)
        sqrt_w = np.sqrt(self.grid.quad_weights)
        if self.backend == "fourier-torus":
            f = np.fft.ifft(c, axis=-1, norm="ortho") / sqrt_w[0]
        else:
            f = (c @ self.eigvecs.T) / sqrt_w
        return np.moveaxis(f, -1, axis)

    def apply_symbol(self, symbol, f, axis: int = -1) -> np.ndarray:
        """inverse(symbol ⊙ forward(f)). ``symbol`` may carry leading batch axes."""
        f = np.asarray(f)
        c = np.moveaxis(self.forward(f, axis), axis, -1)
        out = self.inverse(np.asarray(symbol) * c, axis=-1)
        if np.isrealobj(f) and np.isrealobj(symbol):
            out = out.real
        return np.moveaxis(out, -1, axis) if out.ndim == f.ndim else out

    def apply_operator(self, f) -> np.ndarray:
        """L f: the assembled matrix for dense models, spectral for the torus."""
        if self.matrix is not None:
            return self.matrix @ np.asarray(f)
        return self.apply_symbol(self.spectrum, f)

    def inner(self, f, g) -> complex:
        return np.sum(np.asarray(f) * np.conj(g) * self.grid.quad_weights)


@dataclass(frozen=True)
class KernelColumn:
    source: int
    t: float
    values: np.ndarray


@dataclass(frozen=True)
class DecayReport:
    mode: str
    constants: dict = field(default_factory=dict)
    fitted_exponent: float | None = None
    expected_exponent: float | None = None
    samples: list = field(default_factory=list)
    passed: bool = True

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "constants": {str(k): v for k, v in self.constants.items()},
            "fitted_exponent": self.fitted_exponent,
            "expected_exponent": self.expected_exponent,
            "samples": self.samples,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class GaussianFit:
    C: float
    c: float
    table: dict


# ── Construction ──────────────────────────────────────────

def _stiffness(grid: Grid, origin: str) -> np.ndarray:
    """Symmetric tridiagonal form ⟨Lf, g⟩_μ = Σ flux·Δf·Δg of -x^{-2λ}(x^{2λ}f')'."""
    x, e, lam = grid.points, grid.edges, grid.bessel_lambda
    n = grid.size
    flux = e[1:-1] ** (2 * lam) / np.diff(x)
    diag = np.zeros(n)
    diag[:-1] += flux
    diag[1:] += flux
    # Dirichlet at R through the half cell to the boundary.
    diag[-1] += e[-1] ** (2 * lam) / (e[-1] - x[-1])
    if origin == "dirichlet" and lam == 0:
        diag[0] += 1.0 / x[0]
    A = np.diag(diag)
    A -= np.diag(flux, 1) + np.diag(flux, -1)
    return A


def build_operator(grid: Grid, model_tag: str, origin: str | None = None,
                   schrodinger_lambda: float | None = None) -> SpectralModel:
    if model_tag not in MODEL_TAGS:
        raise IncompatibleModel(f"unknown model {model_tag!r}; expected one of {MODEL_TAGS}")

    if model_tag == "laplacian":
        if not grid.periodic:
            raise IncompatibleModel(f"laplacian needs a line-periodic grid, got {grid.kind}")
        xi = 2.0 * np.pi * np.fft.fftfreq(grid.size, d=grid.period / grid.size)
        spectrum = xi ** 2
        spectrum.flags.writeable = False
        return SpectralModel(grid=grid, backend="fourier-torus", spectrum=spectrum, model_tag=model_tag)

    if grid.periodic:
        raise IncompatibleModel(f"{model_tag} needs a halfline grid, got {grid.kind}")
    if grid.size > MAX_DENSE_SIZE:
        raise IncompatibleModel(f"dense backend is limited to N <= {MAX_DENSE_SIZE}, got {grid.size}")
    origin = origin or "dirichlet"
    if origin not in ORIGIN_CONDITIONS:
        raise IncompatibleModel(f"unknown origin condition {origin!r}")

    if model_tag == "bessel":
        A = _stiffness(grid, origin)
    else:
        if grid.bessel_lambda != 0:
            raise IncompatibleModel("bessel-schrodinger acts on Lebesgue measure; use bessel_lambda = 0")
        if schrodinger_lambda is None or schrodinger_lambda <= 0:
            raise IncompatibleModel(f"bessel-schrodinger needs a parameter > 0, got {schrodinger_lambda!r}")
        origin = "dirichlet"
        A = _stiffness(grid, origin)
        lam = schrodinger_lambda
        A += np.diag((lam ** 2 - lam) / grid.points ** 2 * grid.quad_weights)

    w = grid.quad_weights
    inv_sqrt_w = 1.0 / np.sqrt(w)
    S = A * inv_sqrt_w[:, None] * inv_sqrt_w[None, :]
    asym = np.max(np.abs(S - S.T))
    if asym > SYMMETRY_TOL * max(np.max(np.abs(S)), 1.0):
        raise EigenFailure(f"symmetrized operator is not symmetric (defect {asym:.3e})")
    S = 0.5 * (S + S.T)
    try:
        evals, evecs = linalg.eigh(S)
    except linalg.LinAlgError as e:
        raise EigenFailure(f"eigendecomposition failed: {e}") from e

    top = max(float(evals[-1]), 0.0)
    if evals[0] < -NEGATIVE_EIGEN_TOL * top:
        raise EigenFailure(f"operator has a negative eigenvalue {evals[0]:.3e}")
    clamped = int(np.sum(evals < 0))
    if clamped:
        logger.warning("Clamped %d round-off negative eigenvalue(s) to 0 on %s", clamped, grid.label)
    evals = np.maximum(evals, 0.0)
    # sign convention: first non-negligible entry (nearest the origin) positive
    lead = np.argmax(np.abs(evecs) > 1e-6 * np.max(np.abs(evecs), axis=0), axis=0)
    evecs = evecs * np.sign(evecs[lead, np.arange(grid.size)])
    for a in (evals, evecs):
        a.flags.writeable = False
    matrix = A / w[:, None]
    matrix.flags.writeable = False
    logger.debug("Built %s on %s: spectrum [%.3e, %.3e]", model_tag, grid.label, evals[0], evals[-1])
    return SpectralModel(grid=grid, backend="dense-eigen", spectrum=evals, model_tag=model_tag,
                         eigvecs=evecs, matrix=matrix, origin=origin,
                         schrodinger_lambda=schrodinger_lambda, clamped=clamped)


# ── Functional calculus ───────────────────────────────────

def _check_scale(t):
    if np.any(np.asarray(t) <= 0):
        raise ScaleNonpositive(f"scale must be positive, got {t!r}")


def multiplier_symbols(model: SpectralModel, profile, ts) -> np.ndarray:
    """Φ(t·√σ) for every t in ``ts``: shape (len(ts), M)."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    _check_scale(ts)
    return profile(ts[:, None] * model.frequencies[None, :])


def apply_multiplier(model: SpectralModel, profile, t: float, f, axis: int = -1) -> np.ndarray:
    """Φ(t√L) f along ``axis``."""
    _check_scale(t)
    return model.apply_symbol(profile(t * model.frequencies), f, axis=axis)


def heat_semigroup(model: SpectralModel, t: float, f, axis: int = -1) -> np.ndarray:
    """e^{-tL} f."""
    _check_scale(t)
    return model.apply_symbol(np.exp(-t * model.spectrum), f, axis=axis)


def project_mean_zero(f, models) -> np.ndarray:
    """Remove the spectral atom at 0 along every axis (one model per axis)."""
    out = np.asarray(f)
    for axis, model in enumerate(models):
        sigma = model.spectrum
        keep = (sigma > ZERO_MODE_TOL * max(float(sigma.max()), 1.0)).astype(float)
        if np.all(keep == 1.0):
            continue
        out = model.apply_symbol(keep, out, axis=axis)
    return out


def _delta(model: SpectralModel, source: int) -> np.ndarray:
    d = np.zeros(model.grid.size)
    d[source] = 1.0 / model.grid.quad_weights[source]
    return d


def heat_kernel_column(model: SpectralModel, t: float, source: int) -> KernelColumn:
    _check_scale(t)
    values = heat_semigroup(model, t, _delta(model, source))
    return KernelColumn(source=int(source), t=float(t), values=np.real(values))


def multiplier_kernel_column(model: SpectralModel, profile, t: float, source: int) -> KernelColumn:
    _check_scale(t)
    values = apply_multiplier(model, profile, t, _delta(model, source))
    return KernelColumn(source=int(source), t=float(t), values=np.real(values))


def kernel_matrix(model: SpectralModel, symbol) -> np.ndarray:
    """K[x, y] for the operator with the given spectral symbol."""
    deltas = np.diag(1.0 / model.grid.quad_weights)
    return np.real(model.apply_symbol(symbol, deltas, axis=0))


# ── Decay verification ────────────────────────────────────

def default_sources(model: SpectralModel, count: int = 3) -> list[int]:
    grid = model.grid
    if grid.periodic:
        return [grid.size // 2]
    targets = np.array([0.125, 0.25, 0.5])[:count] * grid.right_endpoint
    return sorted({int(np.argmin(np.abs(grid.points - x))) for x in targets})


def _near(grid: Grid, source: int) -> np.ndarray:
    cap = RADIUS_CAP_FRACTION * grid.extent
    rho = grid.distance(grid.points, grid.points[source])
    return rho <= cap


def decay_check(model: SpectralModel, profile_outer, profile_inner=None, scale_pairs=None,
                mode: str = "single", exponents=(4,), m: int | None = None,
                sources=None) -> DecayReport:
    """Kernel decay of Φ(t√L) (single) or of Φ(s√L)Ψ(t√L) (composed)."""
    grid = model.grid
    sources = list(sources) if sources is not None else default_sources(model)

    if mode == "single":
        scales = sorted({float(t) for pair in (scale_pairs or [(1.0, 1.0)]) for t in np.atleast_1d(pair)})
        _check_scale(scales)
        constants = {}
        for N in exponents:
            worst = 0.0
            for t in scales:
                for y in sources:
                    near = _near(grid, y)
                    col = multiplier_kernel_column(model, profile_outer, t, y).values
                    rho = grid.distance(grid.points, grid.points[y])
                    bound = volume(grid, grid.points, t) * (1.0 + rho / t) ** N
                    worst = max(worst, float(np.max(np.abs(col[near]) * bound[near])))
            constants[N] = worst
        return DecayReport(mode="single", constants=constants, samples=[[t] for t in scales])

    if mode != "composed":
        raise ValueError(f"unknown decay mode {mode!r}")
    if profile_inner is None:
        raise ValueError("composed mode needs an inner profile")
    nu = profile_inner.vanishing_order
    if m is None:
        m = nu - 1
    if m < 0 or nu < m + 1:
        raise HypothesisViolated(f"inner profile vanishes to order {nu}, composed bound needs {m + 1}")
    if scale_pairs is None:
        scale_pairs = [(2.0, 2.0 * 2.0 ** -k) for k in range(1, 7)]
    for s, t in scale_pairs:
        _check_scale((s, t))
        if t > s:
            raise ScaleOrderViolation(f"composed decay needs t <= s, got t={t} > s={s}")

    ratios, peaks = [], []
    for s, t in scale_pairs:
        symbol = profile_outer(s * model.frequencies) * profile_inner(t * model.frequencies)
        peak = 0.0
        for y in sources:
            near = _near(grid, y)
            d = _delta(model, y)
            col = np.real(model.apply_symbol(symbol, d))
            peak = max(peak, float(np.max(np.abs(col[near]) * volume(grid, grid.points[near], s))))
        ratios.append(t / s)
        peaks.append(peak)

    ratios, peaks = np.array(ratios), np.array(peaks)
    fitted = None
    usable = (ratios < 1.0) & (peaks > 0)
    if np.count_nonzero(usable) >= 2:
        fitted = float(np.polyfit(np.log(ratios[usable]), np.log(peaks[usable]), 1)[0])
    expected = float(m + 1)
    passed = fitted is not None and fitted >= expected - 0.3
    samples = [[float(r), float(p)] for r, p in zip(ratios, peaks)]
    return DecayReport(mode="composed", constants={"peak_at_equal_scales": float(peaks[np.argmax(ratios)])},
                       fitted_exponent=fitted, expected_exponent=expected, samples=samples, passed=passed)


def gaussian_bound_fit(model: SpectralModel, ts=(0.25, 0.5, 1.0), c_grid=(2.0, 3.0, 4.0, 5.0, 6.0, 8.0),
                       sources=None) -> GaussianFit:
    """Fit (C, c) in |p_t(x,y)| <= C·V(x,√t)^{-1}·exp(-ρ²/(ct)).

    Returns the smallest c whose C is within 1% of the best C on the grid.
    """
    grid = model.grid
    sources = list(sources) if sources is not None else default_sources(model)
    table = {}
    for c in c_grid:
        worst = 0.0
        for t in ts:
            for y in sources:
                col = heat_kernel_column(model, t, y).values
                # round-off floor, not kernel
                significant = _near(grid, y) & (np.abs(col) >= 1e-10 * np.max(np.abs(col)))
                rho = grid.distance(grid.points, grid.points[y])
                with np.errstate(over="ignore", invalid="ignore"):
                    scaled = np.abs(col) * volume(grid, grid.points, np.sqrt(t)) * np.exp(rho ** 2 / (c * t))
                worst = max(worst, float(np.max(scaled[significant])))
        table[float(c)] = worst
    best = min(table.values())
    c_star = min(c for c, C in table.items() if C <= 1.01 * best)
    return GaussianFit(C=table[c_star], c=c_star, table=table)
