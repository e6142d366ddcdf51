"""Discretized one-dimensional metric-measure spaces.

Two kinds of grid are supported:

* ``line-periodic``: the real line approximated by a torus of period T with
  uniform cells and Lebesgue measure.
* ``halfline``: (0, R] with measure x^{2λ}dx, geometrically graded toward 0.

Each grid point owns a cell ``[edges[i], edges[i+1]]``; quadrature weights are
the exact cell masses. Kernel helpers below treat fields as piecewise
constant on cells (density = cell mass / cell width), which lets ball
overlaps and decay weights be integrated exactly.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from config import DEFAULT_PERIOD, HALFLINE_GRADING, MIN_GRID_SIZE, RADIUS_CAP_FRACTION
from errors import ExponentTooSmall, InvalidDomain, LengthMismatch

logger = logging.getLogger(__name__)

GRID_KINDS = ("line-periodic", "halfline")


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    kind: str
    points: np.ndarray
    quad_weights: np.ndarray
    edges: np.ndarray
    period: float | None = None
    right_endpoint: float | None = None
    bessel_lambda: float = 0.0
    mass_scale: float = 1.0

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def periodic(self) -> bool:
        return self.kind == "line-periodic"

    @property
    def extent(self) -> float:
        """T for the torus, R for the half-line."""
        return self.period if self.periodic else self.right_endpoint

    @property
    def dimension(self) -> float:
        """Homogeneous dimension of the measure: 1 for Lebesgue, 2λ+1 for Bessel."""
        return 2.0 * self.bessel_lambda + 1.0

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def density(self) -> np.ndarray:
        return self.quad_weights / self.widths

    @property
    def label(self) -> str:
        if self.periodic:
            return f"torus(T={self.period:g},N={self.size})"
        return f"halfline(R={self.right_endpoint:g},lambda={self.bessel_lambda:g},N={self.size})"

    def distance(self, x, y) -> np.ndarray:
        d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        if self.periodic:
            d = np.mod(d, self.period)
            d = np.minimum(d, self.period - d)
        return d

    def distance_matrix(self, xs=None) -> np.ndarray:
        xs = self.points if xs is None else np.asarray(xs, dtype=float)
        return self.distance(xs[:, None], self.points[None, :])

    def describe(self) -> dict:
        out = {"kind": self.kind, "size": self.size}
        if self.periodic:
            out["period"] = self.period
        else:
            out["right_endpoint"] = self.right_endpoint
            out["bessel_lambda"] = self.bessel_lambda
        if self.mass_scale != 1.0:
            out["mass_scale"] = self.mass_scale
        return out


@dataclass(frozen=True)
class DoublingConstants:
    n_hat: float
    D_hat: float
    tos_constant: float = 1.0
    sampling_plan: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DecayIntegral:
    lhs: float
    bound_ratio: float


# ── Construction ──────────────────────────────────────────

def _graded_edges(size: int, R: float, grading: float) -> np.ndarray:
    """Edges 0 = e_0 < ... < e_N = R with e_1 ≈ grading·R."""
    if 1.0 / size <= grading:
        return np.linspace(0.0, R, size + 1)

    def first_cell(beta):
        return np.expm1(beta / size) / np.expm1(beta) - grading

    beta = brentq(first_cell, 1e-9, 700.0, xtol=1e-14)
    s = np.arange(size + 1) / size
    edges = R * np.expm1(beta * s) / np.expm1(beta)
    edges[0], edges[-1] = 0.0, R
    return edges


def make_grid(
    kind: str,
    size: int,
    period: float = DEFAULT_PERIOD,
    right_endpoint: float | None = None,
    bessel_lambda: float = 0.0,
    grading: float = HALFLINE_GRADING,
    mass_scale: float = 1.0,
) -> Grid:
    if kind not in GRID_KINDS:
        raise InvalidDomain(f"unknown grid kind {kind!r}; expected one of {GRID_KINDS}")
    if int(size) != size or size < MIN_GRID_SIZE:
        raise InvalidDomain(f"grid size must be an integer >= {MIN_GRID_SIZE}, got {size!r}")
    if not mass_scale > 0:
        raise InvalidDomain(f"mass_scale must be positive, got {mass_scale!r}")
    size = int(size)

    if kind == "line-periodic":
        if period is None or not period > 0:
            raise InvalidDomain(f"period must be positive, got {period!r}")
        h = period / size
        points = -period / 2.0 + h * np.arange(size)
        edges = np.concatenate([points - h / 2.0, [points[-1] + h / 2.0]])
        weights = np.full(size, h * mass_scale)
        return Grid(kind, _frozen(points), _frozen(weights), _frozen(edges),
                    period=float(period), mass_scale=float(mass_scale))

    if right_endpoint is None or not right_endpoint > 0:
        raise InvalidDomain(f"right endpoint R must be positive, got {right_endpoint!r}")
    if not bessel_lambda >= 0:
        raise InvalidDomain(f"Bessel parameter must be >= 0, got {bessel_lambda!r}")
    if not 0 < grading < 1:
        raise InvalidDomain(f"grading must lie in (0, 1), got {grading!r}")
    edges = _graded_edges(size, float(right_endpoint), grading)
    d = 2.0 * bessel_lambda + 1.0
    weights = (edges[1:] ** d - edges[:-1] ** d) / d * mass_scale
    points = 0.5 * (edges[1:] + edges[:-1])
    return Grid(kind, _frozen(points), _frozen(weights), _frozen(edges),
                right_endpoint=float(right_endpoint), bessel_lambda=float(bessel_lambda),
                mass_scale=float(mass_scale))


# ── Primitives ────────────────────────────────────────────

def volume(grid: Grid, x, r):
    """μ(B(x, r)) in closed form. Vectorized over x and r."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise InvalidDomain(f"radius must be positive, got {r!r}")
    x = np.asarray(x, dtype=float)
    if grid.periodic:
        v = np.minimum(2.0 * r, grid.period) + 0.0 * x
    else:
        d = grid.dimension
        lo = np.maximum(x - r, 0.0)
        hi = np.minimum(x + r, grid.right_endpoint)
        v = np.where(hi > lo, (hi ** d - lo ** d) / d, 0.0)
    v = v * grid.mass_scale
    return float(v) if v.ndim == 0 else v


def ball_indices(grid: Grid, x: float, r: float) -> np.ndarray:
    if r <= 0:
        raise InvalidDomain(f"radius must be positive, got {r!r}")
    return np.flatnonzero(grid.distance(x, grid.points) < r)


def integrate(grid: Grid, values):
    values = np.asarray(values)
    if values.shape[-1:] != (grid.size,):
        raise LengthMismatch(f"expected {grid.size} values, got shape {values.shape}")
    return np.sum(values * grid.quad_weights, axis=-1)


# ── Cell kernels ──────────────────────────────────────────

def _displacement_pieces(grid: Grid, xs):
    """Signed displacement intervals of every cell as seen from each x.

    Returns (lo, hi, wrap) with shape (len(xs), N). On the torus a cell may
    straddle the antipode; its overflow of length ``wrap`` re-enters at -T/2.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))[:, None]
    lo = grid.edges[None, :-1] - xs
    width = grid.widths[None, :]
    if not grid.periodic:
        return lo, lo + width, np.zeros_like(lo)
    half = grid.period / 2.0
    lo = np.mod(lo + half, grid.period) - half
    hi = lo + width
    wrap = np.maximum(hi - half, 0.0)
    return lo, np.minimum(hi, half), wrap


def cell_integrals(grid: Grid, xs, primitive) -> np.ndarray:
    """Matrix of ∫_{cell_j} k(ρ(x_i, z)) dz (Lebesgue length).

    ``primitive(u)`` must be G(u) = ∫_0^u k(s) ds for u >= 0.
    """
    def odd(u):
        return np.sign(u) * primitive(np.abs(u))

    lo, hi, wrap = _displacement_pieces(grid, xs)
    out = odd(hi) - odd(lo)
    if grid.periodic and np.any(wrap > 0):
        half = grid.period / 2.0
        out = out + np.where(wrap > 0, odd(-half + wrap) - odd(-half), 0.0)
    return out


def cell_distances(grid: Grid, xs) -> np.ndarray:
    """Distance from each x to the nearest point of each cell (0 inside)."""
    lo, hi, wrap = _displacement_pieces(grid, xs)
    d = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(np.abs(lo), np.abs(hi)))
    if grid.periodic:
        d = np.where(wrap > 0, np.minimum(d, grid.period / 2.0 - wrap), d)
    return d


def ball_primitive(t: float):
    return lambda u: np.minimum(u, t)


def decay_primitive(t: float, a: float):
    """G(u) = ∫_0^u (1 + s/t)^{-a} ds in closed form."""
    if a == 0:
        return lambda u: np.asarray(u, dtype=float)
    if a == 1:
        return lambda u: t * np.log1p(u / t)
    return lambda u: t * (1.0 - (1.0 + u / t) ** (1.0 - a)) / (a - 1.0)


def cell_ball_mass(grid: Grid, xs, t: float) -> np.ndarray:
    """Ṽ(x, t): ball mass of B(x, t) under the piecewise-constant cell model."""
    overlaps = cell_integrals(grid, xs, ball_primitive(t))
    return overlaps @ grid.density


# ── Doubling geometry ─────────────────────────────────────

def _sample_centers(grid: Grid, cap: float, count: int) -> np.ndarray:
    if grid.periodic:
        candidates = grid.points
    else:
        candidates = grid.points[grid.points <= grid.right_endpoint - cap]
        if len(candidates) == 0:
            candidates = grid.points[:1]
    idx = np.unique(np.linspace(0, len(candidates) - 1, min(count, len(candidates))).round().astype(int))
    return candidates[idx]


def estimate_doubling(grid: Grid, n_centers: int = 16, n_radii: int = 12) -> DoublingConstants:
    """Empirical dimension n̂ and translation exponent D̂.

    n̂ is the sup of log(V(x,λr)/V(x,r))/log λ. D̂ is the slope of the upper
    envelope of log(V(y,r)/V(x,r)) against log(1+ρ/r) over far pairs
    (ρ/r ≥ 3), which separates the exponent from the constant.
    """
    cap = RADIUS_CAP_FRACTION * grid.extent
    r_min = float(grid.widths.min())
    centers = _sample_centers(grid, cap, n_centers)
    radii = np.geomspace(r_min, cap / 2.0, n_radii)
    factors = np.array([1.5, 2.0, 4.0, 8.0])

    n_hat = 0.0
    for lam in factors:
        rs = radii[radii * lam <= cap]
        if len(rs) == 0:
            continue
        ratio = volume(grid, centers[:, None], lam * rs[None, :]) / volume(grid, centers[:, None], rs[None, :])
        n_hat = max(n_hat, float(np.max(np.log(ratio) / np.log(lam))))

    log_s, log_q = [], []
    for r in radii:
        vx = volume(grid, centers, r)
        rho = grid.distance(centers[:, None], centers[None, :])
        q = vx[None, :] / vx[:, None]
        far = rho / r >= 3.0
        log_s.append(np.log1p(rho[far] / r))
        log_q.append(np.log(q[far]))
    log_s = np.concatenate(log_s) if log_s else np.array([])
    log_q = np.concatenate(log_q) if log_q else np.array([])

    D_hat, tos_constant = 0.0, 1.0
    if len(log_s) >= 2 and np.ptp(log_s) > 0:
        bins = np.linspace(log_s.min(), log_s.max(), 9)
        which = np.clip(np.digitize(log_s, bins) - 1, 0, 7)
        env_s, env_q = [], []
        for b in range(8):
            sel = which == b
            if np.any(sel):
                k = np.argmax(log_q[sel])
                env_s.append(log_s[sel][k])
                env_q.append(log_q[sel][k])
        if len(env_s) >= 2:
            slope, intercept = np.polyfit(env_s, env_q, 1)
            D_hat = float(np.clip(slope, 0.0, n_hat))
            tos_constant = float(np.exp(max(intercept, 0.0)))

    plan = {
        "centers": int(len(centers)),
        "radii": [float(radii[0]), float(radii[-1]), int(n_radii)],
        "factors": factors.tolist(),
        "radius_cap": float(cap),
        "far_pair_threshold": 3.0,
    }
    logger.debug("Doubling estimate on %s: n=%.3f D=%.3f", grid.label, n_hat, D_hat)
    return DoublingConstants(n_hat=n_hat, D_hat=D_hat, tos_constant=tos_constant, sampling_plan=plan)


def decay_integral_check(grid: Grid, x: float, t: float, N: float, n_hat: float | None = None) -> DecayIntegral:
    """∫(1+ρ(x,y)/t)^{-N} dμ(y) and its ratio to V(x,t)."""
    if n_hat is None:
        n_hat = estimate_doubling(grid).n_hat
    if N <= n_hat:
        raise ExponentTooSmall(f"decay exponent N={N} must exceed the dimension {n_hat:.3f}")
    if t <= 0:
        raise InvalidDomain(f"scale must be positive, got {t!r}")
    lhs = float((cell_integrals(grid, [x], decay_primitive(t, N)) @ grid.density)[0])
    return DecayIntegral(lhs=lhs, bound_ratio=lhs / volume(grid, x, t))
