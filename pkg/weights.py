"""Product Muckenhoupt weights, weighted norms and strong maximal functions.

Separable weights carry per-axis descriptors; their A_p characteristic over
product rectangles is the product of per-axis characteristics, computed from
exact cell integrals of w and w^{-1/(p-1)} (infinite when a cell integral
diverges). Tabulated weights go through 2-D dyadic block sums instead and get
the heuristic divergence flag.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from config import CRITICAL_INDEX_RESOLUTION, DEFAULT_P_GRID, DIVERGENCE_GROWTH
from errors import ExponentTooSmall, GridMismatch, HypothesisViolated, InvalidP
from geometry import Grid, estimate_doubling, volume

logger = logging.getLogger(__name__)

WEIGHT_KINDS = ("constant", "power", "tabulated")


@dataclass(frozen=True, eq=False)
class ProductWeight:
    grids: tuple
    values: np.ndarray
    descriptors: tuple | None = None
    scale: float = 1.0
    label: str = "constant"
    ap_cache: dict = field(default_factory=dict)

    @property
    def separable(self) -> bool:
        return self.descriptors is not None

    def scaled(self, c: float) -> "ProductWeight":
        values = self.values * c
        values.flags.writeable = False
        return ProductWeight(self.grids, values, self.descriptors, self.scale * c, f"{c:g}*{self.label}")

    def describe(self) -> dict:
        out = {"label": self.label}
        if self.separable:
            out["axes"] = [dict(d) for d in self.descriptors]
        if self.scale != 1.0:
            out["scale"] = self.scale
        return out


@dataclass(frozen=True)
class APCharacteristic:
    value: float
    divergent: bool
    family: str
    levels: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "value": self.value if math.isfinite(self.value) else None,
            "divergent": self.divergent,
            "family": self.family,
            "levels": [v if math.isfinite(v) else None for v in self.levels],
        }


@dataclass(frozen=True)
class RatioReport:
    ratio: float
    samples: int
    details: dict = field(default_factory=dict)


# ── Cell integrals of power functions ─────────────────────

def _power_cell_integrals(grid: Grid, b: float, center: float = 0.0) -> np.ndarray:
    """∫_cell |x - center|^b dμ(x) per cell, +inf where it diverges."""
    e0, e1 = grid.edges[:-1], grid.edges[1:]
    if not grid.periodic:
        # measure x^{2λ}dx folds into the exponent; center is 0
        b = b + 2.0 * grid.bessel_lambda
        u0, u1 = e0, e1
    else:
        u0, u1 = e0 - center, e1 - center
    scale = grid.mass_scale

    def prim(r):
        if b == -1.0:
            with np.errstate(divide="ignore"):
                return np.log(r)
        with np.errstate(divide="ignore"):
            return r ** (b + 1.0) / (b + 1.0)

    straddle = (u0 < 0) & (u1 > 0)
    r_lo = np.where(straddle, 0.0, np.minimum(np.abs(u0), np.abs(u1)))
    r_hi = np.maximum(np.abs(u0), np.abs(u1))
    out = np.empty(grid.size)
    singular = r_lo == 0
    if b > -1.0:
        out[:] = np.abs(prim(r_hi) - prim(r_lo))
        out[straddle] = prim(np.abs(u0[straddle])) + prim(u1[straddle])
    else:
        out[~singular] = np.abs(prim(r_hi[~singular]) - prim(r_lo[~singular]))
        out[singular] = np.inf
    return out * scale


def _power_cell_sup_inverse(grid: Grid, a: float, center: float = 0.0) -> np.ndarray:
    """sup over each cell of |x - center|^{-a} (the p = 1 branch)."""
    e0, e1 = grid.edges[:-1], grid.edges[1:]
    u0, u1 = (e0 - center, e1 - center) if grid.periodic else (e0, e1)
    straddle = (u0 < 0) & (u1 > 0)
    r_lo = np.where(straddle, 0.0, np.minimum(np.abs(u0), np.abs(u1)))
    r_hi = np.maximum(np.abs(u0), np.abs(u1))
    if a > 0:
        with np.errstate(divide="ignore"):
            return np.where(r_lo > 0, r_lo ** -a, np.inf)
    if a < 0:
        return r_hi ** -a
    return np.ones(grid.size)


def _axis_values(grid: Grid, descriptor: dict) -> np.ndarray:
    if descriptor["kind"] == "constant":
        return np.ones(grid.size)
    a, center = descriptor["a"], descriptor.get("center", 0.0)
    avg = _power_cell_integrals(grid, a, center) / grid.quad_weights
    # non-integrable cell: value at the half-width point
    fallback = (0.5 * grid.widths) ** a
    return np.where(np.isfinite(avg), avg, fallback)


# ── Construction ──────────────────────────────────────────

def _product(grids, descriptors, label) -> ProductWeight:
    v1 = _axis_values(grids[0], descriptors[0])
    v2 = _axis_values(grids[1], descriptors[1])
    values = np.outer(v1, v2)
    values.flags.writeable = False
    return ProductWeight(tuple(grids), values, tuple(descriptors), label=label)


def make_constant_weight(grids) -> ProductWeight:
    return _product(grids, ({"kind": "constant"}, {"kind": "constant"}), "constant")


def make_power_weight(grids, a1: float, a2: float, center=(0.0, 0.0)) -> ProductWeight:
    """w(x₁,x₂) = |x₁|^{a₁}|x₂|^{a₂}, sampled as cell averages."""
    descriptors = tuple(
        {"kind": "constant"} if a == 0 else {"kind": "power", "a": float(a), "center": float(c)}
        for a, c in zip((a1, a2), center)
    )
    return _product(grids, descriptors, f"power({a1:g},{a2:g})")


def make_tabulated_weight(grids, values) -> ProductWeight:
    values = np.array(values, dtype=float)
    if values.shape != (grids[0].size, grids[1].size):
        raise GridMismatch(f"weight table has shape {values.shape}, grids need {(grids[0].size, grids[1].size)}")
    if np.any(~(values > 0)):
        raise ValueError("tabulated weight values must be strictly positive")
    values.flags.writeable = False
    return ProductWeight(tuple(grids), values, None, label="tabulated")


def make_weight(grids, spec: dict) -> ProductWeight:
    """Weight from a config descriptor ``{kind: constant}`` or ``{kind: power, a1, a2}``."""
    kind = spec.get("kind")
    if kind == "constant":
        return make_constant_weight(grids)
    if kind == "power":
        return make_power_weight(grids, spec.get("a1", 0.0), spec.get("a2", 0.0))
    raise ValueError(f"unknown weight kind {kind!r}")


# ── A_p characteristic ────────────────────────────────────

def _interval_sums(cell_values: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Sums of ``cell_values`` over aligned blocks of ``size`` cells; inf-safe."""
    n_blocks = len(cell_values) // size
    blocks = cell_values[: n_blocks * size].reshape(n_blocks, size)
    infinite = np.any(np.isinf(blocks), axis=1)
    sums = np.where(infinite, np.inf, np.sum(np.where(np.isinf(blocks), 0.0, blocks), axis=1))
    return sums, blocks


def _levels(n: int) -> list[int]:
    return [2 ** l for l in range(int(math.floor(math.log2(n))) + 1)]


def _axis_characteristic(grid: Grid, descriptor: dict, p: float) -> list[float]:
    """Per-level sup over aligned dyadic blocks (level 0 = single cells)."""
    if descriptor["kind"] == "constant":
        return [1.0 for _ in _levels(grid.size)]
    a, center = descriptor["a"], descriptor.get("center", 0.0)
    mass = grid.quad_weights
    w_int = _power_cell_integrals(grid, a, center)
    if p > 1:
        dual_int = _power_cell_integrals(grid, -a / (p - 1.0), center)
    else:
        dual_sup = _power_cell_sup_inverse(grid, a, center)
    sups = []
    for size in _levels(grid.size):
        w_sum, _ = _interval_sums(w_int, size)
        m_sum, _ = _interval_sums(mass, size)
        with np.errstate(invalid="ignore", over="ignore"):
            if p > 1:
                d_sum, _ = _interval_sums(dual_int, size)
                q = (w_sum / m_sum) * (d_sum / m_sum) ** (p - 1.0)
            else:
                _, blocks = _interval_sums(dual_sup, size)
                q = (w_sum / m_sum) * np.max(blocks, axis=1)
        sups.append(float(np.max(q)))
    return sups


def _tabulated_characteristic(weight: ProductWeight, p: float) -> list[float]:
    """Running sup over dyadic rectangles, finest side admitted growing per step."""
    g1, g2 = weight.grids
    w = weight.values
    mass = np.outer(g1.quad_weights, g2.quad_weights)
    dual = w ** (-1.0 / (p - 1.0)) if p > 1 else 1.0 / w
    sizes1, sizes2 = _levels(g1.size), _levels(g2.size)
    depth = min(len(sizes1), len(sizes2))
    per_pair = {}
    for i, s1 in enumerate(sizes1):
        for j, s2 in enumerate(sizes2):
            n1, n2 = g1.size // s1, g2.size // s2

            def blocks(a):
                return a[: n1 * s1, : n2 * s2].reshape(n1, s1, n2, s2)

            m = blocks(mass).sum(axis=(1, 3))
            avg_w = blocks(w * mass).sum(axis=(1, 3)) / m
            if p > 1:
                q = avg_w * (blocks(dual * mass).sum(axis=(1, 3)) / m) ** (p - 1.0)
            else:
                q = avg_w * blocks(dual).max(axis=(1, 3))
            per_pair[(i, j)] = float(np.max(q))
    running = []
    for k in range(depth):
        finest = depth - 1 - k
        admitted = [v for (i, j), v in per_pair.items() if i >= finest and j >= finest]
        running.append(max(admitted))
    return running


def _growth_flag(levels: list[float]) -> bool:
    if len(levels) < 3:
        return False
    a, b, c = levels[-3:]
    return a > 0 and b > DIVERGENCE_GROWTH * a and c > DIVERGENCE_GROWTH * b


def ap_characteristic(weight: ProductWeight, p: float, rectangle_family: str = "dyadic") -> APCharacteristic:
    """Supremum of the product A_p quantity over the rectangle family."""
    if not p >= 1:
        raise InvalidP(f"A_p needs p >= 1, got {p!r}")
    key = (float(p), rectangle_family)
    if key in weight.ap_cache:
        return weight.ap_cache[key]

    if weight.separable:
        axis_levels = [_axis_characteristic(g, d, p) for g, d in zip(weight.grids, weight.descriptors)]
        axis_sup = [max(levels) for levels in axis_levels]
        value = axis_sup[0] * axis_sup[1]
        depth = min(len(levels) for levels in axis_levels)
        running = [max(axis_levels[0][depth - 1 - k:]) * max(axis_levels[1][depth - 1 - k:]) for k in range(depth)]
        divergent = not math.isfinite(value) or _growth_flag(running)
        result = APCharacteristic(value=float(value), divergent=divergent, family=rectangle_family,
                                  levels=[float(v) for v in running])
    else:
        running = _tabulated_characteristic(weight, p)
        result = APCharacteristic(value=float(running[-1]), divergent=_growth_flag(running),
                                  family=rectangle_family, levels=running)
    weight.ap_cache[key] = result
    return result


def critical_index(weight: ProductWeight, p_grid=None) -> float:
    """Smallest p with a finite characteristic, bisected to the configured resolution."""
    p_grid = sorted(p_grid or [1.0] + DEFAULT_P_GRID)

    def finite(p):
        return not ap_characteristic(weight, p).divergent

    previous = None
    for p in p_grid:
        if finite(p):
            if previous is None:
                return float(p)
            lo, hi = previous, p
            while hi - lo > CRITICAL_INDEX_RESOLUTION:
                mid = 0.5 * (lo + hi)
                if finite(mid):
                    hi = mid
                else:
                    lo = mid
            return float(hi)
        previous = p
    logger.warning("Weight %s is divergent at every p in %s", weight.label, p_grid)
    return math.inf


# ── Norms ─────────────────────────────────────────────────

def weighted_lp_norm(field, weight: ProductWeight, p: float) -> float:
    """(ΣΣ |f|^p · w · μ₁⊗μ₂)^{1/p}."""
    if not p > 0:
        raise InvalidP(f"L^p needs p > 0, got {p!r}")
    f = np.abs(np.asarray(field))
    g1, g2 = weight.grids
    if f.shape != weight.values.shape:
        raise GridMismatch(f"field shape {f.shape} does not match weight grid {weight.values.shape}")
    mass = np.outer(g1.quad_weights, g2.quad_weights)
    return float(np.sum(f ** p * weight.values * mass) ** (1.0 / p))


def sequence_norm(sequence, weight: ProductWeight, p: float, q: float) -> float:
    """‖{f_j}‖ in L^p_w(ℓ^q); the sequence index is the leading axis."""
    seq = np.abs(np.asarray(sequence))
    seq = seq.reshape(-1, *weight.values.shape)
    inner = np.max(seq, axis=0) if math.isinf(q) else np.sum(seq ** q, axis=0) ** (1.0 / q)
    return weighted_lp_norm(inner, weight, p)


# ── Strong maximal function ───────────────────────────────

def _interval_family(n: int) -> np.ndarray:
    """All intervals of 2^ℓ cells at every offset, clipped to [0, n)."""
    out = set()
    for size in _levels(n):
        for s in range(-size + 1, n):
            out.add((max(s, 0), min(s + size, n)))
    return np.array(sorted(out))


def strong_maximal(field, grids) -> np.ndarray:
    """M_s f: sup of μ-averages of |f| over rectangles of the family containing each point."""
    f = np.abs(np.asarray(field))
    g1, g2 = grids
    if f.shape != (g1.size, g2.size):
        raise GridMismatch(f"field shape {f.shape} does not match grids {(g1.size, g2.size)}")
    fam1, fam2 = _interval_family(g1.size), _interval_family(g2.size)
    m1 = np.concatenate([[0.0], np.cumsum(g1.quad_weights)])
    m2 = np.concatenate([[0.0], np.cumsum(g2.quad_weights)])
    mass = f * np.outer(g1.quad_weights, g2.quad_weights)
    P = np.zeros((g1.size + 1, g2.size + 1))
    P[1:, 1:] = mass.cumsum(axis=0).cumsum(axis=1)

    s1, e1 = fam1[:, 0], fam1[:, 1]
    s2, e2 = fam2[:, 0], fam2[:, 1]
    sums = (P[e1][:, e2] - P[s1][:, e2] - P[e1][:, s2] + P[s1][:, s2])
    avg = sums / np.outer(m1[e1] - m1[s1], m2[e2] - m2[s2])

    idx1, idx2 = np.arange(g1.size), np.arange(g2.size)
    contains1 = (s1[None, :] <= idx1[:, None]) & (idx1[:, None] < e1[None, :])
    contains2 = (s2[None, :] <= idx2[:, None]) & (idx2[:, None] < e2[None, :])
    partial = np.empty((g1.size, len(fam2)))
    for i in range(g1.size):
        partial[i] = avg[contains1[i]].max(axis=0)
    out = np.empty_like(f, dtype=float)
    for j in range(g2.size):
        out[:, j] = partial[:, contains2[j]].max(axis=1)
    return out


def smfx_domination_check(field, grids, scales, N1: float, N2: float, doubling=None,
                          n_points: int = 8) -> RatioReport:
    """Empirical C in ∫∫|f(y)| Π V(y_i,t_i)^{-1}(1+ρ_i/t_i)^{-N_i} dμ(y) <= C·M_s f(x)."""
    doubling = doubling or [estimate_doubling(g) for g in grids]
    for i, (N, d) in enumerate(zip((N1, N2), doubling), start=1):
        if N <= d.n_hat + d.D_hat:
            raise ExponentTooSmall(f"axis {i}: N={N} must exceed n+D={d.n_hat + d.D_hat:.3f}")
    f = np.abs(np.asarray(field))
    maximal = strong_maximal(f, grids)
    picks = [np.unique(np.linspace(0, g.size - 1, n_points).round().astype(int)) for g in grids]

    def kernel(grid, idx, t, N):
        rho = grid.distance(grid.points[idx][:, None], grid.points[None, :])
        return grid.quad_weights[None, :] / (volume(grid, grid.points, t)[None, :] * (1.0 + rho / t) ** N)

    worst, count = 0.0, 0
    for t1, t2 in scales:
        K1 = kernel(grids[0], picks[0], t1, N1)
        K2 = kernel(grids[1], picks[1], t2, N2)
        lhs = K1 @ f @ K2.T
        rhs = maximal[np.ix_(picks[0], picks[1])]
        ok = rhs > 0
        if np.any(ok):
            worst = max(worst, float(np.max(lhs[ok] / rhs[ok])))
        count += int(np.count_nonzero(ok))
    return RatioReport(ratio=worst, samples=count, details={"N": [N1, N2], "scales": [list(s) for s in scales]})


def fs_maximal_check(fields, weight: ProductWeight, p: float, q: float, q_w: float | None = None) -> RatioReport:
    """‖{M_s f_j}‖_{L^p_w(ℓ^q)} / ‖{f_j}‖_{L^p_w(ℓ^q)}."""
    if not 1 < p < math.inf:
        raise InvalidP(f"vector-valued maximal bound needs 1 < p < inf, got {p!r}")
    if not q > 1:
        raise InvalidP(f"vector-valued maximal bound needs q > 1, got {q!r}")
    q_w = critical_index(weight) if q_w is None else q_w
    if p <= q_w:
        raise HypothesisViolated(f"p={p} must exceed the critical index q_w={q_w:.3f}")
    fields = np.abs(np.asarray(fields)).reshape(-1, *weight.values.shape)
    maximal = np.stack([strong_maximal(f, weight.grids) for f in fields])
    denom = sequence_norm(fields, weight, p, q)
    ratio = sequence_norm(maximal, weight, p, q) / denom if denom > 0 else math.nan
    return RatioReport(ratio=float(ratio), samples=len(fields), details={"p": p, "q": q, "q_w": q_w})
