"""Product square functionals over a discretized scale ladder.

A ``ScaleField`` holds Φ₁(t₁√L₁)⊗Φ₂(t₂√L₂)f lazily: ``slab(i1)`` returns all
t₂ values for one t₁ as an array (n_t2, N1, N2). Every functional reduces
slab by slab, in t₁ order, so results do not depend on the worker count.

Cone integrals treat each slab as piecewise constant on grid cells:

* area S: |B(x,t) ∩ cell| · density / Ṽ(x,t)
* g*: ∫_cell (1+ρ(x,z)/t)^{-nλ} dz · density / Ṽ(x,t)
* Peetre: |v(y)| / (1 + dist(x, cell_y)/t)^λ, maximized over cells

with Ṽ the cell-model ball mass, so S ≤ 2^{(n₁λ₁+n₂λ₂)/2} g* and
S ≤ 2^{λ₁+λ₂} (vertical Peetre norm) hold exactly on the grid.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from errors import EmptyRange, GridMismatch, NonpositiveLambda, NonpositiveSigma
from geometry import Grid, ball_primitive, cell_ball_mass, cell_distances, cell_integrals, decay_primitive
from multipliers import profile_square_integral
from spectral_models import SpectralModel, multiplier_symbols

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ScaleLadder:
    j_min: int
    j_max: int
    samples_per_octave: int
    t: np.ndarray
    log_weights: np.ndarray

    @property
    def size(self) -> int:
        return len(self.t)

    def describe(self) -> dict:
        return {"j_min": self.j_min, "j_max": self.j_max, "samples_per_octave": self.samples_per_octave}


def make_ladder(j_min: int, j_max: int, samples_per_octave: int) -> ScaleLadder:
    """t = 2^{-j}·t' with t' log-midpoints of [1, 2]; weights realize dt/t."""
    if j_min > j_max:
        raise EmptyRange(f"empty ladder: j_min={j_min} > j_max={j_max}")
    if samples_per_octave < 1:
        raise EmptyRange(f"samples_per_octave must be >= 1, got {samples_per_octave}")
    s = samples_per_octave
    inner = 2.0 ** ((np.arange(s) + 0.5) / s)
    js = np.arange(j_max, j_min - 1, -1)
    t = (2.0 ** -js[:, None] * inner[None, :]).ravel()
    weights = np.full(t.size, math.log(2.0) / s)
    for a in (t, weights):
        a.flags.writeable = False
    return ScaleLadder(int(j_min), int(j_max), int(s), t, weights)


def ladder_tail_energy(profile, ladder: ScaleLadder, frequencies) -> float:
    """Worst relative gap between the ladder quadrature of ∫|Φ(tξ)|²dt/t and its exact value."""
    xi = np.asarray(frequencies, dtype=float)
    xi = xi[xi > 0]
    if xi.size == 0:
        return 0.0
    total = profile_square_integral(profile)
    if not math.isfinite(total) or total == 0:
        return math.inf
    captured = (np.abs(profile(ladder.t[:, None] * xi[None, :])) ** 2 * ladder.log_weights[:, None]).sum(axis=0)
    return float(np.max(np.abs(1.0 - captured / total)))


class ScaleField:
    """Lazy 4-D field values[t₁][t₂][x₁][x₂]."""

    def __init__(self, models, ladders, slab_fn: Callable[[int], np.ndarray], labels=(), threads: int = 1):
        self.models = tuple(models)
        self.ladders = tuple(ladders)
        self._slab_fn = slab_fn
        self.labels = tuple(labels)
        self.threads = max(1, int(threads))

    @property
    def grids(self) -> tuple[Grid, Grid]:
        return self.models[0].grid, self.models[1].grid

    @property
    def shape(self) -> tuple:
        return (self.ladders[0].size, self.ladders[1].size, self.grids[0].size, self.grids[1].size)

    def slab(self, i1: int) -> np.ndarray:
        return self._slab_fn(i1)

    def map_slabs(self, fn: Callable[[int, np.ndarray], object]) -> list:
        """fn(i1, slab) for every t₁, results in t₁ order."""
        def run(i1):
            return fn(i1, self.slab(i1))

        indices = range(self.ladders[0].size)
        if self.threads == 1:
            return [run(i) for i in indices]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(run, indices))

    @property
    def values(self) -> np.ndarray:
        return np.stack(self.map_slabs(lambda i1, slab: slab))

    def materialize(self) -> "ScaleField":
        """Same field backed by stored slabs, for fields read more than once."""
        values = self.values
        return ScaleField(self.models, self.ladders, lambda i1: values[i1], labels=self.labels, threads=self.threads)

    def derive(self, transform: Callable[[int, np.ndarray], np.ndarray], label: str) -> "ScaleField":
        return ScaleField(self.models, self.ladders, lambda i1: transform(i1, self.slab(i1)),
                          labels=self.labels + (label,), threads=self.threads)


def multiplier_field(model1: SpectralModel, model2: SpectralModel, profile1, profile2, ladder: ScaleLadder,
                     f, ladder2: ScaleLadder | None = None, threads: int = 1) -> ScaleField:
    f = np.asarray(f)
    if f.shape != (model1.grid.size, model2.grid.size):
        raise GridMismatch(f"field shape {f.shape} does not match grids {(model1.grid.size, model2.grid.size)}")
    ladder2 = ladder2 or ladder
    sym1 = multiplier_symbols(model1, profile1, ladder.t)
    sym2 = multiplier_symbols(model2, profile2, ladder2.t)
    # axis 2 for every t₂ once, then axis 1 per slab
    axis2 = model2.apply_symbol(sym2[:, None, :], f, axis=1)
    coeffs = model1.forward(axis2, axis=1)
    real = np.isrealobj(f)

    def slab(i1):
        out = model1.inverse(sym1[i1][None, :, None] * coeffs, axis=1)
        return out.real if real else out

    labels = (getattr(profile1, "label", "custom"), getattr(profile2, "label", "custom"))
    return ScaleField((model1, model2), (ladder, ladder2), slab, labels=labels, threads=threads)


def _square_reduce(sf: ScaleField, contract: Callable[[int, np.ndarray], np.ndarray]) -> np.ndarray:
    """sqrt(Σ_{t₁,t₂} lw₁·lw₂·contract(|slab|²))."""
    lw1, lw2 = sf.ladders[0].log_weights, sf.ladders[1].log_weights

    def one(i1, slab):
        energy = np.abs(slab) ** 2 * lw2[:, None, None]
        return lw1[i1] * contract(i1, energy)

    total = np.zeros(sf.shape[2:])
    for part in sf.map_slabs(one):
        total += part
    return np.sqrt(total)


def g_function(sf: ScaleField) -> np.ndarray:
    return _square_reduce(sf, lambda i1, energy: energy.sum(axis=0))


def vertical_peetre_norm(peetre_sf: ScaleField) -> np.ndarray:
    return g_function(peetre_sf)


def _averaging_kernels(grid: Grid, ts, primitive_for) -> np.ndarray:
    """Stack K[t][x, y] = density_y · ∫_{cell_y} k_t(ρ(x,z)) dz / Ṽ(x, t)."""
    out = np.empty((len(ts), grid.size, grid.size))
    for i, t in enumerate(ts):
        mass = cell_integrals(grid, grid.points, primitive_for(t)) * grid.density[None, :]
        out[i] = mass / cell_ball_mass(grid, grid.points, t)[:, None]
    return out


def _cone_reduce(sf: ScaleField, K1: np.ndarray, K2: np.ndarray) -> np.ndarray:
    def contract(i1, energy):
        step = np.matmul(K1[i1], energy)
        return np.tensordot(step, K2, axes=([0, 2], [0, 2]))
    return _square_reduce(sf, contract)


def area_function(sf: ScaleField) -> np.ndarray:
    g1, g2 = sf.grids
    K1 = _averaging_kernels(g1, sf.ladders[0].t, ball_primitive)
    K2 = _averaging_kernels(g2, sf.ladders[1].t, ball_primitive)
    return _cone_reduce(sf, K1, K2)


def _check_lambdas(*lambdas):
    for lam in lambdas:
        if not lam > 0:
            raise NonpositiveLambda(f"exponent must be positive, got {lam!r}")


def gstar_function(sf: ScaleField, lambda1: float, lambda2: float) -> np.ndarray:
    """g*_{λ₁,λ₂} with off-cone weight (1+ρ/t)^{-nλ}, n the grid's dimension."""
    _check_lambdas(lambda1, lambda2)
    g1, g2 = sf.grids
    a1, a2 = g1.dimension * lambda1, g2.dimension * lambda2
    K1 = _averaging_kernels(g1, sf.ladders[0].t, lambda t: decay_primitive(t, a1))
    K2 = _averaging_kernels(g2, sf.ladders[1].t, lambda t: decay_primitive(t, a2))
    return _cone_reduce(sf, K1, K2)


def _peetre_kernels(grid: Grid, ts, lam: float) -> np.ndarray:
    d = cell_distances(grid, grid.points)
    return np.stack([(1.0 + d / t) ** -lam for t in ts])


def _max_contract(P1: np.ndarray, P2: np.ndarray, u: np.ndarray) -> np.ndarray:
    """max_{y₁,y₂} P1[x₁,y₁]·P2[t,x₂,y₂]·u[t,y₁,y₂], one axis at a time."""
    step = np.empty_like(u)
    for x1 in range(P1.shape[0]):
        step[:, x1, :] = np.max(P1[x1][None, :, None] * u, axis=1)
    out = np.empty_like(u)
    for x2 in range(P2.shape[1]):
        out[:, :, x2] = np.max(P2[:, x2, None, :] * step, axis=2)
    return out


def peetre_field(sf: ScaleField, lambda1: float, lambda2: float) -> ScaleField:
    """Scale-wise sup of |v(y)| / Π(1 + ρ(x_i, y_i)/t_i)^{λ_i}."""
    _check_lambdas(lambda1, lambda2)
    g1, g2 = sf.grids
    P1 = _peetre_kernels(g1, sf.ladders[0].t, lambda1)
    P2 = _peetre_kernels(g2, sf.ladders[1].t, lambda2)
    return sf.derive(lambda i1, slab: _max_contract(P1[i1], P2, np.abs(slab)),
                     f"peetre({lambda1:g},{lambda2:g})")


def ry_convolve(sequence, sigma1: float, sigma2: float) -> np.ndarray:
    """h_{j₁,j₂} = Σ_{k₁,k₂} 2^{-|k₁-j₁|σ₁} 2^{-|k₂-j₂|σ₂} g_{k₁,k₂}.

    ``sequence`` is indexed by (j₁, j₂) on its first two axes; any trailing
    axes (grid points) are carried along.
    """
    for sigma in (sigma1, sigma2):
        if not sigma > 0:
            raise NonpositiveSigma(f"sigma must be positive, got {sigma!r}")
    g = np.asarray(sequence, dtype=float)

    def decay(n, sigma):
        m = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
        with np.errstate(invalid="ignore", over="ignore"):
            return np.where(m == 0, 1.0, 2.0 ** (-m * sigma))

    C1, C2 = decay(g.shape[0], sigma1), decay(g.shape[1], sigma2)
    return np.einsum("ab,cd,bd...->ac...", C1, C2, g)


def ry_bound(sigma1: float, sigma2: float) -> float:
    """(Σ_m 2^{-|m|σ₁})(Σ_m 2^{-|m|σ₂}), the ℓ²-type Young constant."""
    return math.prod((1.0 + 2.0 ** -s) / (1.0 - 2.0 ** -s) for s in (sigma1, sigma2))
