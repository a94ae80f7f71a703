"""Monte Carlo checks of Bernstein- and Hoeffding-type tail bounds.

For a stable additive VAR and a Lipschitz functional ``g`` the centred sum
``S_n = sum_t (g(X_t) - E g)`` satisfies::

    P(|S_n| >= z) <= 2 exp(-z^2 / (c1 tau^2 n + c2 tau M z))     (bounded g)
    P(|S_n| >= z) <= 2 exp(-z^2 / (c3 tau^2 n + c4 tau z))       (unbounded g)

with ``tau = ||G||_1``. This module estimates the left-hand side by
simulation and fits the smallest constants that keep the envelope above the
Wilson upper confidence limits of the empirical tails.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .process_sim import (
    AdditiveVarSpec,
    NoiseKind,
    _check_stable,
    custom,
    linear,
)

__all__ = [
    "LipschitzFunctional",
    "clipped_coordinate",
    "weighted_clipped_sum",
    "coordinate",
    "TailExperiment",
    "TailResult",
    "mc_tail",
    "wilson_interval",
    "bernstein_envelope",
    "subexponential_envelope",
    "explicit_constants",
    "EnvelopeFit",
    "EnvelopeInfeasible",
    "fit_envelope",
    "HoeffdingReport",
    "hoeffding_check",
    "n_collapse",
    "tail_design",
    "large_z_slope",
]

WILSON_LEVEL = 0.95
CHUNK_REPS = 20000


class EnvelopeInfeasible(ValueError):
    """No constant on the search grid makes the envelope dominate the data."""


@dataclass(frozen=True, eq=False)
class LipschitzFunctional:
    """``g: R^p -> R`` with ``|g(x) - g(y)| <= G' |x - y|``.

    ``g`` must be vectorised over leading axes: ``(..., p) -> (...)``. The
    declared ``G`` is checked on ``n_pairs`` random point pairs at
    construction; ``sup_bound`` is ``M`` when ``g`` is bounded.
    """

    g: Callable
    G: np.ndarray
    sup_bound: Optional[float] = None
    n_pairs: int = 10_000
    seed: int = 0
    name: str = "g"

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float).ravel()
        if G.size == 0 or np.any(G < 0) or not np.all(np.isfinite(G)):
            raise ValueError("G must be a nonnegative finite vector")
        object.__setattr__(self, "G", G)
        if self.sup_bound is not None and not self.sup_bound >= 0:
            raise ValueError("sup_bound must be nonnegative")
        self._verify()

    @property
    def p(self) -> int:
        return self.G.size

    @property
    def tau(self) -> float:
        return float(self.G.sum())

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.g(np.asarray(x, dtype=float)), dtype=float)

    def _verify(self):
        rng = np.random.default_rng(self.seed)
        # mix of scales so both the flat and the steep parts of g get probed
        scale = 10.0 ** rng.uniform(-2, 1, size=(self.n_pairs, 1))
        x = rng.standard_normal((self.n_pairs, self.p)) * scale
        y = x + rng.standard_normal((self.n_pairs, self.p)) * scale * 10.0 ** rng.uniform(-3, 0, (self.n_pairs, 1))
        gx, gy = self(x), self(y)
        if gx.shape != (self.n_pairs,):
            raise ValueError(f"g must map (..., {self.p}) to (...), got shape {gx.shape}")
        bound = np.abs(x - y) @ self.G
        lhs = np.abs(gx - gy)
        bad = lhs > bound * (1 + 1e-9) + 1e-12
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise ValueError(f"declared Lipschitz coefficients violated: |g(x)-g(y)|={lhs[i]:.6g} "
                             f"> G'|x-y|={bound[i]:.6g}")
        if self.sup_bound is not None:
            worst = float(np.max(np.abs(gx)))
            if worst > self.sup_bound * (1 + 1e-12):
                raise ValueError(f"|g| reaches {worst:.6g} above the declared bound {self.sup_bound}")


@dataclass(frozen=True)
class _Clip:
    k: int
    scale: float
    M: float

    def __call__(self, x):
        return np.clip(x[..., self.k] / self.scale, -self.M, self.M)


@dataclass(frozen=True, eq=False)
class _WeightedClip:
    w: np.ndarray
    M: float

    def __call__(self, x):
        return np.clip(x, -self.M, self.M) @ self.w


@dataclass(frozen=True)
class _Coord:
    k: int

    def __call__(self, x):
        return x[..., self.k]


@dataclass(frozen=True)
class _Scaled:
    fn: Callable
    a: float

    def __call__(self, x):
        return self.a * self.fn(x)


def clipped_coordinate(p: int, k: int, M: float = 1.0, scale: float = 1.0) -> LipschitzFunctional:
    """``g(x) = clip(x_k / scale, -M, M)``; ``G = e_k / scale``, ``||g|| <= M``."""
    if not 0 <= k < p:
        raise IndexError(f"coordinate {k} outside 0..{p - 1}")
    if not (M > 0 and scale > 0):
        raise ValueError("M and scale must be positive")
    G = np.zeros(p)
    G[k] = 1.0 / scale
    return LipschitzFunctional(_Clip(k, scale, M), G, sup_bound=M,
                               name=f"clip(x{k + 1}/{scale:g},{M:g})")


def weighted_clipped_sum(weights: Sequence[float], M: float = 1.0) -> LipschitzFunctional:
    """``g(x) = sum_k w_k clip(x_k, -M, M)``; ``G = |w|``, ``||g|| <= M ||w||_1``."""
    w = np.asarray(weights, dtype=float)
    if not M > 0:
        raise ValueError("M must be positive")
    return LipschitzFunctional(_WeightedClip(w, M), np.abs(w),
                               sup_bound=float(M * np.abs(w).sum()), name="weighted_clip")


def coordinate(p: int, k: int) -> LipschitzFunctional:
    """Unbounded ``g(x) = x_k``, for the sub-exponential envelope."""
    if not 0 <= k < p:
        raise IndexError(f"coordinate {k} outside 0..{p - 1}")
    G = np.zeros(p)
    G[k] = 1.0
    return LipschitzFunctional(_Coord(k), G, name=f"x{k + 1}")


def tail_design(rho: float, noise_scale: float = 1.0, noise_kind=NoiseKind.GAUSSIAN, seed: int = 0) -> AdditiveVarSpec:
    """Two-variable nonlinear design whose Lipschitz matrix has row sums ``rho``.

    ``h1 = rho/2 x1 + rho/2 sin(x2)``, ``h2 = rho/2 tanh(x1) + rho/2 x2``;
    ``rho = 0`` gives i.i.d. noise.
    """
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    if rho == 0:
        return AdditiveVarSpec(2, {}, noise_scale=noise_scale, noise_kind=noise_kind, seed=seed)
    a = rho / 2
    entries = {
        (0, 0): linear(a),
        (0, 1): custom(_Scaled(np.sin, a), a),
        (1, 0): custom(_Scaled(np.tanh, a), a),
        (1, 1): linear(a),
    }
    return AdditiveVarSpec(2, entries, noise_scale=noise_scale, noise_kind=noise_kind, seed=seed)


@dataclass(frozen=True, eq=False)
class TailExperiment:
    spec: AdditiveVarSpec
    functional: LipschitzFunctional
    n: int
    z_grid: np.ndarray
    reps: int = 10_000
    seed: int = 0
    burn_in: int = 500
    pilot_budget: int = 20_000_000
    min_reps: int = 10_000

    def __post_init__(self):
        z = np.asarray(self.z_grid, dtype=float).ravel()
        if z.size == 0 or np.any(z < 0) or np.any(np.diff(z) <= 0):
            raise ValueError("z_grid must be nonnegative and strictly increasing")
        object.__setattr__(self, "z_grid", z)
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.reps < self.min_reps:
            raise ValueError(f"reps must be at least {self.min_reps}")
        if self.functional.p != self.spec.p:
            raise ValueError("functional dimension does not match the specification")


@dataclass(frozen=True, eq=False)
class TailResult:
    """Empirical ``P(|S_n| >= z)`` with 95% Wilson limits.

    ``resolved`` marks grid points with at least 10 exceedances, where the
    relative Monte Carlo error is below about one third.
    """

    z: np.ndarray
    prob: np.ndarray
    counts: np.ndarray
    reps: int
    wilson_lo: np.ndarray
    wilson_hi: np.ndarray
    n: int
    tau: float
    M: Optional[float]
    mean_estimate: float
    sums: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def resolved(self) -> np.ndarray:
        return self.counts >= 10

    @property
    def log_se(self) -> np.ndarray:
        """Delta-method standard error of ``log prob``."""
        p = np.where(self.prob > 0, self.prob, np.nan)
        return np.sqrt((1 - p) / (p * self.reps))


def wilson_interval(counts, reps: int, level: float = WILSON_LEVEL):
    """Wilson score interval for each entry of ``counts`` out of ``reps``."""
    counts = np.asarray(counts, dtype=int)
    lo = np.empty(counts.shape)
    hi = np.empty(counts.shape)
    for i, c in np.ndenumerate(counts):
        ci = stats.binomtest(int(c), reps).proportion_ci(confidence_level=level, method="wilson")
        lo[i], hi[i] = ci.low, ci.high
    return lo, hi


def _run_chains(spec, functional, n, reps, burn_in, seed_seq, centre=0.0):
    """Sums ``sum_t (g(X_t) - centre)`` over ``reps`` independent stationary paths."""
    rng = np.random.default_rng(seed_seq)
    h = spec.transition()
    x = np.zeros((reps, spec.p))
    for _ in range(burn_in):
        x = h(x) + spec.draw_noise(rng, x.shape)
    acc = np.zeros(reps)
    for _ in range(n):
        x = h(x) + spec.draw_noise(rng, x.shape)
        acc += functional(x) - centre
    if not np.all(np.isfinite(acc)):
        raise FloatingPointError("non-finite values in simulated sums")
    return acc


def _chunk_job(args):
    return _run_chains(*args)


def _chunks(reps: int, size: int):
    bounds = list(range(0, reps, size)) + [reps]
    return [b - a for a, b in zip(bounds[:-1], bounds[1:])]


def pilot_mean(spec, functional, length: int, burn_in: int, seed_seq, chains: int = 2000) -> float:
    """Stationary mean of ``g`` from ``chains`` parallel paths totalling ``length`` draws."""
    steps = max(1, length // chains)
    return float(_run_chains(spec, functional, steps, chains, burn_in, seed_seq).sum() / (steps * chains))


def mc_tail(experiment: TailExperiment, workers: int = 1, keep_sums: bool = False) -> TailResult:
    """Empirical two-sided tail of the centred sum at every ``z`` in the grid.

    The centring mean comes from an independent pilot run of
    ``min(10 n reps, pilot_budget)`` draws. Replications run in fixed-size
    chunks with their own seed streams, so results do not depend on
    ``workers``.
    """
    ex = experiment
    rho = _check_stable(ex.spec, 20)
    burn = ex.burn_in
    if rho > 0 and rho**burn >= 1e-8:
        burn = int(math.ceil(math.log(1e-8) / math.log(rho)))
    root = np.random.SeedSequence([ex.seed, ex.n, ex.reps])
    pilot_seq, main_seq = root.spawn(2)
    m_hat = pilot_mean(ex.spec, ex.functional, min(10 * ex.n * ex.reps, ex.pilot_budget), burn, pilot_seq)
    sizes = _chunks(ex.reps, CHUNK_REPS)
    jobs = [(ex.spec, ex.functional, ex.n, size, burn, s, m_hat)
            for size, s in zip(sizes, main_seq.spawn(len(sizes)))]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_job, jobs))
    else:
        parts = [_chunk_job(job) for job in jobs]
    sums = np.concatenate(parts)
    absval = np.sort(np.abs(sums))
    counts = ex.reps - np.searchsorted(absval, ex.z_grid, side="left")
    lo, hi = wilson_interval(counts, ex.reps)
    return TailResult(ex.z_grid.copy(), counts / ex.reps, counts, ex.reps, lo, hi, ex.n,
                      ex.functional.tau, ex.functional.sup_bound, m_hat, sums if keep_sums else None)


def bernstein_envelope(tau, M, n, z_grid, c1, c2) -> np.ndarray:
    """``2 exp(-z^2 / (c1 tau^2 n + c2 tau M z))``."""
    if not (c1 > 0 and c2 >= 0):
        raise ValueError("c1 must be positive and c2 nonnegative")
    z = np.asarray(z_grid, dtype=float)
    return 2.0 * np.exp(-(z**2) / (c1 * tau**2 * n + c2 * tau * M * z))


def subexponential_envelope(tau, n, z_grid, c3, c4) -> np.ndarray:
    """``2 exp(-z^2 / (c3 tau^2 n + c4 tau z))`` for unbounded functionals."""
    return bernstein_envelope(tau, 1.0, n, z_grid, c3, c4)


def explicit_constants(rho: float, mu2: float):
    """``(c1, c2) = (32 e^2 (-rho^2 log rho)^-2 mu2^2, 8 e (-rho^2 log rho)^-1)``."""
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    a = -(rho**2) * math.log(rho)
    return 32.0 * math.e**2 * mu2**2 / a**2, 8.0 * math.e / a


@dataclass(frozen=True, eq=False)
class EnvelopeFit:
    c1: float
    c2: float
    dominated_fraction: float
    n_points: int
    bounded: bool
    c1_grid: np.ndarray = field(repr=False)
    c2_grid: np.ndarray = field(repr=False)


DEFAULT_C1_GRID = np.logspace(-3, 5, 321)
DEFAULT_C2_GRID = np.concatenate([[0.0], np.logspace(-4, 4, 321)])


def _stack(tails):
    z = np.concatenate([t.z for t in tails])
    nn = np.concatenate([np.full(t.z.size, t.n, float) for t in tails])
    hi = np.concatenate([t.wilson_hi for t in tails])
    counts = np.concatenate([t.counts for t in tails])
    keep = z > 0
    return z[keep], nn[keep], hi[keep], counts[keep]


def fit_envelope(
    tails: Sequence[TailResult],
    tau: float,
    M: Optional[float] = None,
    c1_grid: Optional[np.ndarray] = None,
    c2_grid: Optional[np.ndarray] = None,
) -> EnvelopeFit:
    """Tightest grid pair ``(c1, c2)`` whose envelope covers every Wilson upper limit.

    Both constants loosen the envelope, so the feasible set is an up-set of the
    grid; among its members the pair with the smallest summed log-envelope
    over the data points is returned, ties broken towards smaller ``c1``.
    ``M=None`` selects the sub-exponential form (``c3, c4``). When no
    exceedance was observed anywhere the data carry no tail information and
    the grid minimum is returned.
    """
    if len({t.n for t in tails}) < 3:
        raise ValueError("envelope fitting needs tails from at least 3 values of n")
    if not tau > 0:
        raise ValueError("tau must be positive")
    c1_grid = np.sort(np.asarray(DEFAULT_C1_GRID if c1_grid is None else c1_grid, dtype=float))
    c2_grid = np.sort(np.asarray(DEFAULT_C2_GRID if c2_grid is None else c2_grid, dtype=float))
    if c1_grid[0] <= 0 or c2_grid[0] < 0:
        raise ValueError("c1 grid must be positive and c2 grid nonnegative")
    bounded = M is not None
    Mz = M if bounded else 1.0
    z, nn, hi, counts = _stack(tails)
    if not np.any(counts):
        return EnvelopeFit(float(c1_grid[0]), float(c2_grid[0]), 1.0, z.size, bounded, c1_grid, c2_grid)
    # envelope >= hi  <=>  c1 tau^2 n + c2 tau M z >= z^2 / log(2/hi)
    need = z**2 / np.log(2.0 / hi)
    A = tau**2 * nn
    B = tau * Mz * z
    denom = c1_grid[:, None, None] * A + c2_grid[None, :, None] * B  # (c1, c2, point)
    feasible = np.all(denom >= need * (1 - 1e-12), axis=2)
    if not np.any(feasible):
        worst = int(np.argmax(need / (c1_grid[-1] * A + c2_grid[-1] * B)))
        raise EnvelopeInfeasible(
            f"no feasible (c1, c2) on the grid; hardest point n={nn[worst]:g}, z={z[worst]:g}, "
            f"wilson_hi={hi[worst]:.3g} needs c1 tau^2 n + c2 tau M z >= {need[worst]:.4g}")
    score = np.where(feasible, -np.sum(z**2 / denom, axis=2), np.inf)
    i, j = np.unravel_index(np.argmin(score), score.shape)
    c1, c2 = float(c1_grid[i]), float(c2_grid[j])
    env = bernstein_envelope(tau, Mz, nn, z, c1, c2)
    frac = float(np.mean(env >= hi))
    return EnvelopeFit(c1, c2, frac, z.size, bounded, c1_grid, c2_grid)


@dataclass(frozen=True)
class HoeffdingReport:
    c1: float
    feasible: bool
    r_squared: float
    slope: float
    dominated_fraction: float
    classical: float


def hoeffding_check(tails: Sequence[TailResult], functional: LipschitzFunctional,
                    c_max: float = 1e3, c_min: float = 1e-6) -> HoeffdingReport:
    """Largest ``c1`` such that ``2 exp(-c1 z^2 / (tau^2 n))`` covers every Wilson upper limit.

    The constant is searched on ``[c_min, c_max]``; since every Wilson limit
    is below 2 some positive constant always works, so infeasibility means
    the required constant falls under ``c_min``.

    Also regresses ``log prob`` on ``z^2`` over resolved points with
    ``prob <= 1/2`` (the moderate-deviation range) and reports the ``R^2``.
    ``classical`` is the Hoeffding constant ``tau^2 / 2`` for a functional
    with values in ``[-1, 1]``, in the same parameterisation.
    """
    if functional.sup_bound is None or functional.sup_bound > 1:
        raise ValueError("hoeffding_check needs a functional bounded by 1")
    tau = functional.tau
    if tau == 0:
        return HoeffdingReport(c_max, True, math.nan, math.nan, 1.0, 0.0)
    z, nn, hi, counts = _stack(tails)
    x = z**2 / (tau**2 * nn)
    ratio = np.log(2.0 / hi) / x
    c = float(min(c_max, np.min(ratio)))
    if c < c_min:
        i = int(np.argmin(ratio))
        raise EnvelopeInfeasible(f"Hoeffding constant {c:.3g} below c_min={c_min:g}; hardest point "
                                 f"n={nn[i]:g}, z={z[i]:g}, wilson_hi={hi[i]:.3g}")
    frac = float(np.mean(2 * np.exp(-c * x) >= hi * (1 - 1e-12)))
    xs, ys = [], []
    for t in tails:
        sel = t.resolved & (t.prob <= 0.5) & (t.z > 0)
        xs.append(t.z[sel] ** 2 / (tau**2 * t.n))
        ys.append(np.log(t.prob[sel]))
    xs, ys = np.concatenate(xs), np.concatenate(ys)
    if xs.size >= 3:
        fit = stats.linregress(xs, ys)
        r2, slope = float(fit.rvalue**2), float(fit.slope)
    else:
        r2, slope = math.nan, math.nan
    return HoeffdingReport(c, True, r2, slope, frac, tau**2 / 2)


def n_collapse(tails: Sequence[TailResult], u_grid, n_se: float = 2.0):
    """Compare log-tails across ``n`` at common ``u = z / sqrt(n)``.

    Each tail's grid must contain ``u * sqrt(n)``. Returns ``(ok, worst)``
    where ``worst`` is the largest pairwise gap divided by its combined
    standard error over points resolved in every run.
    """
    u_grid = np.asarray(u_grid, dtype=float)
    logs, ses = [], []
    for t in tails:
        target = u_grid * math.sqrt(t.n)
        idx = np.searchsorted(t.z, target)
        if np.any(idx >= t.z.size) or not np.allclose(t.z[np.minimum(idx, t.z.size - 1)], target, rtol=1e-9):
            raise ValueError(f"tail grid for n={t.n} does not contain u*sqrt(n)")
        ok = t.resolved[idx]
        logs.append(np.where(ok, np.log(np.where(ok, t.prob[idx], 1.0)), np.nan))
        ses.append(np.where(ok, t.log_se[idx], np.nan))
    logs, ses = np.array(logs), np.array(ses)
    worst = 0.0
    for a in range(len(tails)):
        for b in range(a + 1, len(tails)):
            ratio = np.abs(logs[a] - logs[b]) / np.sqrt(ses[a] ** 2 + ses[b] ** 2)
            if np.any(np.isfinite(ratio)):
                worst = max(worst, float(np.nanmax(ratio)))
    return worst <= n_se, worst


def large_z_slope(tail: TailResult, fraction: float = 0.5) -> float:
    """Slope of ``log prob`` against ``z`` over the upper ``fraction`` of resolved points.

    A finite negative slope means the tail decays at least exponentially in
    ``z``, the behaviour the ``c4 tau z`` term allows for unbounded ``g``.
    """
    sel = np.flatnonzero(tail.resolved & (tail.z > 0))
    if sel.size < 4:
        raise ValueError("too few resolved tail points to estimate a slope")
    sel = sel[int(math.floor(sel.size * (1 - fraction))):]
    return float(stats.linregress(tail.z[sel], np.log(tail.prob[sel])).slope)
