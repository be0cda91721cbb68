"""Sums of exp(chi-square/2) draws and their alpha=1 stable limit.

A draw delta = exp(eta/2) with eta ~ chi-square(c) has tail P(delta > x)
proportional to a slowly varying function over x, so sums of m draws, centered
by m*b_m and scaled by a_m, approach a totally skewed alpha=1 stable law.
This module provides the sampler, the norming constants, a reference CDF for
the limit computed by direct numeric integration, and tail diagnostics
(Kolmogorov-Smirnov distance, Hill tail index, diverging-mean check).

The limit of the normalized sums is not the unit S(1,1,0) law itself but its
affine image with scale pi/2 and location 1 - euler_gamma + log(pi/2); see
`LIMIT_SCALE`, `LIMIT_LOCATION`, and `limit_reference_cdf`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import InputError, QuadratureError
from .experiments import SyntheticConfig, _draw_seed_pair, overfit_class_experiment

EULER_GAMMA = 0.5772156649015329
LIMIT_SCALE = math.pi / 2
LIMIT_LOCATION = 1.0 - EULER_GAMMA + math.log(math.pi / 2)


@dataclass(frozen=True)
class StableSimConfig:
    """Replicated sums of m draws of exp(chi-square(c)/2)."""

    c: int
    m: int
    replicates: int
    seed: int = 0

    def __post_init__(self):
        if self.c < 1:
            raise InputError(f"degrees of freedom c must be at least 1, got {self.c}")
        if self.m < 2:
            raise InputError(f"need at least 2 summands, got m={self.m}")
        if self.replicates < 1:
            raise InputError(f"need at least one replicate, got {self.replicates}")


def sample_delta(config: StableSimConfig, rng: np.random.Generator) -> np.ndarray:
    """m draws of exp(eta/2), eta ~ chi-square(c) via Gamma(c/2, scale 2)."""
    return np.exp(0.5 * rng.gamma(config.c / 2.0, 2.0, size=config.m))


@dataclass(frozen=True)
class NormingConstants:
    a_m: float
    b_m: float


def norming_constants(m: float, c: int) -> NormingConstants:
    """Scale a_m = m (log m)^(c/2-1) / Gamma(c/2) and centering b_m.

    b_m = (log a_m)^(c/2) / Gamma(c/2 + 1) equals the truncated mean
    E[delta; delta <= a_m] exactly.  Both formulas are evaluated as direct
    powers, which stay inside double range for any representable m and keep
    the c=2 collapse (a_m = m, b_m = log m) bit-exact.
    """
    if m < 2:
        raise InputError(f"norming constants need m >= 2, got {m}")
    if c < 1:
        raise InputError(f"degrees of freedom c must be at least 1, got {c}")
    a_m = m * math.log(m) ** (c / 2.0 - 1.0) / math.gamma(c / 2.0)
    if a_m <= 1.0:
        raise InputError(
            f"a_m = {a_m:.4g} <= 1 at m={m}, c={c}; the centering "
            f"(log a_m)^(c/2) is undefined this early in the sequence")
    b_m = math.log(a_m) ** (c / 2.0) / math.gamma(c / 2.0 + 1.0)
    return NormingConstants(a_m=a_m, b_m=b_m)


def normalize_total(total: float, m: int, constants: NormingConstants) -> float:
    return (total - m * constants.b_m) / constants.a_m


def normalized_sums(config: StableSimConfig) -> np.ndarray:
    """One normalized sum per replicate, each from its own counter-keyed rng.

    Replicate r uses the generator seeded by (seed, spawn key r), so the
    output is identical no matter how replicates would be scheduled.
    """
    constants = norming_constants(config.m, config.c)
    out = np.empty(config.replicates)
    for r in range(config.replicates):
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(r,)))
        out[r] = normalize_total(float(sample_delta(config, rng).sum()),
                                 config.m, constants)
    return out


def _nolan_h(x: float, beta: float):
    # exponent of the inner exponential in the alpha=1 spectral integral
    log_2_pi = math.log(2.0 / math.pi)

    def h(theta: float) -> float:
        half_plus = math.pi / 2 + beta * theta
        return (-math.pi * x / (2.0 * beta) + log_2_pi + math.log(half_plus)
                - math.log(math.cos(theta)) + half_plus * math.tan(theta) / beta)

    return h


def stable_cdf(x: float, alpha: float = 1.0, beta: float = 1.0) -> float:
    """CDF of the unit-scale, zero-location alpha=1 stable law.

    Only the alpha=1 slice is implemented, through its dedicated spectral
    integral (the parameterization carrying the alpha=1 log correction, in
    which S0 and S1 agree at unit scale).  beta=0 is the analytic Cauchy.
    The integral is split at the integrand's transition point and must reach
    absolute tolerance 1e-6, else a numeric error carrying the estimate is
    raised.
    """
    if alpha != 1.0:
        raise InputError(f"only the alpha = 1 slice is implemented, got {alpha}")
    if not -1.0 <= beta <= 1.0:
        raise InputError(f"skewness beta must lie in [-1, 1], got {beta}")
    x = float(x)
    if beta == 0.0:
        return 0.5 + math.atan(x) / math.pi
    if beta < 0.0:
        return 1.0 - stable_cdf(-x, 1.0, -beta)

    # far tails: first-order power asymptote on the right, and for beta=1 a
    # double-exponential left tail that underflows to exactly zero
    if x > 1e6:
        return 1.0 - (1.0 + beta) / (math.pi * x)
    if x < -1e6:
        return (1.0 - beta) / (math.pi * (-x))
    if beta == 1.0 and -math.pi * x / 2.0 + math.log(2.0 / math.pi) - 1.0 > 45.0:
        return 0.0

    h = _nolan_h(x, beta)
    lo = -math.pi / 2 + 1e-9
    hi = math.pi / 2 - 1e-9

    def integrand(theta: float) -> float:
        value = h(theta)
        if value > 700.0:
            return 0.0
        inner = math.exp(value)
        return math.exp(-inner) if inner < 745.0 else 0.0

    points = None
    if h(lo) < 0.0:
        upper = None
        for j in range(1, 16):
            candidate = math.pi / 2 - 10.0 ** (-j)
            if h(candidate) > 0.0:
                upper = candidate
                break
        if upper is not None:
            points = [brentq(h, lo, upper, xtol=1e-13)]

    result = quad(integrand, lo, hi, points=points, limit=300,
                  epsabs=1e-10, epsrel=1e-10, full_output=1)
    value, abserr = result[0], result[1]
    estimate = min(max(value / math.pi, 0.0), 1.0)
    if len(result) > 3 or abserr / math.pi > 1e-6:
        raise QuadratureError(
            f"stable CDF integral did not reach tolerance at x={x}, "
            f"beta={beta} (error estimate {abserr / math.pi:.2e})",
            estimate=estimate)
    return estimate


def limit_reference_cdf(x: float, beta: float = 1.0) -> float:
    """CDF of the limit of the normalized sums.

    The affine correction is applied before the unit stable CDF: the limit
    has scale pi/2 and location 1 - euler_gamma + log(pi/2) relative to
    S(1, beta, 0).  beta=0 gives the Cauchy comparison variant kept for
    reporting alongside the totally skewed law.
    """
    return stable_cdf((x - LIMIT_LOCATION) / LIMIT_SCALE, 1.0, beta)


class TabulatedCdf:
    """A CDF tabulated on an arctan-warped grid, evaluated by interpolation.

    The warp u = arctan(x) spreads the grid over the body and both tails at
    once.  Beyond the grid the right tail falls back to the first-order
    power asymptote when a tail weight is given, else to the edge values.
    Tabulated values are clipped monotone, so interpolation preserves CDF
    monotonicity.
    """

    def __init__(self, fn, points: int = 2001, right_tail_weight: float | None = None):
        if points < 16:
            raise InputError(f"tabulation needs at least 16 points, got {points}")
        self._u = np.linspace(-math.pi / 2 + 1e-5, math.pi / 2 - 1e-5, points)
        grid = np.tan(self._u)
        vals = np.array([fn(g) for g in grid])
        self._vals = np.maximum.accumulate(np.clip(vals, 0.0, 1.0))
        self._x_max = grid[-1]
        self._tail = right_tail_weight

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(np.arctan(x), self._u, self._vals)
        if self._tail is not None:
            far = x > self._x_max
            if np.any(far):
                out = np.where(far, 1.0 - self._tail / x, out)
        return out if out.ndim else float(out)


def tabulated_limit_reference(beta: float = 1.0, points: int = 2001):
    """Vectorized limit-law CDF for KS use, tabulated once."""
    table = TabulatedCdf(lambda z: stable_cdf(z, 1.0, beta), points=points,
                         right_tail_weight=(1.0 + beta) / math.pi)

    def cdf(x):
        return table((np.asarray(x, dtype=float) - LIMIT_LOCATION) / LIMIT_SCALE)

    return cdf


def ks_distance(samples, cdf) -> float:
    """Two-sided Kolmogorov-Smirnov distance of samples from a CDF callable."""
    s = np.sort(np.asarray(samples, dtype=float))
    if s.size == 0:
        raise InputError("KS distance needs at least one sample")
    values = np.asarray(cdf(s), dtype=float)
    if values.shape != s.shape:
        values = np.array([float(cdf(v)) for v in s])
    ranks = np.arange(1, s.size + 1) / s.size
    return float(max(np.max(ranks - values), np.max(values - (ranks - 1 / s.size))))


def ks_trend(c: int, m_grid, repetitions: int, replicates: int, seed: int = 0,
             beta: float = 1.0, points: int = 2001) -> np.ndarray:
    """Median KS distance to the limit law at each m, over repetitions.

    Repetition j at grid position i draws its replicates under spawn key
    (i, j), so trends are reproducible and repetitions independent.
    """
    if repetitions < 1:
        raise InputError(f"need at least one repetition, got {repetitions}")
    reference = tabulated_limit_reference(beta=beta, points=points)
    medians = np.empty(len(tuple(m_grid)))
    for i, m in enumerate(m_grid):
        distances = []
        for j in range(repetitions):
            rep_seed, _ = _draw_seed_pair(seed, (i, j))
            cfg = StableSimConfig(c=c, m=int(m), replicates=replicates, seed=rep_seed)
            distances.append(ks_distance(normalized_sums(cfg), reference))
        medians[i] = np.median(distances)
    return medians


def hill_tail_index(samples, k_frac: float = 0.4) -> float:
    """Reciprocal Hill estimator of the tail index over the top order stats.

    Uses k = ceil(m^k_frac) upper order statistics; a heavier tail gives a
    smaller index, and these sums sit at index 1.
    """
    s = np.asarray(samples, dtype=float)
    if np.any(s <= 0):
        raise InputError("Hill estimation needs positive samples")
    if not 0.0 < k_frac < 1.0:
        raise InputError(f"k_frac must lie in (0, 1), got {k_frac}")
    k = math.ceil(s.size ** k_frac)
    if k < 10 or k >= s.size:
        raise InputError(
            f"top-order count k={k} from {s.size} samples is outside [10, m)")
    top = np.sort(s)[::-1][:k + 1]
    return float(1.0 / np.mean(np.log(top[:k]) - np.log(top[k])))


@dataclass(frozen=True, eq=False)
class DivergingMeanReport:
    """Sample-mean growth of delta draws against the b_m rate.

    `diverging` requires the median sample mean to grow strictly, to grow by
    at least half again from the first grid point to the last, and to stay
    within a factor-4 band of b_m throughout.
    """

    c: int
    m_grid: tuple[int, ...]
    median_means: np.ndarray
    b_values: np.ndarray
    ratios: np.ndarray
    grows: bool
    band_ok: bool
    diverging: bool


GROWTH_FACTOR_MIN = 1.5


def diverging_mean_check(config: StableSimConfig,
                         m_grid=(10 ** 3, 10 ** 4, 10 ** 5, 10 ** 6), *,
                         clip: float | None = None) -> DivergingMeanReport:
    """Watch the sample mean of delta drift upward like b_m.

    The mean of exp(chi-square(c)/2) does not exist, so sample means keep
    growing at the b_m = (log a_m)^(c/2)/Gamma(c/2+1) rate instead of
    settling.  `clip` caps each draw (the bounded control case), which makes
    the means stabilize and the divergence flag come back false.
    """
    m_grid = tuple(int(m) for m in m_grid)
    medians = np.empty(len(m_grid))
    b_values = np.empty(len(m_grid))
    for i, m in enumerate(m_grid):
        b_values[i] = norming_constants(m, config.c).b_m
        means = np.empty(config.replicates)
        for r in range(config.replicates):
            rng = np.random.default_rng(
                np.random.SeedSequence(config.seed, spawn_key=(i, r)))
            draws = sample_delta(replace(config, m=m), rng)
            if clip is not None:
                draws = np.minimum(draws, clip)
            means[r] = draws.mean()
        medians[i] = np.median(means)
    ratios = medians / b_values
    grows = bool(np.all(np.diff(medians) > 0))
    band_ok = bool(np.all((ratios >= 0.25) & (ratios <= 4.0)))
    diverging = (grows and band_ok
                 and medians[-1] >= GROWTH_FACTOR_MIN * medians[0])
    return DivergingMeanReport(c=config.c, m_grid=m_grid, median_means=medians,
                               b_values=b_values, ratios=ratios, grows=grows,
                               band_ok=band_ok, diverging=diverging)


@dataclass(frozen=True, eq=False)
class HStatSweep:
    """Per-n h statistics of the c-extraneous class, seeds in columns."""

    c: int
    n_grid: tuple[int, ...]
    h_stats: np.ndarray
    failures: tuple[tuple[int, int, str], ...]

    @property
    def medians(self) -> np.ndarray:
        return np.array([np.nan if np.all(np.isnan(row)) else np.nanmedian(row)
                         for row in self.h_stats])


def h_statistic_sweep(base: SyntheticConfig, c: int, n_grid,
                      seeds_per_n: int = 8, *, lam: float = 1.0,
                      use_assumption_iii_design: bool = False,
                      sample_size: int = 2000) -> HStatSweep:
    """Mean class Bayes factor damped by (log n)^(-c/2), swept over n.

    Delegates each (n, seed) cell to the overfit-class experiment; cell
    failures are recorded and leave NaN behind.
    """
    from .errors import BfselectError

    n_grid = tuple(int(n) for n in n_grid)
    if not n_grid or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise InputError(f"n_grid must be strictly increasing, got {n_grid}")
    h = np.full((len(n_grid), seeds_per_n), np.nan)
    failures: list[tuple[int, int, str]] = []
    for ni, n in enumerate(n_grid):
        for si in range(seeds_per_n):
            cell_seed, _ = _draw_seed_pair(base.seed, (ni, si))
            try:
                cfg = replace(base, n=n, seed=cell_seed)
                stat = overfit_class_experiment(
                    cfg, c, use_assumption_iii_design,
                    lam=lam, sample_size=sample_size)
                h[ni, si] = stat.h_stat
            except BfselectError as exc:
                failures.append((n, si, str(exc)))
    return HStatSweep(c=c, n_grid=n_grid, h_stats=h, failures=tuple(failures))


@dataclass(frozen=True, eq=False)
class StableSimResult:
    """One simulation run: sums, norming constants, and fit diagnostics.

    Both KS distances are reported, against the totally skewed limit and
    against its Cauchy stand-in, because the two laws are often conflated;
    the skewed one is the actual limit.
    """

    config: StableSimConfig
    sums: np.ndarray
    constants: NormingConstants
    ks_beta1: float
    ks_beta0: float
    median: float
    hill_estimate: float | None


def run_stable_sim(config: StableSimConfig, *, points: int = 2001) -> StableSimResult:
    """Simulate normalized sums and compare them with the limit law."""
    sums = normalized_sums(config)
    ks1 = ks_distance(sums, tabulated_limit_reference(beta=1.0, points=points))
    ks0 = ks_distance(sums, lambda x: np.asarray(
        0.5 + np.arctan((np.asarray(x) - LIMIT_LOCATION) / LIMIT_SCALE) / math.pi))
    rng = np.random.default_rng(
        np.random.SeedSequence(config.seed, spawn_key=(config.replicates,)))
    try:
        hill = hill_tail_index(sample_delta(config, rng))
    except InputError:
        hill = None
    return StableSimResult(config=config, sums=sums,
                           constants=norming_constants(config.m, config.c),
                           ks_beta1=ks1, ks_beta0=ks0,
                           median=float(np.median(sums)), hill_estimate=hill)
