"""Bayes factors for Gaussian linear models under mixture g-priors, and the
model-space priors they are paired with.

Every quantity is computed and returned on the log scale.  The closed form
for the beta-prime mixture and the one-dimensional mixing integral are kept
as independent routes so each can check the other.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate
from scipy.special import betaln

from .errors import (
    IndeterminateComparisonError,
    InputError,
    QuadratureError,
)
from .linalg import Dataset, RSquared, r_squared, validate_model

#: relative accuracy requested from the mixing-integral quadrature
QUAD_EPSREL = 1e-10
#: abserr/result above this raises QuadratureError
QUAD_RELIABILITY = 1e-6


def _coerce_r2(r2, size: int) -> float:
    if isinstance(r2, RSquared):
        if r2.model_size != size:
            raise InputError(
                f"R^2 was computed for a size-{r2.model_size} model, "
                f"but size {size} was given")
        r2 = r2.value
    r2 = float(r2)
    if not 0.0 <= r2 <= 1.0:
        raise InputError(f"R^2 must lie in [0, 1], got {r2}")
    return r2


def _validate_sizes(n: int, *sizes: int):
    if n < 3:
        raise InputError(f"need n >= 3, got {n}")
    for s in sizes:
        if s < 0 or s > n - 2:
            raise InputError(f"model size {s} must lie in [0, {n - 2}] for n={n}")


def _null_terms(r2: float, n: int, size: int) -> tuple[float, float]:
    """Log R^2 factor and log gamma factor of the null-referenced Bayes factor."""
    if size == 0:
        if r2 != 0.0:
            raise InputError("the empty model cannot have positive R^2")
        return 0.0, 0.0
    if r2 == 1.0:
        lr2 = math.inf
    else:
        lr2 = -0.5 * (n - size - 1) * math.log1p(-r2)
    lg = (math.lgamma(0.5 * size) + math.lgamma(0.5 * (n - size))
          - math.lgamma(0.5) - math.lgamma(0.5 * (n - 1)))
    return lr2, lg


def log_bf_vs_null(r2_a, n: int, a_size: int) -> float:
    """Log Bayes factor of a model against the intercept-only model.

    This is the beta-prime mixing integral in closed form.  A saturated fit
    (R^2 exactly 1) returns +inf.
    """
    _validate_sizes(n, a_size)
    r2_a = _coerce_r2(r2_a, a_size)
    lr2, lg = _null_terms(r2_a, n, a_size)
    return lr2 + lg


@dataclass(frozen=True)
class BayesFactorResult:
    """Log Bayes factor of model A over model T with its two log factors.

    `log_r2_term` carries the fit comparison and `log_gamma_term` the size
    penalty; they sum to `log_bf` up to rounding.
    """

    log_bf: float
    log_r2_term: float
    log_gamma_term: float
    a_size: int
    t_size: int

    @property
    def bayes_factor(self) -> float:
        return math.exp(self.log_bf)


def log_bf_closed(r2_a, r2_t, n: int, a_size: int, t_size: int) -> BayesFactorResult:
    """Closed-form log Bayes factor of model A against model T.

    Both models are referenced to the null internally, which makes the result
    exactly antisymmetric under swapping A and T.  When exactly one side is
    saturated the result is +-inf; when both are, no finite comparison exists
    and IndeterminateComparisonError is raised.
    """
    _validate_sizes(n, a_size, t_size)
    ra, ga = _null_terms(_coerce_r2(r2_a, a_size), n, a_size)
    rt, gt = _null_terms(_coerce_r2(r2_t, t_size), n, t_size)
    if math.isinf(ra) and math.isinf(rt):
        raise IndeterminateComparisonError(
            "both models fit perfectly; their Bayes factor is undefined")
    return BayesFactorResult(
        log_bf=(ra + ga) - (rt + gt),
        log_r2_term=ra - rt,
        log_gamma_term=ga - gt,
        a_size=a_size,
        t_size=t_size,
    )


class BetaPrimeMixing:
    """Beta-prime mixing density with shape (a, b) on the precision ratio."""

    def __init__(self, a: float, b: float):
        if a <= 0 or b <= 0:
            raise InputError(f"beta-prime shapes must be positive, got ({a}, {b})")
        self.a = float(a)
        self.b = float(b)
        self._log_norm = -betaln(self.a, self.b)

    @classmethod
    def for_model(cls, n: int, a_size: int) -> "BetaPrimeMixing":
        return cls(0.5, 0.5 * (n - a_size - 1))

    def log_density(self, omega: float) -> float:
        if omega <= 0.0:
            return -math.inf
        return (self._log_norm + (self.a - 1.0) * math.log(omega)
                - (self.a + self.b) * math.log1p(omega))


class ZellnerSiowMixing:
    """Gamma(1/2, rate n/2) mixing density on the precision ratio."""

    def __init__(self, rate: float, shape: float = 0.5):
        if rate <= 0 or shape <= 0:
            raise InputError(f"gamma parameters must be positive, got "
                             f"shape={shape}, rate={rate}")
        self.rate = float(rate)
        self.shape = float(shape)
        self._log_norm = shape * math.log(rate) - math.lgamma(shape)

    @classmethod
    def for_sample_size(cls, n: int) -> "ZellnerSiowMixing":
        return cls(rate=0.5 * n)

    def log_density(self, omega: float) -> float:
        if omega <= 0.0:
            return -math.inf
        return (self._log_norm + (self.shape - 1.0) * math.log(omega)
                - self.rate * omega)


def _resolve_family(family, n: int, a_size: int):
    if family == "betaprime":
        return BetaPrimeMixing.for_model(n, a_size)
    if family == "zs":
        return ZellnerSiowMixing.for_sample_size(n)
    if hasattr(family, "log_density"):
        return family
    raise InputError(f"unknown mixing family {family!r}")


def log_bf_quadrature(r2_a, n: int, a_size: int, family="betaprime",
                      epsrel: float = QUAD_EPSREL) -> float:
    """Log Bayes factor against the null by integrating over the mixing density.

    The integral over omega in (0, inf) is mapped to v in (0, 1) through
    omega = v^2/(1 - v^2); the squared variable removes the integrable
    endpoint singularity that size-1 models otherwise have at omega = 0.
    The integrand is evaluated in log space with its grid maximum subtracted
    before exponentiating.  Raises QuadratureError, carrying the estimate,
    when the reported error exceeds QUAD_RELIABILITY relative to the result.
    """
    _validate_sizes(n, a_size)
    r2 = _coerce_r2(r2_a, a_size)
    if a_size == 0:
        return 0.0
    if r2 == 1.0:
        return math.inf
    if a_size > n - 3:
        raise InputError(f"quadrature needs model size <= n - 3, got {a_size}")
    fam = _resolve_family(family, n, a_size)
    c = 1.0 - r2

    def log_h(v: float) -> float:
        if v <= 0.0 or v >= 1.0:
            return -math.inf
        v2 = v * v
        om = v2 / (1.0 - v2)
        log_1mv2 = math.log1p(-v2)
        log_om = 2.0 * math.log(v) - log_1mv2
        try:
            return (0.5 * (n - a_size) * (-log_1mv2)
                    + 0.5 * (a_size - 1) * log_om
                    - 0.5 * (n - 1) * (math.log(c + r2 * v2) - log_1mv2)
                    + fam.log_density(om)
                    + math.log(2.0 * v) - 2.0 * log_1mv2)
        except (OverflowError, ValueError):
            return -math.inf

    grid = np.linspace(1e-9, 1.0 - 1e-9, 2001)
    values = np.array([log_h(v) for v in grid])
    peak = int(np.argmax(values))
    scale = float(values[peak])
    if not math.isfinite(scale):
        raise QuadratureError("mixing integrand vanished on the whole grid")

    def integrand(v: float) -> float:
        z = log_h(v) - scale
        return math.exp(z) if z < 700.0 else math.exp(700.0)

    result, abserr, *_ = scipy.integrate.quad(
        integrand, 0.0, 1.0, points=[float(grid[peak])],
        limit=200, epsabs=0.0, epsrel=epsrel, full_output=1)
    if not result > 0.0:
        raise QuadratureError(f"mixing integral collapsed to {result}")
    if abserr / result > QUAD_RELIABILITY:
        raise QuadratureError(
            f"mixing integral unreliable: abserr/result = {abserr / result:.2e}",
            estimate=scale + math.log(result))
    return scale + math.log(result)


def _log_choose(p: int, k: int) -> float:
    return (math.lgamma(p + 1) - math.lgamma(k + 1) - math.lgamma(p - k + 1))


class TruncatedPoissonPrior:
    """Poisson(lam) prior on model size, truncated to sizes 0..s_max, spread
    uniformly over the models of each size."""

    def __init__(self, lam: float, p: int, s_max: int):
        if lam <= 0:
            raise InputError(f"lam must be positive, got {lam}")
        if p < 1:
            raise InputError(f"need at least one column, got p={p}")
        if not 0 <= s_max <= p:
            raise InputError(f"s_max must lie in [0, {p}], got {s_max}")
        self.lam = float(lam)
        self.p = int(p)
        self.s_max = int(s_max)
        raw = [k * math.log(self.lam) - self.lam - math.lgamma(k + 1)
               for k in range(self.s_max + 1)]
        self._log_z = _logsumexp_list(raw)
        self._raw = raw

    @classmethod
    def for_dataset(cls, lam: float, dataset: Dataset) -> "TruncatedPoissonPrior":
        return cls(lam, dataset.p, min(dataset.p, dataset.n - 3))

    def log_size_mass(self, k: int) -> float:
        if k < 0:
            raise InputError(f"model size must be nonnegative, got {k}")
        if k > self.s_max:
            return -math.inf
        return self._raw[k] - self._log_z

    def log_model_mass(self, k: int) -> float:
        mass = self.log_size_mass(k)
        return mass - _log_choose(self.p, k) if math.isfinite(mass) else mass


class SparsitySizePrior:
    """Size prior proportional to p^(-c2 k), the usual sparsity baseline."""

    def __init__(self, c2: float, p: int, s_max: int):
        if c2 <= 0:
            raise InputError(f"c2 must be positive, got {c2}")
        if p < 2:
            raise InputError(f"sparsity prior needs p >= 2, got p={p}")
        if not 0 <= s_max <= p:
            raise InputError(f"s_max must lie in [0, {p}], got {s_max}")
        self.c2 = float(c2)
        self.p = int(p)
        self.s_max = int(s_max)
        raw = [-self.c2 * k * math.log(self.p) for k in range(self.s_max + 1)]
        self._log_z = _logsumexp_list(raw)
        self._raw = raw

    @classmethod
    def for_dataset(cls, c2: float, dataset: Dataset) -> "SparsitySizePrior":
        return cls(c2, dataset.p, min(dataset.p, dataset.n - 3))

    def log_size_mass(self, k: int) -> float:
        if k < 0:
            raise InputError(f"model size must be nonnegative, got {k}")
        if k > self.s_max:
            return -math.inf
        return self._raw[k] - self._log_z

    def log_model_mass(self, k: int) -> float:
        mass = self.log_size_mass(k)
        return mass - _log_choose(self.p, k) if math.isfinite(mass) else mass


def _logsumexp_list(values) -> float:
    top = max(values)
    return top + math.log(sum(math.exp(v - top) for v in values))


def log_prior_odds(prior, a_size: int, t_size: int) -> float:
    """Log prior odds of a size-a model against a size-t model."""
    t_mass = prior.log_model_mass(t_size)
    if not math.isfinite(t_mass):
        raise InputError(f"reference size {t_size} has no prior mass")
    return prior.log_model_mass(a_size) - t_mass


def log_sparsity_prior_odds(a_size: int, t_size: int, p: int, c2: float) -> float:
    """Sparsity-baseline prior odds without constructing the full prior."""
    if p < 2:
        raise InputError(f"need p >= 2, got {p}")
    return (-c2 * (a_size - t_size) * math.log(p)
            + _log_choose(p, t_size) - _log_choose(p, a_size))


class ModelScorer:
    """Cached per-model scores: log Bayes factor against the null plus log
    prior mass.

    Score differences are posterior log odds, so any search or enumeration
    built on this cache is reference-free by construction.  `g_route` selects
    the closed form ("betaprime") or the mixing integral ("zs").
    """

    def __init__(self, dataset: Dataset, prior, g_route: str = "betaprime",
                 max_cache: int = 1 << 20):
        if not dataset.standardized:
            raise InputError("dataset must be standardized first (see standardize())")
        if g_route not in ("betaprime", "zs"):
            raise InputError(f"g_route must be 'betaprime' or 'zs', got {g_route!r}")
        self.dataset = dataset
        self.prior = prior
        self.g_route = g_route
        self._parts = functools.lru_cache(maxsize=max_cache)(self._compute)

    def _compute(self, model: tuple[int, ...]) -> tuple[float, float]:
        r2 = r_squared(self.dataset, model)
        n, size = self.dataset.n, len(model)
        if self.g_route == "betaprime":
            lbf = log_bf_vs_null(r2, n, size)
        else:
            lbf = log_bf_quadrature(r2, n, size, family="zs")
        return lbf, self.prior.log_model_mass(size)

    def _key(self, model) -> tuple[int, ...]:
        return validate_model(model, self.dataset.p, self.dataset.n)

    def score(self, model) -> float:
        """Log posterior mass of a model, up to the shared normalizer."""
        lbf, lprior = self._parts(self._key(model))
        return lbf + lprior

    def log_bf(self, model_a, model_t) -> float:
        """Log Bayes factor of one model over another, priors excluded."""
        la = self._parts(self._key(model_a))[0]
        lt = self._parts(self._key(model_t))[0]
        if math.isinf(la) and math.isinf(lt) and la == lt:
            raise IndeterminateComparisonError(
                "both models fit perfectly; their Bayes factor is undefined")
        return la - lt

    def log_posterior_odds(self, model_a, model_t) -> float:
        a = self.score(self._key(model_a))
        t = self.score(self._key(model_t))
        if math.isinf(a) and math.isinf(t) and a == t:
            raise IndeterminateComparisonError(
                "both models have unbounded posterior mass")
        return a - t

    def cache_info(self):
        return self._parts.cache_info()
