"""Checks for the assumptions the selection guarantees lean on: column
standardization, a floor on small-submatrix eigenvalues, the projected-noise
statistic V(Z) and its expectation, and the minimum-signal condition.

All Monte Carlo work is seeded per draw, so estimates are reproducible for a
given (seed, draw count) no matter how the draws are scheduled.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .linalg import Dataset, min_eigen, model_basis, validate_model

#: exhaustive subset enumeration is used up to this many evaluations
EXHAUSTIVE_LIMIT = 100_000


@dataclass(frozen=True)
class StandardizationCheck:
    """Per-column squared-norm ratios against the target value n."""

    ok: bool
    norm_ratios: np.ndarray
    worst_column: int | None

    @property
    def worst_ratio(self) -> float:
        if self.worst_column is None:
            return 1.0
        return float(self.norm_ratios[self.worst_column - 1])


def check_standardization(dataset: Dataset, rtol: float = 1e-8) -> StandardizationCheck:
    """Verify every column has squared norm n, within `rtol` relative.

    A dataset with no columns passes vacuously.
    """
    if dataset.p == 0:
        return StandardizationCheck(True, np.empty(0), None)
    ratios = (dataset.X ** 2).sum(axis=0) / dataset.n
    worst = int(np.argmax(np.abs(ratios - 1.0)))
    ok = bool(abs(ratios[worst] - 1.0) <= rtol)
    return StandardizationCheck(ok, ratios, worst + 1)


@dataclass(frozen=True)
class ZetaMinEstimate:
    """Estimated floor of the smallest scaled Gram eigenvalue over submatrices.

    When `exhaustive` is False the floor was sampled and the value is only an
    upper bound on the true floor.
    """

    value: float
    subset_size: int
    exhaustive: bool
    evaluated: int
    argmin_model: tuple[int, ...]


def estimate_zeta_min(dataset: Dataset, max_subset_size: int = 6,
                      samples: int = 2000, seed: int = 0) -> ZetaMinEstimate:
    """Smallest min_eigen over column subsets of size up to max_subset_size.

    Eigenvalue interlacing makes the floor over all sizes up to s equal to
    the floor at size exactly s, so only size-s subsets are scanned: all of
    them when there are at most 10^5, otherwise `samples` uniform draws.
    """
    if dataset.p < 1:
        raise InputError("need at least one column to estimate an eigenvalue floor")
    size = min(int(max_subset_size), dataset.p, dataset.n - 3)
    if size < 1:
        raise InputError(f"subset size must be at least 1, got {size}")
    if samples < 1:
        raise InputError(f"need at least one sample, got {samples}")

    best = math.inf
    argmin: tuple[int, ...] = ()
    if math.comb(dataset.p, size) <= EXHAUSTIVE_LIMIT:
        count = 0
        for model in itertools.combinations(range(1, dataset.p + 1), size):
            lam = min_eigen(dataset, model)
            count += 1
            if lam < best:
                best, argmin = lam, model
        return ZetaMinEstimate(best, size, True, count, argmin)

    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
    for _ in range(samples):
        model = tuple(sorted(rng.choice(dataset.p, size=size, replace=False) + 1))
        lam = min_eigen(dataset, model)
        if lam < best:
            best, argmin = lam, model
    return ZetaMinEstimate(best, size, False, samples, argmin)


@dataclass(frozen=True)
class VStatistic:
    """Largest normalized correlation between a vector and the columns left
    over after projecting out a small superset of the target model."""

    value: float
    pairs_evaluated: int
    exact: bool
    argmax_pair: tuple[tuple[int, ...], int] | None


class _VContext:
    """Residualized candidate columns for all (superset, column) pairs.

    Built once and reused across Monte Carlo draws: evaluating V(z) is then a
    single matrix-vector product.
    """

    def __init__(self, dataset: Dataset, t_model: tuple[int, ...],
                 superset_cap: int, max_pairs: int, seed: int):
        p = dataset.p
        rest = [j for j in range(1, p + 1) if j not in t_model]
        cap = min(superset_cap, len(rest))
        pairs: list[tuple[tuple[int, ...], int]] = []
        for extra in range(cap + 1):
            for add in itertools.combinations(rest, extra):
                model = tuple(sorted(t_model + add))
                if len(model) > dataset.n - 3:
                    continue
                member = set(model)
                pairs.extend((model, k) for k in rest if k not in member)
        self.exact = len(pairs) <= max_pairs
        if not self.exact:
            rng = np.random.default_rng(np.random.SeedSequence(entropy=seed))
            chosen = rng.choice(len(pairs), size=max_pairs, replace=False)
            pairs = [pairs[i] for i in sorted(chosen)]
        self.pairs = pairs

        columns = np.empty((dataset.n, len(pairs)))
        basis_cache: dict[tuple[int, ...], np.ndarray] = {}
        for i, (model, k) in enumerate(pairs):
            q = basis_cache.get(model)
            if q is None:
                q = model_basis(dataset, model)
                basis_cache[model] = q
            xk = dataset.columns((k,))[:, 0]
            columns[:, i] = xk - q @ (q.T @ xk) if q.shape[1] else xk
        self._columns = columns
        self._scale = 1.0 / math.sqrt(dataset.n)

    def evaluate(self, z: np.ndarray) -> tuple[float, int]:
        corr = np.abs(self._columns.T @ z) * self._scale
        idx = int(np.argmax(corr)) if corr.size else 0
        return (float(corr[idx]) if corr.size else 0.0), idx


def v_statistic(dataset: Dataset, t_model, z, superset_cap: int = 2,
                max_pairs: int = EXHAUSTIVE_LIMIT, seed: int = 0) -> VStatistic:
    """V(z): max over supersets B of the target (up to `superset_cap` extra
    columns) and columns k outside B of |<(I - H_B) x_k, z>| / sqrt(n).

    The double maximum is exact when the pair count fits in `max_pairs`;
    otherwise a uniform sample of pairs is scanned and the value is a lower
    bound.
    """
    t_model = validate_model(t_model, dataset.p, dataset.n)
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape[0] != dataset.n:
        raise InputError(f"z has length {z.shape[0]}, expected {dataset.n}")
    if superset_cap < 0:
        raise InputError(f"superset cap must be nonnegative, got {superset_cap}")
    ctx = _VContext(dataset, t_model, superset_cap, max_pairs, seed)
    if not ctx.pairs:
        return VStatistic(0.0, 0, True, None)
    value, idx = ctx.evaluate(z)
    return VStatistic(value, len(ctx.pairs), ctx.exact, ctx.pairs[idx])


@dataclass(frozen=True)
class VExpectation:
    """Monte Carlo estimate of E[V(Z)] under standard normal Z."""

    mean: float
    stderr: float
    draws: int
    pairs_evaluated: int
    exact_pairs: bool


def estimate_v_expectation(dataset: Dataset, t_model, mc_draws: int = 1000,
                           seed: int = 0, superset_cap: int = 2,
                           max_pairs: int = EXHAUSTIVE_LIMIT,
                           threads: int = 1) -> VExpectation:
    """Estimate E[V(Z)] by averaging V over seeded standard-normal draws.

    Draw i uses the child stream (seed, spawn_key=(i,)), so the estimate is
    identical for any thread count.
    """
    if mc_draws < 100:
        raise InputError(f"need at least 100 draws for a stable estimate, "
                         f"got {mc_draws}")
    t_model = validate_model(t_model, dataset.p, dataset.n)
    ctx = _VContext(dataset, t_model, superset_cap, max_pairs, seed)
    n = dataset.n

    def one_draw(i: int) -> float:
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(i,)))
        return ctx.evaluate(rng.standard_normal(n))[0]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = np.fromiter(pool.map(one_draw, range(mc_draws)),
                                 dtype=float, count=mc_draws)
    else:
        values = np.fromiter(map(one_draw, range(mc_draws)),
                             dtype=float, count=mc_draws)
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(mc_draws))
    return VExpectation(mean, stderr, mc_draws, len(ctx.pairs), ctx.exact)


def v_bound(n: int, zeta_min: float, outer: float = 0.25,
            inner: float = 4.0) -> float:
    """Right-hand side of the projected-noise assumption:
    outer * sqrt(zeta_min * log log n / inner)."""
    if n < 3:
        raise InputError(f"need n >= 3 for log log n to be positive, got {n}")
    if zeta_min < 0:
        raise InputError(f"zeta_min must be nonnegative, got {zeta_min}")
    return outer * math.sqrt(zeta_min * math.log(math.log(n)) / inner)


@dataclass(frozen=True)
class SignalCondition:
    """Implied signal constant against its selection-consistency threshold."""

    tau: float
    beta_min_sq: float
    c2_implied: float
    threshold: float
    ok: bool


def check_signal_condition(beta_t, sigma2: float, t_size: int,
                           zeta_min: float) -> SignalCondition:
    """Evaluate |T| * tau * beta_min^2 > 10 / zeta_min with tau = 1/sigma2."""
    if sigma2 <= 0:
        raise InputError(f"sigma2 must be positive, got {sigma2}")
    if zeta_min <= 0:
        raise InputError(f"zeta_min must be positive, got {zeta_min}")
    beta_t = np.asarray(beta_t, dtype=float).reshape(-1)
    if t_size != beta_t.shape[0]:
        raise InputError(f"t_size {t_size} does not match {beta_t.shape[0]} "
                         "coefficients")
    tau = 1.0 / sigma2
    beta_min_sq = float(np.min(np.abs(beta_t)) ** 2) if beta_t.size else 0.0
    c2 = t_size * tau * beta_min_sq
    threshold = 10.0 / zeta_min
    return SignalCondition(tau, beta_min_sq, c2, threshold, c2 > threshold)


@dataclass
class DiagnosticsReport:
    """Assumption checks bundled for one dataset, serializable as key=value
    text."""

    n: int
    p: int
    standardization: StandardizationCheck
    zeta: ZetaMinEstimate
    v_expectation: VExpectation
    v_bound_value: float
    v_bound_outer: float
    v_bound_inner: float
    c1_hat: float | None
    signal: SignalCondition | None
    notes: list[str] = field(default_factory=list)

    def to_text(self) -> str:
        def fmt(x) -> str:
            if isinstance(x, bool):
                return "true" if x else "false"
            if isinstance(x, float):
                return format(x, ".10g")
            return str(x)

        lines = [
            f"n = {self.n}",
            f"p = {self.p}",
            f"standardization_ok = {fmt(self.standardization.ok)}",
            f"worst_norm_ratio = {fmt(self.standardization.worst_ratio)}",
            f"zeta_min_hat = {fmt(self.zeta.value)}",
            f"zeta_subset_size = {self.zeta.subset_size}",
            f"zeta_exhaustive = {fmt(self.zeta.exhaustive)}",
            f"v_expectation_hat = {fmt(self.v_expectation.mean)}",
            f"v_expectation_se = {fmt(self.v_expectation.stderr)}",
            f"v_bound = {fmt(self.v_bound_value)}",
            (f"v_bound_formula = {fmt(self.v_bound_outer)}*sqrt(zeta_min_hat"
             f"*log(log(n))/{fmt(self.v_bound_inner)})"),
            f"v_within_bound = {fmt(self.v_expectation.mean <= self.v_bound_value)}",
        ]
        if self.c1_hat is not None:
            lines.append(f"c1_hat = {fmt(self.c1_hat)}")
        if self.signal is not None:
            lines += [
                f"tau = {fmt(self.signal.tau)}",
                f"beta_min_sq = {fmt(self.signal.beta_min_sq)}",
                f"c2_implied = {fmt(self.signal.c2_implied)}",
                f"c2_threshold = {fmt(self.signal.threshold)}",
                f"signal_condition_ok = {fmt(self.signal.ok)}",
            ]
        for i, note in enumerate(self.notes, 1):
            lines.append(f"note_{i} = {note}")
        return "\n".join(lines) + "\n"


def run_diagnostics(dataset: Dataset, t_model=(), beta_t=None,
                    sigma2: float | None = None, *, zeta_subset_size: int = 6,
                    zeta_samples: int = 2000, mc_draws: int = 1000,
                    superset_cap: int = 2, outer: float = 0.25,
                    inner: float = 4.0, seed: int = 0,
                    threads: int = 1) -> DiagnosticsReport:
    """Run every assumption check on one dataset.

    `t_model`, `beta_t`, and `sigma2` are optional ground truth; when given,
    the realized signal constants are evaluated as well.
    """
    t_model = validate_model(t_model, dataset.p, dataset.n)
    std = check_standardization(dataset)
    zeta = estimate_zeta_min(dataset, zeta_subset_size, zeta_samples, seed)
    vexp = estimate_v_expectation(dataset, t_model, mc_draws, seed,
                                  superset_cap, threads=threads)
    bound = v_bound(dataset.n, zeta.value, outer, inner)

    notes = []
    if not std.ok:
        notes.append(f"column {std.worst_column} has squared-norm ratio "
                     f"{std.worst_ratio:.6g}, expected 1")
    if not zeta.exhaustive:
        notes.append(f"zeta_min_hat sampled from {zeta.evaluated} subsets; "
                     "true floor may be lower")
    if not vexp.exact_pairs:
        notes.append(f"V maximum sampled over {vexp.pairs_evaluated} pairs; "
                     "true expectation may be higher")
    if vexp.mean > bound:
        notes.append(f"projected-noise bound violated: E[V] estimate "
                     f"{vexp.mean:.6g} exceeds {bound:.6g}")

    c1_hat = None
    signal = None
    if t_model and beta_t is not None and sigma2 is not None:
        beta = np.asarray(beta_t, dtype=float).reshape(-1)
        if beta.shape[0] != len(t_model):
            raise InputError(f"beta_t has {beta.shape[0]} entries for a "
                             f"size-{len(t_model)} model")
        if sigma2 <= 0:
            raise InputError(f"sigma2 must be positive, got {sigma2}")
        fit = dataset.X[:, [j - 1 for j in t_model]] @ beta
        c1_hat = float(fit @ fit) / (dataset.n * sigma2)
        if zeta.value > 0:
            signal = check_signal_condition(beta, sigma2, len(t_model), zeta.value)
        else:
            notes.append("zeta_min_hat is zero; signal condition undefined")

    return DiagnosticsReport(
        n=dataset.n, p=dataset.p, standardization=std, zeta=zeta,
        v_expectation=vexp, v_bound_value=bound, v_bound_outer=outer,
        v_bound_inner=inner, c1_hat=c1_hat, signal=signal, notes=notes)
