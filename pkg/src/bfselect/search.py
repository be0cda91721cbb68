"""Model-space exploration.

Two routes to the same posterior: exact enumeration over all models up to a
size cap, and a Metropolis-Hastings random walk with add/drop/swap moves for
spaces too large to enumerate.  Both consume per-model scores (log Bayes
factor against the null plus log prior mass) from a shared cache, so their
outputs are directly comparable.
"""

from __future__ import annotations

import itertools
import math
import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from .bayes import ModelScorer
from .errors import (
    EnumerationBudgetError,
    IndeterminateComparisonError,
    InputError,
    SingularModelError,
)
from .linalg import Dataset, validate_model

#: enumeration refuses to score more models than this
ENUMERATION_BUDGET = 1 << 24

_ADD, _DROP, _SWAP = 0, 1, 2


@dataclass
class PosteriorSummary:
    """Posterior over models, from enumeration or from search visit counts.

    `model_masses` maps each stored model to its posterior probability
    (enumeration) or visit frequency (search).  `log_normalizer` is the log
    marginal score sum and is None for search output.  `trajectory` holds one
    state sequence per chain when recording was requested.
    """

    model_masses: dict[tuple[int, ...], float]
    inclusion_probs: np.ndarray
    map_model: tuple[int, ...]
    log_normalizer: float | None
    visited_count: int
    method: str
    warnings: list[str] = field(default_factory=list)
    trajectory: list[list[tuple[int, ...]]] | None = None

    def top_models(self, k: int = 10) -> list[tuple[tuple[int, ...], float]]:
        ranked = sorted(self.model_masses.items(),
                        key=lambda item: (-item[1], len(item[0]), item[0]))
        return ranked[:k]


def _best_model(entries) -> tuple[int, ...]:
    """Highest-mass model; ties prefer fewer columns, then lexicographic order."""
    return min(entries, key=lambda item: (-item[1], len(item[0]), item[0]))[0]


def _iter_models(p: int, cap: int):
    for size in range(cap + 1):
        yield from itertools.combinations(range(1, p + 1), size)


def _safe_score(scorer: ModelScorer, model: tuple[int, ...]) -> float:
    try:
        return scorer.score(model)
    except SingularModelError:
        return -math.inf


def enumerate_posterior(dataset: Dataset, prior, size_cap: int | None = None,
                        reference=None, scorer: ModelScorer | None = None,
                        max_stored: int = 1 << 16) -> PosteriorSummary:
    """Exact posterior over every model of size at most the cap.

    The cap is the prior's largest supported size, lowered further by
    `size_cap`.  Rank-deficient models get zero mass and a warning.  Scores
    may be shifted by a `reference` model's score before normalization; the
    posterior is invariant to that choice.  At most `max_stored` models are
    kept in the mass table, ranked by mass; inclusion probabilities and the
    normalizer always use all of them.
    """
    scorer = scorer or ModelScorer(dataset, prior)
    cap = prior.s_max if size_cap is None else min(int(size_cap), prior.s_max)
    if cap < 0:
        raise InputError(f"size cap must be nonnegative, got {cap}")
    p = dataset.p
    total = sum(math.comb(p, s) for s in range(cap + 1))
    if total > ENUMERATION_BUDGET:
        shown = (str(total) if total < 10 ** 9
                 else f"about 10^{len(str(total)) - 1}")
        raise EnumerationBudgetError(
            f"enumeration of {shown} models (p={p}, sizes 0..{cap}) exceeds "
            f"the budget of {ENUMERATION_BUDGET}")

    shift = 0.0
    if reference is not None:
        shift = scorer.score(validate_model(reference, p, dataset.n))
        if not math.isfinite(shift):
            raise InputError("reference model must have a finite score")

    scores = np.empty(total)
    singular = 0
    for i, model in enumerate(_iter_models(p, cap)):
        s = _safe_score(scorer, model)
        if s == -math.inf:
            singular += 1
        scores[i] = s - shift if math.isfinite(s) else s

    notes = []
    if singular:
        msg = f"{singular} of {total} models were rank deficient and got zero mass"
        notes.append(msg)
        _warnings.warn(msg)
    top_score = scores.max()
    if top_score == -math.inf:
        raise SingularModelError("every candidate model is rank deficient")
    log_z = float(logsumexp(scores))

    if top_score == math.inf:
        # saturated fits dominate everything else
        mass = np.where(scores == math.inf, 1.0, 0.0)
        mass /= mass.sum()
    else:
        mass = np.exp(scores - log_z)
    tied = np.nonzero(scores == top_score)[0]
    keep = set(np.argsort(mass)[-max_stored:].tolist()) | set(tied.tolist())

    inclusion = np.zeros(p)
    stored: dict[tuple[int, ...], float] = {}
    best: list[tuple[tuple[int, ...], float]] = []
    for i, model in enumerate(_iter_models(p, cap)):
        if mass[i] > 0.0 and model:
            inclusion[[j - 1 for j in model]] += mass[i]
        if i in keep:
            stored[model] = float(mass[i])
            if scores[i] == top_score:
                best.append((model, mass[i]))

    return PosteriorSummary(
        model_masses=stored,
        inclusion_probs=inclusion,
        map_model=_best_model(best),
        log_normalizer=log_z + shift,
        visited_count=total,
        method="enumeration",
        warnings=notes,
    )


def posterior_of_model(dataset: Dataset, prior, model, reference=None,
                       competitors=(), scorer: ModelScorer | None = None) -> float:
    """Posterior probability of one model within an explicit competitor set.

    Computed from score differences, so it is invariant to the optional
    reference model.  With no competitors the probability is 1.
    """
    scorer = scorer or ModelScorer(dataset, prior)
    model = validate_model(model, dataset.p, dataset.n)
    if reference is not None:
        validate_model(reference, dataset.p, dataset.n)
    others = {validate_model(m, dataset.p, dataset.n) for m in competitors}
    others.discard(model)
    if not others:
        return 1.0
    own = _safe_score(scorer, model)
    rival = np.array([_safe_score(scorer, m) for m in others])
    if own == math.inf:
        if np.any(rival == math.inf):
            raise IndeterminateComparisonError(
                "several models fit perfectly; their posterior is undefined")
        return 1.0
    if own == -math.inf:
        if np.all(rival == -math.inf):
            raise IndeterminateComparisonError(
                "all models under comparison are rank deficient")
        return 0.0
    if np.any(rival == math.inf):
        return 0.0
    return float(expit(-(logsumexp(rival - own))))


@dataclass(frozen=True)
class SearchConfig:
    """Settings for the Metropolis-Hastings model walk.

    `move_probabilities` weights the add, drop, and swap proposals; at each
    state the weights of the feasible moves are renormalized.  Chains start
    from `initial_model` (the empty model by default) and their visit counts
    after `burn_in` steps are pooled.
    """

    iterations: int
    burn_in: int = 0
    move_probabilities: tuple[float, float, float] = (0.4, 0.4, 0.2)
    seed: int = 0
    initial_model: tuple[int, ...] | None = None
    chains: int = 1
    track_trajectory: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise InputError(f"need at least one iteration, got {self.iterations}")
        if not 0 <= self.burn_in < self.iterations:
            raise InputError(
                f"burn-in {self.burn_in} must lie in [0, {self.iterations})")
        w = self.move_probabilities
        if len(w) != 3 or any(x < 0 for x in w) or sum(w) <= 0:
            raise InputError(
                f"move probabilities must be 3 nonnegative weights with "
                f"positive sum, got {w}")
        if self.chains < 1:
            raise InputError(f"need at least one chain, got {self.chains}")


def _move_tables(p: int, s_max: int, weights):
    """Per-size feasible-move probabilities and log proposal densities."""
    w = np.asarray(weights, dtype=float)
    cum, logq = [], []
    for k in range(s_max + 1):
        feasible = np.array([k < s_max, k > 0, 0 < k < p], dtype=bool)
        wk = np.where(feasible, w, 0.0)
        total = wk.sum()
        cum.append(np.cumsum(wk / total) if total > 0 else None)
        lq = np.full(3, -math.inf)
        if total > 0:
            if wk[_ADD] > 0:
                lq[_ADD] = math.log(wk[_ADD] / total) - math.log(p - k)
            if wk[_DROP] > 0:
                lq[_DROP] = math.log(wk[_DROP] / total) - math.log(k)
            if wk[_SWAP] > 0:
                lq[_SWAP] = (math.log(wk[_SWAP] / total)
                             - math.log(k) - math.log(p - k))
        logq.append(lq)
    return cum, logq


def stochastic_search(dataset: Dataset, prior, config: SearchConfig,
                      scorer: ModelScorer | None = None) -> PosteriorSummary:
    """Metropolis-Hastings walk over models with add/drop/swap proposals.

    Proposal asymmetry from the per-state feasible-move renormalization is
    corrected in the acceptance ratio, so visit frequencies after burn-in
    estimate the exact posterior.  A chain that rejects 10*p proposals in a
    row is reported as stuck (once per chain) and keeps running.
    """
    scorer = scorer or ModelScorer(dataset, prior)
    p, n = dataset.p, dataset.n
    s_max = min(prior.s_max, p, n - 3)
    if s_max < 1:
        raise InputError("the model space has no room to move in")
    start = (validate_model(config.initial_model, p, n)
             if config.initial_model is not None else ())
    if len(start) > s_max:
        raise InputError(
            f"initial model size {len(start)} exceeds the size cap {s_max}")
    cum, logq = _move_tables(p, s_max, config.move_probabilities)
    if cum[len(start)] is None:
        raise InputError(
            f"no feasible moves from the initial model of size {len(start)}")

    counts: dict[tuple[int, ...], int] = {}
    notes: list[str] = []
    trajectories: list[list[tuple[int, ...]]] = []
    stuck_limit = 10 * p

    for chain in range(config.chains):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=config.seed, spawn_key=(chain,)))
        state = start
        in_state = set(state)
        score = _safe_score(scorer, state)
        rejects = 0
        warned = False
        path: list[tuple[int, ...]] = []

        for step in range(config.iterations):
            k = len(state)
            u = rng.random()
            move = int(np.searchsorted(cum[k], u, side="right"))
            if move == _ADD:
                absent = [j for j in range(1, p + 1) if j not in in_state]
                col = absent[int(rng.integers(len(absent)))]
                proposal = tuple(sorted(state + (col,)))
                rev = _DROP
            elif move == _DROP:
                col = state[int(rng.integers(k))]
                proposal = tuple(j for j in state if j != col)
                rev = _ADD
            else:
                out = state[int(rng.integers(k))]
                absent = [j for j in range(1, p + 1) if j not in in_state]
                inc = absent[int(rng.integers(len(absent)))]
                proposal = tuple(sorted((set(state) - {out}) | {inc}))
                rev = _SWAP
            new_score = _safe_score(scorer, proposal)

            if new_score == -math.inf:
                accept = False
            elif score == -math.inf or new_score == math.inf:
                accept = True
            else:
                log_alpha = (new_score - score
                             + logq[len(proposal)][rev] - logq[k][move])
                accept = (log_alpha >= 0.0
                          or rng.random() < math.exp(log_alpha))
            if accept:
                state, score = proposal, new_score
                in_state = set(state)
                rejects = 0
            else:
                rejects += 1
                if rejects >= stuck_limit and not warned:
                    msg = (f"chain {chain} rejected {rejects} consecutive "
                           f"proposals at model {state}")
                    notes.append(msg)
                    _warnings.warn(msg)
                    warned = True
            if step >= config.burn_in:
                counts[state] = counts.get(state, 0) + 1
                if config.track_trajectory:
                    path.append(state)
        if config.track_trajectory:
            trajectories.append(path)

    total = sum(counts.values())
    freqs = {m: c / total for m, c in counts.items()}
    inclusion = np.zeros(p)
    for model, f in freqs.items():
        if model:
            inclusion[[j - 1 for j in model]] += f
    top = max(counts.values())
    best = [(m, f) for m, f in freqs.items() if counts[m] == top]
    return PosteriorSummary(
        model_masses=freqs,
        inclusion_probs=inclusion,
        map_model=_best_model(best),
        log_normalizer=None,
        visited_count=len(counts),
        method="search",
        warnings=notes,
        trajectory=trajectories if config.track_trajectory else None,
    )
