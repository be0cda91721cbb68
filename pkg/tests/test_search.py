import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from bfselect import Dataset, EnumerationBudgetError, InputError, standardize
from bfselect.bayes import (
    ModelScorer,
    TruncatedPoissonPrior,
    log_bf_vs_null,
)
from bfselect.linalg import r_squared
from bfselect.search import (
    SearchConfig,
    enumerate_posterior,
    posterior_of_model,
    stochastic_search,
)


def planted_dataset(seed=0, n=60, p=8, strength=(3.0, 2.0)):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    y = strength[0] * X[:, 0] + strength[1] * X[:, 1] + rng.standard_normal(n)
    return standardize(Dataset(y, X))


def brute_force_posterior(ds, prior):
    scores = {}
    for size in range(prior.s_max + 1):
        for model in itertools.combinations(range(1, ds.p + 1), size):
            r2 = r_squared(ds, model)
            scores[model] = (log_bf_vs_null(r2, ds.n, size)
                             + prior.log_model_mass(size))
    top = max(scores.values())
    z = top + math.log(sum(math.exp(s - top) for s in scores.values()))
    return {m: math.exp(s - z) for m, s in scores.items()}, z


def test_enumeration_matches_brute_force():
    ds = planted_dataset()
    prior = TruncatedPoissonPrior.for_dataset(1.0, ds)
    want, z = brute_force_posterior(ds, prior)
    got = enumerate_posterior(ds, prior)
    assert got.method == "enumeration"
    assert got.visited_count == len(want)
    assert_allclose(got.log_normalizer, z, rtol=1e-12)
    assert set(got.model_masses) == set(want)
    for model, mass in want.items():
        assert_allclose(got.model_masses[model], mass, rtol=1e-10, atol=1e-15)
    incl = np.zeros(ds.p)
    for model, mass in want.items():
        for j in model:
            incl[j - 1] += mass
    assert_allclose(got.inclusion_probs, incl, rtol=1e-10, atol=1e-15)
    assert got.map_model == max(want, key=want.get)


def test_enumeration_reference_invariance():
    ds = planted_dataset(seed=3)
    prior = TruncatedPoissonPrior.for_dataset(0.8, ds)
    plain = enumerate_posterior(ds, prior)
    shifted = enumerate_posterior(ds, prior, reference=(1, 2, 5))
    assert plain.map_model == shifted.map_model
    assert_allclose(shifted.log_normalizer, plain.log_normalizer, rtol=1e-10)
    for model, mass in plain.model_masses.items():
        assert_allclose(shifted.model_masses[model], mass, rtol=1e-9, atol=1e-15)


def test_enumeration_size_cap_and_storage_limit():
    ds = planted_dataset(seed=5)
    prior = TruncatedPoissonPrior.for_dataset(1.0, ds)
    capped = enumerate_posterior(ds, prior, size_cap=2)
    assert capped.visited_count == 1 + 8 + 28
    assert all(len(m) <= 2 for m in capped.model_masses)
    small = enumerate_posterior(ds, prior, size_cap=2, max_stored=5)
    assert len(small.model_masses) <= 6
    assert small.map_model == capped.map_model
    assert_allclose(small.inclusion_probs, capped.inclusion_probs, rtol=1e-12)


def test_enumeration_budget_guard():
    rng = np.random.default_rng(9)
    ds = standardize(Dataset(rng.standard_normal(40), rng.standard_normal((40, 30))))
    prior = TruncatedPoissonPrior(1.0, 30, 30)
    with pytest.raises(EnumerationBudgetError):
        enumerate_posterior(ds, prior)
    # a tight size cap brings the same problem back under budget
    out = enumerate_posterior(ds, prior, size_cap=2)
    assert out.visited_count == 1 + 30 + 435


def test_enumeration_handles_singular_models():
    rng = np.random.default_rng(13)
    X = rng.standard_normal((40, 4))
    X = np.column_stack([X, X[:, 0] + X[:, 1]])  # column 5 = 1 + 2
    y = X[:, 0] + rng.standard_normal(40)
    ds = standardize(Dataset(y, X))
    prior = TruncatedPoissonPrior.for_dataset(1.0, ds)
    with pytest.warns(UserWarning, match="rank deficient"):
        out = enumerate_posterior(ds, prior)
    assert out.warnings
    assert out.model_masses.get((1, 2, 5), 0.0) == 0.0
    assert_allclose(sum(out.model_masses.values()), 1.0, rtol=1e-9)


def test_planted_signal_is_map():
    ds = planted_dataset(seed=21, n=120)
    prior = TruncatedPoissonPrior.for_dataset(1.0, ds)
    out = enumerate_posterior(ds, prior)
    assert out.map_model == (1, 2)
    assert out.inclusion_probs[0] > 0.99 and out.inclusion_probs[1] > 0.99
    assert out.inclusion_probs[2:].max() < 0.5


def tv_distance(a, b):
    keys = set(a) | set(b)
    return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)


def test_search_agrees_with_enumeration():
    ds = planted_dataset(seed=2)
    prior = TruncatedPoissonPrior.for_dataset(1.0, ds)
    exact = enumerate_posterior(ds, prior)
    cfg = SearchConfig(iterations=40000, burn_in=4000, seed=11)
    approx = stochastic_search(ds, prior, cfg)
    assert approx.method == "search"
    assert approx.log_normalizer is None
    assert tv_distance(approx.model_masses, exact.model_masses) < 0.05
    assert approx.map_model == exact.map_model
    assert_allclose(approx.inclusion_probs, exact.inclusion_probs, atol=0.05)


def test_search_visit_frequencies_shrink_toward_exact():
    ds = planted_dataset(seed=6)
    prior = TruncatedPoissonPrior.for_dataset(1.0, ds)
    exact = enumerate_posterior(ds, prior)
    cfg = SearchConfig(iterations=60000, seed=4, track_trajectory=True)
    out = stochastic_search(ds, prior, cfg)
    path = out.trajectory[0]

    def prefix_tv(k):
        freq = {}
        for state in path[:k]:
            freq[state] = freq.get(state, 0) + 1
        return tv_distance({m: c / k for m, c in freq.items()},
                           exact.model_masses)

    assert prefix_tv(60000) < prefix_tv(2000)
    assert prefix_tv(60000) < 0.05


def test_search_detailed_balance_on_swap_chain():
    # swap-only proposals keep the model size at 1, giving a 3-state chain
    # whose transition counts must balance within Monte Carlo error
    rng = np.random.default_rng(0)
    X = rng.standard_normal((30, 3))
    y = rng.standard_normal(30)
    ds = standardize(Dataset(y, X))
    prior = TruncatedPoissonPrior.for_dataset(1.0, ds)
    cfg = SearchConfig(iterations=300000, move_probabilities=(0.0, 0.0, 1.0),
                       initial_model=(1,), seed=8, track_trajectory=True)
    out = stochastic_search(ds, prior, cfg)
    states = [(j,) for j in (1, 2, 3)]
    assert set(out.model_masses) == set(states)

    path = out.trajectory[0]
    flows = {}
    for a, b in zip(path, path[1:]):
        if a != b:
            flows[(a, b)] = flows.get((a, b), 0) + 1
    for a, b in itertools.combinations(states, 2):
        fwd, rev = flows.get((a, b), 0), flows.get((b, a), 0)
        assert abs(fwd - rev) <= 3.0 * math.sqrt(fwd + rev)

    # visit frequencies match the size-1 conditional posterior
    scorer = ModelScorer(ds, prior)
    scores = np.array([scorer.score(s) for s in states])
    cond = np.exp(scores - scores.max())
    cond /= cond.sum()
    for state, want in zip(states, cond):
        assert abs(out.model_masses[state] - want) < 0.01


def test_search_reports_stuck_chain():
    rng = np.random.default_rng(17)
    X = rng.standard_normal((30, 3))
    y = X[:, 0] + 1e-6 * rng.standard_normal(30)
    ds = standardize(Dataset(y, X))
    prior = TruncatedPoissonPrior(1e-8, 3, 3)
    cfg = SearchConfig(iterations=500, initial_model=(1,), seed=0)
    with pytest.warns(UserWarning, match="consecutive"):
        out = stochastic_search(ds, prior, cfg)
    assert any("consecutive" in w for w in out.warnings)
    assert out.map_model == (1,)


def test_search_determinism_and_seed_sensitivity():
    ds = planted_dataset(seed=1)
    prior = TruncatedPoissonPrior.for_dataset(1.0, ds)
    cfg = SearchConfig(iterations=5000, seed=42)
    a = stochastic_search(ds, prior, cfg)
    b = stochastic_search(ds, prior, cfg)
    assert a.model_masses == b.model_masses
    assert a.map_model == b.map_model
    c = stochastic_search(ds, prior, SearchConfig(iterations=5000, seed=43))
    assert c.model_masses != a.model_masses


def test_search_multichain_pooling():
    ds = planted_dataset(seed=14)
    prior = TruncatedPoissonPrior.for_dataset(1.0, ds)
    cfg = SearchConfig(iterations=4000, burn_in=500, chains=3, seed=5,
                       track_trajectory=True)
    out = stochastic_search(ds, prior, cfg)
    assert len(out.trajectory) == 3
    assert all(len(path) == 3500 for path in out.trajectory)
    assert_allclose(sum(out.model_masses.values()), 1.0, rtol=1e-12)
    # chains see different randomness
    assert out.trajectory[0] != out.trajectory[1]


def test_search_config_validation():
    with pytest.raises(InputError):
        SearchConfig(iterations=0)
    with pytest.raises(InputError):
        SearchConfig(iterations=10, burn_in=10)
    with pytest.raises(InputError):
        SearchConfig(iterations=10, move_probabilities=(0.0, 0.0, 0.0))
    with pytest.raises(InputError):
        SearchConfig(iterations=10, chains=0)
    ds = planted_dataset(seed=4, n=30, p=4)
    prior = TruncatedPoissonPrior.for_dataset(1.0, ds)
    with pytest.raises(InputError):
        # swap-only proposals cannot leave the empty model
        stochastic_search(ds, prior, SearchConfig(
            iterations=10, move_probabilities=(0.0, 0.0, 1.0)))
    with pytest.raises(InputError):
        # the prior caps model size at 2, so a size-3 start is unreachable
        stochastic_search(ds, TruncatedPoissonPrior(1.0, 4, 2), SearchConfig(
            iterations=10, initial_model=(1, 2, 3)))


def test_posterior_of_model_softmax():
    ds = planted_dataset(seed=8)
    prior = TruncatedPoissonPrior.for_dataset(1.0, ds)
    scorer = ModelScorer(ds, prior)
    model = (1, 2)
    rivals = [(1,), (2,), (1, 3), (1, 2, 4), ()]
    got = posterior_of_model(ds, prior, model, competitors=rivals, scorer=scorer)
    scores = np.array([scorer.score(m) for m in [model] + rivals])
    want = float(np.exp(scores[0] - scores.max())
                 / np.exp(scores - scores.max()).sum())
    assert_allclose(got, want, rtol=1e-10)
    # invariant to the reference and to having the model listed as its own rival
    again = posterior_of_model(ds, prior, model, reference=(3,),
                               competitors=rivals + [model], scorer=scorer)
    assert_allclose(again, got, rtol=1e-12)


def test_posterior_of_model_edges():
    ds = planted_dataset(seed=8)
    prior = TruncatedPoissonPrior.for_dataset(1.0, ds)
    assert posterior_of_model(ds, prior, (1, 2)) == 1.0
    rng = np.random.default_rng(19)
    X = rng.standard_normal((20, 3))
    y = X @ np.array([1.0, -1.0, 2.0])  # saturated by the full model
    sat = standardize(Dataset(y, X))
    sat_prior = TruncatedPoissonPrior.for_dataset(1.0, sat)
    assert posterior_of_model(sat, sat_prior, (1, 2, 3),
                              competitors=[(1,), (2,)]) == 1.0
    assert posterior_of_model(sat, sat_prior, (1,),
                              competitors=[(1, 2, 3)]) == 0.0
