import itertools
import math

import numpy as np
import pytest

from acdcra.channel import COLLISION, IDLE, SINGLETON
from acdcra.estimator import (EstimationError, ProfileConfigError,
                              SelectionProfile, _ccp_sum, apply_pessimism,
                              ccp_expected_draws, guess_set,
                              heuristic_partition, ml_partition, mle_stirling,
                              mle_zanella, pessimism_factor,
                              solve_power_profile_alpha)


# --- selection profiles ----------------------------------------------------

def test_power_profile_satisfies_sum_constraint():
    for p0, m in [(1e-2, 18), (1e-3, 18), (0.2, 4)]:
        prof = SelectionProfile.power(p0, m)
        assert abs(prof.probabilities.sum() - 1.0) < 1e-12
        assert np.all(prof.probabilities > 0)


def test_power_profile_uniform_limit():
    assert solve_power_profile_alpha(1.0 / 6.0, 6) == 1.0
    prof = SelectionProfile.power(1.0 / 6.0, 6)
    assert np.allclose(prof.probabilities, 1.0 / 6.0)


def test_power_profile_ceilings_match_published_values():
    # expected draws over the full 18-resource set, two-significant-digit targets
    targets = {1e-2: 1.5e2, 1e-3: 1.1e3, 1e-4: 9e3}
    for p0, target in targets.items():
        prof = SelectionProfile.power(p0, 18)
        assert abs(prof.n_max_ceiling - target) / target < 0.10


def test_profile_rejects_bad_input():
    with pytest.raises(ProfileConfigError):
        SelectionProfile([0.5, 0.5, 0.1])
    with pytest.raises(ProfileConfigError):
        SelectionProfile([1.0, 0.0])
    with pytest.raises(ProfileConfigError):
        SelectionProfile.power(1.5, 8)


# --- coupon-collector expectation ------------------------------------------

def test_ccp_empty_set_is_zero():
    prof = SelectionProfile.uniform(3)
    assert ccp_expected_draws(frozenset(), prof) == 0.0


def test_ccp_single_resource_geometric_series():
    # one coupon with p = 0.5: sum_z exp(-z/2) = 1/(1 - exp(-1/2))
    prof = SelectionProfile([0.5, 0.5])
    got = ccp_expected_draws({0}, prof)
    assert abs(got - 1.0 / (1.0 - math.exp(-0.5))) < 1e-9


def test_ccp_monotone_in_occupied_set():
    prof = SelectionProfile.power(1e-2, 8)
    rng = np.random.default_rng(5)
    for _ in range(30):
        k = rng.integers(1, 8)
        a = frozenset(rng.choice(8, size=k, replace=False).tolist())
        extra = rng.integers(0, 8)
        b = a | {int(extra)}
        ea, eb = prof.expected_draws(a), prof.expected_draws(b)
        assert ea <= eb + 1e-9
        assert 0.0 <= ea <= prof.n_max_ceiling + 1e-9


def test_ccp_truncation_soundness():
    prof = SelectionProfile.power(1e-3, 18)
    p = prof.probabilities
    base = _ccp_sum(p, z_cap=int(100 * prof.n_max_ceiling))
    longer = _ccp_sum(p, z_cap=int(1000 * prof.n_max_ceiling))
    assert abs(longer - base) / base < 1e-6


# --- partitions ------------------------------------------------------------

def test_guess_set_matches_worked_example():
    sym = [SINGLETON, COLLISION, COLLISION]
    assert guess_set(sym, 7) == [(1, 2, 4), (1, 3, 3), (1, 4, 2)]


def test_ml_partition_picks_most_likely_guess():
    # weights of the three guesses under uniform p: 105, 140, 105
    prof = SelectionProfile.uniform(3)
    got = ml_partition([SINGLETON, COLLISION, COLLISION], 7, prof)
    assert list(got) == [1, 3, 3]


def test_ml_partition_unique_feasible():
    prof = SelectionProfile.uniform(3)
    got = ml_partition([SINGLETON, SINGLETON, IDLE], 2, prof)
    assert list(got) == [1, 1, 0]


def test_ml_partition_infeasible_total():
    prof = SelectionProfile.uniform(3)
    with pytest.raises(EstimationError):
        ml_partition([SINGLETON, COLLISION, IDLE], 2, prof)


def _exhaustive_best_partition(sym, n, probs):
    """Oracle: enumerate all m^n labeled assignments, accumulate multinomial
    probability per count vector, restrict to the observation constraints."""
    m = len(sym)
    weights = {}
    for assign in itertools.product(range(m), repeat=n):
        counts = tuple(assign.count(i) for i in range(m))
        w = math.prod(probs[i] for i in assign)
        weights[counts] = weights.get(counts, 0.0) + w
    best, best_w = None, -1.0
    for counts, w in sorted(weights.items()):
        ok = all((s == IDLE and c == 0) or (s == SINGLETON and c == 1)
                 or (s == COLLISION and c >= 2) for s, c in zip(sym, counts))
        if ok and w > best_w + 1e-15:
            best, best_w = counts, w
    return best


def test_ml_partition_matches_exhaustive_oracle():
    rng = np.random.default_rng(6)
    for _ in range(12):
        m = int(rng.integers(2, 5))
        raw = rng.uniform(0.2, 1.0, size=m)
        prof = SelectionProfile(raw / raw.sum())
        n = int(rng.integers(2, 9))
        counts = rng.multinomial(n, prof.probabilities)
        sym = np.minimum(counts, COLLISION)
        oracle = _exhaustive_best_partition(list(sym), n, prof.probabilities)
        if oracle is None:
            continue
        got = ml_partition(sym, n, prof)
        assert tuple(got) == oracle


def test_heuristic_partition_worked_examples():
    prof = SelectionProfile([0.2, 0.3, 0.5])
    got = heuristic_partition([SINGLETON, IDLE, COLLISION], 5, prof)
    assert list(got) == [1, 0, 3]  # ceil(0.5 * 5) = 3
    single = SelectionProfile([1.0])
    assert list(heuristic_partition([COLLISION], 2, single)) == [2]
    assert list(heuristic_partition([IDLE, IDLE, IDLE], 0, prof)) == [0, 0, 0]


def test_partition_consistency_property():
    rng = np.random.default_rng(7)
    prof = SelectionProfile.power(1e-2, 6)
    for _ in range(50):
        n = int(rng.integers(1, 40))
        counts = rng.multinomial(n, prof.probabilities)
        sym = np.minimum(counts, COLLISION)
        n_hat = prof.expected_draws(frozenset(np.nonzero(counts)[0].tolist()))
        u = heuristic_partition(sym, n_hat, prof)
        assert np.all(u[sym == IDLE] == 0)
        assert np.all(u[sym == SINGLETON] == 1)
        assert np.all(u[sym == COLLISION] >= 2)


# --- maximum-likelihood baselines -------------------------------------------

def test_mle_stirling_small_case():
    # m=2, one busy resource: N=1 has likelihood 1, N=2 only 0.5
    assert mle_stirling(1, 2, n_cap=6) == 1
    assert mle_stirling(0, 5, n_cap=10) == 0


def test_mle_stirling_saturates_on_full_occupancy():
    assert mle_stirling(18, 18, n_cap=500) == 500


def test_mle_zanella_root_and_residual():
    n_hat, avg = mle_zanella(4, 8, 18)
    x = n_hat / 18
    rhs = x * (math.exp(x) - 1) / (math.exp(x) - 1 - x)
    assert abs((n_hat - 4) / 8 - rhs) < 1e-6
    assert abs(avg - (n_hat - 4) / 8) < 1e-12
    assert n_hat > 4 + 2 * 8 - 1e-9


def test_mle_zanella_error_branch_and_saturation():
    with pytest.raises(EstimationError):
        mle_zanella(5, 0, 18)
    # full collision set: no root, the minimal consistent backlog is returned
    n_hat, _ = mle_zanella(0, 18, 18)
    assert n_hat == 36.0


# --- pessimism ----------------------------------------------------------------

def test_pessimism_zero_for_deterministic_channel():
    prof = SelectionProfile([1.0])
    assert pessimism_factor(prof, runs=200, rng=np.random.default_rng(8)) == 0.0


def test_pessimism_nonnegative_and_cached():
    prof = SelectionProfile.power(1e-2, 6)
    f1 = pessimism_factor(prof, runs=300, rng=np.random.default_rng(9))
    f2 = pessimism_factor(prof, runs=300, rng=np.random.default_rng(10))
    assert f1 >= 0.0 and f1 == f2  # second call hits the cache


def test_apply_pessimism_only_on_collisions():
    sym = np.array([IDLE, SINGLETON, COLLISION])
    u = np.array([0, 1, 3])
    out = apply_pessimism(u, sym, 1.4)
    assert list(out) == [0, 1, 5]  # ceil(3 + 1.4)
