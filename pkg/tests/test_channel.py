import numpy as np
import pytest

from acdcra.channel import (COLLISION, IDLE, SINGLETON, ChannelConfigError,
                            ResourceGrid, TernaryOutcomeVector, contend, observe)
from acdcra.estimator import SelectionProfile


def test_grid_partition():
    g = ResourceGrid(8, 12)
    assert g.num_frequencies == 20
    with pytest.raises(ChannelConfigError):
        ResourceGrid(0, 0)


def test_contend_no_users():
    out = contend(set(), np.array([1 / 3] * 3), np.random.default_rng(0))
    assert list(out.symbols()) == [IDLE, IDLE, IDLE]


def test_contend_single_user_is_singleton():
    rng = np.random.default_rng(1)
    out = contend({7}, SelectionProfile.uniform(4), rng)
    sym = out.symbols()
    assert np.sum(sym == SINGLETON) == 1 and np.sum(sym == IDLE) == 3
    assert out.users() == {7}


def test_contend_degenerate_profile_forces_collision():
    out = contend({1, 2}, np.array([1.0, 0.0]), np.random.default_rng(2))
    assert out.slots[0] == (1, 2) and out.slots[1] == ()
    assert list(out.symbols()) == [COLLISION, IDLE]


def test_contend_rejects_bad_profile():
    rng = np.random.default_rng(0)
    with pytest.raises(ChannelConfigError):
        contend({1}, np.array([]), rng)
    with pytest.raises(ChannelConfigError):
        contend({1}, np.array([0.5, 0.4]), rng)


def test_observe_projection_hides_multiplicity():
    v = TernaryOutcomeVector([(), (3,), (1, 2, 5)])
    assert list(observe(v)) == [IDLE, SINGLETON, COLLISION]
    assert v.symbol_string() == "01e"
    v2 = TernaryOutcomeVector([(9,), (1, 2, 3)])
    assert list(observe(v2)) == [SINGLETON, COLLISION]


def test_conservation_of_users():
    rng = np.random.default_rng(3)
    profile = SelectionProfile.power(1e-2, 6)
    for n in (1, 5, 40, 200):
        users = set(range(n))
        out = contend(users, profile, rng)
        assert int(out.multiplicities().sum()) == n
        assert out.users() == users


def test_selection_frequencies_converge():
    # 1e5 single-user draws: per-resource frequency within 3 standard errors
    rng = np.random.default_rng(4)
    profile = SelectionProfile.power(5e-2, 5)
    trials = 100_000
    hits = np.zeros(5)
    for _ in range(trials):
        out = contend({0}, profile, rng)
        hits[out.symbols().argmax()] += 1
    freq = hits / trials
    se = np.sqrt(profile.probabilities * (1 - profile.probabilities) / trials)
    assert np.all(np.abs(freq - profile.probabilities) <= 3 * se + 1e-12)
