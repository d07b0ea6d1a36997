import numpy as np
import pytest

from acdcra.traffic import TrafficConfigError, TrafficModel, arrivals


def test_validation():
    with pytest.raises(TrafficConfigError):
        TrafficModel("bursty", {1: 10})
    with pytest.raises(TrafficConfigError):
        TrafficModel("poisson", {1: 10})  # missing rate
    with pytest.raises(TrafficConfigError):
        TrafficModel("beta_burst", {1: 10}, t_a=100, n_total=99)


def test_beta_burst_totals_and_support():
    model = TrafficModel("beta_burst", {1: 300, 2: 700}, t_a=50)
    proc = model.start(np.random.default_rng(1))
    seen = {1: 0, 2: 0}
    for slot in range(50):
        got = arrivals(proc, slot)
        for j, ids in got.items():
            seen[j] += len(ids)
    assert proc.exhausted
    assert seen == {1: 300, 2: 700}  # class split exact, all inside the window


def test_beta_burst_histogram_peaks_at_continuous_mode():
    # Beta(3,4) mode = (a-1)/(a+b-2) = 0.4 -> slot 40 of a 100-slot window
    model = TrafficModel("beta_burst", {1: 100_000}, t_a=100)
    proc = model.start(np.random.default_rng(2))
    hist = np.zeros(100, dtype=int)
    for slot in range(100):
        hist[slot] = len(arrivals(proc, slot)[1])
    assert abs(int(hist.argmax()) - 40) <= 5


def test_poisson_mean_within_three_standard_errors():
    lam = 3.0
    model = TrafficModel("poisson", {1: 3, 2: 1}, lam=lam)
    proc = model.start(np.random.default_rng(3))
    slots = 100_000
    total = 0
    per_class = {1: 0, 2: 0}
    for slot in range(slots):
        got = arrivals(proc, slot)
        for j, ids in got.items():
            per_class[j] += len(ids)
            total += len(ids)
    se = np.sqrt(lam / slots)
    assert abs(total / slots - lam) <= 3 * se
    # population ratios steer the class split
    assert abs(per_class[1] / total - 0.75) < 0.01


def test_poisson_zero_rate_limit():
    model = TrafficModel("poisson", {1: 1}, lam=1e-9)
    proc = model.start(np.random.default_rng(4))
    assert sum(len(arrivals(proc, s)[1]) for s in range(10_000)) <= 1


def test_poisson_ids_are_fresh():
    model = TrafficModel("poisson", {1: 1}, lam=5.0)
    proc = model.start(np.random.default_rng(5))
    seen = set()
    for slot in range(200):
        ids = arrivals(proc, slot)[1]
        assert not (seen & set(ids))
        seen.update(ids)
