"""Arrival processes: per-slot Poisson arrivals and the bursty one-shot
activation model where a fixed population wakes up at Beta-distributed times
inside an activation window (the standard machine-type-traffic burst model,
shape defaults (3, 4))."""

import numpy as np


class TrafficConfigError(ValueError):
    pass


class TrafficModel:
    """Declarative arrival model; call :meth:`start` per run to get a seeded
    arrival process with fresh user ids."""

    def __init__(self, kind, class_populations, lam=None, t_a=None,
                 shape_a=3.0, shape_b=4.0, n_total=None):
        if kind not in ("poisson", "beta_burst"):
            raise TrafficConfigError(f"unknown traffic kind {kind!r}")
        self.kind = kind
        self.class_populations = dict(class_populations)
        if not self.class_populations:
            raise TrafficConfigError("at least one traffic class is required")
        if kind == "poisson":
            if lam is None or lam < 0:
                raise TrafficConfigError("poisson traffic needs lam >= 0")
            self.lam = float(lam)
        else:
            if t_a is None or t_a < 1:
                raise TrafficConfigError("beta burst needs an activation window >= 1")
            n_total = sum(self.class_populations.values()) if n_total is None else n_total
            if n_total != sum(self.class_populations.values()):
                raise TrafficConfigError("class populations must sum to n_total")
            if n_total < 1:
                raise TrafficConfigError("beta burst needs n_total >= 1")
            self.t_a = int(t_a)
            self.shape_a = float(shape_a)
            self.shape_b = float(shape_b)
            self.n_total = int(n_total)

    def start(self, rng):
        if self.kind == "poisson":
            return _PoissonArrivals(self, rng)
        return _BetaBurstArrivals(self, rng)


class _PoissonArrivals:
    """Fresh-id Poisson arrivals split across classes by population ratio."""

    def __init__(self, model, rng):
        self.model = model
        self.rng = rng
        classes = sorted(model.class_populations)
        weights = np.array([model.class_populations[j] for j in classes], dtype=float)
        self.classes = classes
        self.ratios = weights / weights.sum()
        self._next_id = 0
        self.exhausted = False

    def arrivals(self, slot):
        out = {j: [] for j in self.classes}
        count = int(self.rng.poisson(self.model.lam))
        if count:
            split = self.rng.multinomial(count, self.ratios)
            for j, k in zip(self.classes, split):
                for _ in range(int(k)):
                    out[j].append(self._next_id)
                    self._next_id += 1
        return out


class _BetaBurstArrivals:
    """Each member of a finite population activates exactly once, at a slot
    drawn from a Beta density scaled over [0, t_a) and floored."""

    def __init__(self, model, rng):
        self.model = model
        schedule = {}
        uid = 0
        for j in sorted(model.class_populations):
            n = model.class_populations[j]
            times = np.floor(rng.beta(model.shape_a, model.shape_b, size=n)
                             * model.t_a).astype(np.int64)
            times = np.minimum(times, model.t_a - 1)
            for t in times:
                schedule.setdefault(int(t), []).append((j, uid))
                uid += 1
        self.schedule = schedule
        self.last_slot = max(schedule) if schedule else -1

    @property
    def exhausted(self):
        return not self.schedule

    def arrivals(self, slot):
        out = {j: [] for j in sorted(self.model.class_populations)}
        for j, uid in self.schedule.pop(slot, []):
            out[j].append(uid)
        return out


def arrivals(process, slot):
    """Per-class lists of newly active user ids for one slot."""
    return process.arrivals(slot)
