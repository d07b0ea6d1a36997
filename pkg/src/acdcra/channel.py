"""Slotted time-frequency resource grid and the ternary-feedback collision channel.

Every protocol in this package shares the same channel abstraction: a set of
contention resources observed once per slot, each reporting idle (0), singleton
(1) or collision (e). The receiver never learns the hidden multiplicity of a
collision, only the three-valued symbol.
"""

import numpy as np

# observable symbol codes
IDLE = 0
SINGLETON = 1
COLLISION = 2
SYMBOLS = ("0", "1", "e")


class ChannelConfigError(ValueError):
    pass


class ResourceGrid:
    """Frequency x time grid split into admission and resolution channels."""

    def __init__(self, m_ac, m_rc):
        if m_ac < 0 or m_rc < 0 or m_ac + m_rc <= 0:
            raise ChannelConfigError("grid needs a positive number of resources")
        self.m_ac = int(m_ac)
        self.m_rc = int(m_rc)
        self.num_frequencies = self.m_ac + self.m_rc
        self.slot_index = 0

    def advance(self):
        self.slot_index += 1

    def __repr__(self):
        return f"ResourceGrid(m_ac={self.m_ac}, m_rc={self.m_rc})"


class TernaryOutcomeVector:
    """Per-resource outcome of one contention slot.

    ``slots[i]`` holds the tuple of user ids that landed on resource i; the
    observable projection (:meth:`symbols`) collapses it to {0, 1, e}.
    """

    def __init__(self, slots):
        self.slots = [tuple(s) for s in slots]

    def __len__(self):
        return len(self.slots)

    def symbols(self):
        """Observable symbol codes: IDLE/SINGLETON/COLLISION per resource."""
        return np.array([min(len(s), COLLISION) for s in self.slots], dtype=np.int64)

    def symbol_string(self):
        return "".join(SYMBOLS[c] for c in self.symbols())

    def multiplicities(self):
        return np.array([len(s) for s in self.slots], dtype=np.int64)

    def collided_resources(self):
        return [i for i, s in enumerate(self.slots) if len(s) >= 2]

    def occupied_set(self):
        """Indices of non-idle resources (the collected-coupon set)."""
        return frozenset(i for i, s in enumerate(self.slots) if s)

    def users(self):
        out = set()
        for s in self.slots:
            out.update(s)
        return out


def contend(user_ids, profile, rng):
    """One contention slot: each user independently picks resource i w.p. p_i.

    ``profile`` is any object with a ``probabilities`` array (or a bare array).
    Returns a TernaryOutcomeVector over the profile's resources.
    """
    p = np.asarray(getattr(profile, "probabilities", profile), dtype=float)
    if p.size == 0:
        raise ChannelConfigError("empty selection profile")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ChannelConfigError(f"selection probabilities sum to {p.sum():.12f}, not 1")
    slots = [[] for _ in range(p.size)]
    users = sorted(user_ids)
    if users:
        picks = rng.choice(p.size, size=len(users), p=p)
        for uid, i in zip(users, picks):
            slots[i].append(uid)
    return TernaryOutcomeVector(slots)


def observe(vector):
    """Ternary projection of an outcome vector; multiplicity stays hidden."""
    return vector.symbols()
