"""Closed-form dimensioning of the protocol.

Ties together: the exact multiplicity distribution of N users over M
unequal-probability resources (an inclusion-exclusion recursion over resource
subsets), its Poisson-traffic mixture, the expected parallelization demanded
from the resolution channel, the blocking probability of the bufferless
resolution queue (one deterministic-time server per frequency group), and the
steady state of the five-state per-user chain Off/Tx/A_R/Suc/Fail.

The subset recursion enumerates 2^M masks, so it is an offline dimensioning
tool: a size guard (M <= 10, N <= 60 by default) must be lifted explicitly
for bigger cases.
"""

import math

import numpy as np
from scipy.special import gammaln, logsumexp

STATE_NAMES = ("Off", "Tx", "A_R", "Suc", "Fail")

DEFAULT_M_LIMIT = 10
DEFAULT_N_LIMIT = 60


class AnalyticsConfigError(ValueError):
    pass


def _profile_probs(profile_or_probs):
    p = np.asarray(getattr(profile_or_probs, "probabilities", profile_or_probs),
                   dtype=float)
    if abs(p.sum() - 1.0) > 1e-9 or np.any(p <= 0):
        raise AnalyticsConfigError("invalid selection probabilities")
    return p


def _subset_tables(p):
    """Per-mask popcount, probability sum and log probability product."""
    m = p.size
    nmask = 1 << m
    bits = np.zeros(nmask, dtype=np.int64)
    psum = np.zeros(nmask)
    plogprod = np.zeros(nmask)
    logp = np.log(p)
    for mask in range(1, nmask):
        low = mask & (-mask)
        i = low.bit_length() - 1
        rest = mask ^ low
        bits[mask] = bits[rest] + 1
        psum[mask] = psum[rest] + p[i]
        plogprod[mask] = plogprod[rest] + logp[i]
    return bits, psum, plogprod


def _superset_sums(values, nmask, m):
    """For every mask, the sum of ``values`` over all of its supersets."""
    s = values.copy()
    idx = np.arange(nmask)
    for b in range(m):
        step = 1 << b
        without = np.nonzero((idx & step) == 0)[0]
        s[without] += s[without | step]
    return s


def _exact_layers(n, p, u, bits, psum, plogprod):
    """exact[mask] = P(the resources in mask each hold exactly u users and no
    other resource does). Computed from the joint multinomial term by
    subtracting strict supersets, walking the group count from its maximum
    down so every subtrahend is already final."""
    m = p.size
    nmask = 1 << m
    max_j = m if u == 0 else min(n // u, m)
    if max_j == 0:
        return None, 0
    lgam = gammaln(np.arange(n + 2))
    joint = np.zeros(nmask)
    with np.errstate(divide="ignore"):
        for mask in range(1, nmask):
            j = bits[mask]
            if j > max_j:
                continue
            rest = n - j * u
            base = 1.0 - psum[mask]
            if rest > 0 and base <= 0.0:
                continue  # leftover users have nowhere to go
            log_term = (lgam[n + 1] - j * lgam[u + 1] - lgam[rest + 1]
                        + u * plogprod[mask]
                        + (rest * math.log(base) if rest > 0 else 0.0))
            joint[mask] = math.exp(log_term)
    exact = joint.copy()
    for j in range(max_j - 1, 0, -1):
        above = np.where(bits > j, exact, 0.0)
        sos = _superset_sums(above, nmask, m)
        level = bits == j
        exact[level] = joint[level] - sos[level]
    return exact, max_j


class MultiplicityDistribution:
    """Per-resource occupancy law of N users over M resources.

    ``p_of_u[u]`` is the probability that a resource holds exactly u users
    (the expected count of such resources divided by M — exact for any
    profile by linearity)."""

    def __init__(self, n, m, probabilities, p_of_u):
        self.n = int(n)
        self.m = int(m)
        self.probabilities = np.asarray(probabilities, dtype=float)
        self.p_of_u = np.asarray(p_of_u, dtype=float)

    @property
    def p_collision(self):
        """Probability that a resource sees more than one user."""
        p0 = self.p_of_u[0]
        p1 = self.p_of_u[1] if self.p_of_u.size > 1 else 0.0
        return float(1.0 - p0 - p1)

    def expected_users(self):
        u = np.arange(self.p_of_u.size)
        return float(self.m * np.dot(u, self.p_of_u))


def multiplicity_distribution(n, m, profile, m_limit=DEFAULT_M_LIMIT,
                              n_limit=DEFAULT_N_LIMIT, u_values=None):
    """Exact occupancy distribution via the subset recursion.

    ``u_values`` restricts the computed occupancy levels (others are 0 in the
    result); the full distribution is the default.
    """
    p = _profile_probs(profile)
    if p.size != m:
        raise AnalyticsConfigError("profile size does not match m")
    if m > m_limit or n > n_limit:
        raise AnalyticsConfigError(
            f"size guard: need m <= {m_limit} and n <= {n_limit} "
            f"(got m={m}, n={n}); raise the limits for offline use")
    bits, psum, plogprod = _subset_tables(p)
    us = range(n + 1) if u_values is None else sorted(set(int(u) for u in u_values))
    p_of_u = np.zeros(n + 1)
    for u in us:
        if u > n:
            continue
        if n == 0:
            p_of_u[0] = 1.0
            continue
        exact, max_j = _exact_layers(n, p, u, bits, psum, plogprod)
        if exact is None:
            continue
        expected_groups = float(np.dot(bits, exact))  # sum over j of j * P(j groups)
        if expected_groups < -1e-9:
            raise AnalyticsConfigError(
                f"negative group probability at u={u}: recursion is inconsistent")
        p_of_u[u] = max(expected_groups, 0.0) / m
    return MultiplicityDistribution(n, m, p, p_of_u)


def collision_probability(n, m, profile, **kw):
    """Per-resource collision probability 1 - p(0) - p(1) for n users."""
    if n == 0:
        return 0.0
    dist = multiplicity_distribution(n, m, profile, u_values=(0, 1), **kw)
    return dist.p_collision


def _poisson_terms(mean, tail):
    """Poisson pmf values until the remaining tail mass drops below `tail`."""
    logs = []
    i = 0
    cum = 0.0
    while True:
        lp = -mean + i * math.log(mean) - gammaln(i + 1) if mean > 0 else (0.0 if i == 0 else -np.inf)
        v = math.exp(lp)
        logs.append(v)
        cum += v
        if 1.0 - cum < tail:
            break
        i += 1
    return np.array(logs)


def poisson_adjusted_pc(n_c, m, profile, tail=1e-9, m_limit=DEFAULT_M_LIMIT,
                        n_limit=DEFAULT_N_LIMIT):
    """Collision probability under Poisson traffic with mean n_c users/slot:
    the plain law mixed over the arrival count."""
    if n_c < 0:
        raise AnalyticsConfigError("negative traffic mean")
    if n_c == 0:
        return 0.0
    pmf = _poisson_terms(n_c, tail)
    if pmf.size - 1 > n_limit:
        raise AnalyticsConfigError(
            f"size guard: Poisson mixture reaches n={pmf.size - 1} > {n_limit}; "
            "raise n_limit for offline use")
    total = 0.0
    for i, w in enumerate(pmf):
        if i >= 2 and w > 0.0:
            total += w * collision_probability(i, m, profile,
                                               m_limit=m_limit, n_limit=n_limit)
    return float(total)


def poisson_adjusted_distribution(n_c, m, profile, tail=1e-9,
                                  m_limit=DEFAULT_M_LIMIT,
                                  n_limit=DEFAULT_N_LIMIT):
    """Occupancy distribution mixed over a Poisson arrival count."""
    pmf = _poisson_terms(n_c, tail)
    if pmf.size - 1 > n_limit:
        raise AnalyticsConfigError("size guard: raise n_limit for offline use")
    out = np.zeros(pmf.size)
    for i, w in enumerate(pmf):
        if w <= 0.0:
            continue
        d = multiplicity_distribution(i, m, profile, m_limit=m_limit, n_limit=n_limit)
        out[: i + 1] += w * d.p_of_u
    return MultiplicityDistribution(int(round(n_c)), m, _profile_probs(profile), out)


def expected_parallelization(lut, dist, l, r):
    """Mean resolution frequencies demanded per admission resource:
    sum over collision sizes u of f(L, R, u) * p(u)."""
    total = 0.0
    for u in range(2, dist.p_of_u.size):
        pu = float(dist.p_of_u[u])
        if pu <= 0.0:
            continue
        total += lut.query(l, r, u) * pu
    return total


class RaqModel:
    """Bufferless resolution-queue abstraction: collisions arrive, frequency
    groups serve them for a deterministic L slots each."""

    def __init__(self, l_j, m_ac_j, m_g, p_r, variant="paper"):
        self.l_j = l_j
        self.m_ac_j = m_ac_j
        self.m_g = int(m_g)
        self.p_r = float(p_r)
        self.variant = variant

    def __repr__(self):
        return f"RaqModel(m_g={self.m_g}, p_r={self.p_r:.4f}, variant={self.variant})"


def raq_blocking(l_j, m_ac_j, m_rc, expected_mp, variant="paper"):
    """Blocking probability of the resolution queue.

    Server count m_g = floor(m_rc / expected_mp). The default form keeps the
    printed normalization whose sum starts at one busy server (so m_g = 1
    degenerates to blocking 1); ``variant="standard"`` includes the
    empty-system term, giving the classical Erlang-B loss formula.
    """
    if expected_mp <= 0:
        raise AnalyticsConfigError("expected parallelization must be > 0")
    if variant not in ("paper", "standard"):
        raise AnalyticsConfigError(f"unknown blocking variant {variant!r}")
    m_g = int(math.floor(m_rc / expected_mp))
    if m_g == 0:
        return RaqModel(l_j, m_ac_j, 0, 1.0, variant)
    a = float(l_j) * float(m_ac_j)
    start = 1 if variant == "paper" else 0
    os = np.arange(start, m_g + 1, dtype=float)
    with np.errstate(divide="ignore"):
        log_terms = os * (math.log(a) if a > 0 else -np.inf) - gammaln(os + 1)
    p_r = float(np.exp(log_terms[-1] - logsumexp(log_terms)))
    return RaqModel(l_j, m_ac_j, m_g, p_r, variant)


def transition_matrix(p_on, p_c, p_r):
    """Row-stochastic transition matrix over (Off, Tx, A_R, Suc, Fail)."""
    for name, v in (("p_on", p_on), ("p_c", p_c), ("p_r", p_r)):
        if not 0.0 <= v <= 1.0:
            raise AnalyticsConfigError(f"{name} must be in [0,1]")
    return np.array([
        [1.0 - p_on, p_on, 0.0, 0.0, 0.0],
        [0.0, 0.0, p_c, 1.0 - p_c, 0.0],
        [0.0, 0.0, 0.0, 1.0 - p_r, p_r],
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0, 0.0],
    ])


def markov_steady_state(p_on, p_c, p_r):
    """Stationary distribution of the user chain, solved numerically from the
    transition structure (pi P = pi, sum pi = 1)."""
    p_mat = transition_matrix(p_on, p_c, p_r)
    a = np.vstack([p_mat.T - np.eye(5), np.ones(5)])
    b = np.zeros(6)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    return pi


def activation_probability(lam):
    """Chance a user turns active between two access opportunities."""
    return 1.0 - math.exp(-lam)
