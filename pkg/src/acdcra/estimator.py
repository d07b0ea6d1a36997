"""Backlog and collision-multiplicity estimation from a single ternary observation.

The main estimator maps the set of non-idle resources to an expected draw
count of the coupon collector's problem with unequal coupon probabilities:

    N_hat = sum_{z>=0} ( 1 - prod_{i in occupied} (1 - exp(-p_i * z)) )

Engineered selection probabilities (a geometric "power series" p_i = p0*a^i)
stretch the estimation range: the expectation over the full resource set is
roughly 1/p0, so p0 picks the estimation ceiling. Two maximum-likelihood
baselines operating on uniform selection probabilities are included for
benchmarking: an occupancy MLE built on Stirling numbers of the second kind,
and a root-finding MLE on the collided/successful resource counts.
"""

import math
from itertools import product

import numpy as np
from scipy.special import gammaln

from .channel import COLLISION

_TERM_CUTOFF = 1e-12
_Z_CAP_FACTOR = 100


class EstimationError(ValueError):
    pass


class ProfileConfigError(ValueError):
    pass


def solve_power_profile_alpha(p0, m):
    """Growth factor a > 0 with sum_{i=1..m} p0 * a^i = 1, bisected to 1e-12.

    a = 1 is the uniform limit (p0 = 1/m). The left-hand sum is increasing in
    a, so a unique root exists for every p0 in (0, 1).
    """
    if not 0.0 < p0 < 1.0:
        raise ProfileConfigError(f"p0 must be in (0,1), got {p0}")
    if m < 2:
        raise ProfileConfigError("power profile needs at least 2 resources")
    if abs(p0 * m - 1.0) < 1e-12:
        return 1.0

    def excess(a):
        i = np.arange(1, m + 1, dtype=float)
        return p0 * np.sum(a ** i) - 1.0

    lo, hi = 1e-9, 1e3
    if excess(lo) > 0 or excess(hi) < 0:
        raise ProfileConfigError(f"no power-profile growth factor for p0={p0}, m={m}")
    while hi - lo > 1e-12 * max(1.0, lo):
        mid = 0.5 * (lo + hi)
        if excess(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class SelectionProfile:
    """Per-resource selection probabilities plus their estimation ceiling.

    The ceiling ``n_max_ceiling`` is the expected draw count over the full
    resource set, i.e. the largest backlog the profile can resolve.
    """

    def __init__(self, probabilities, family="custom", params=None):
        p = np.asarray(probabilities, dtype=float)
        if p.size == 0:
            raise ProfileConfigError("empty selection profile")
        if np.any(p <= 0.0):
            raise ProfileConfigError("all selection probabilities must be > 0")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ProfileConfigError(f"probabilities sum to {p.sum():.12f}, not 1")
        self.probabilities = p
        self.family = family
        self.params = dict(params or {})
        self._ccp_cache = {}
        self._pessimism = None
        self.n_max_ceiling = self.expected_draws(frozenset(range(p.size)))

    @property
    def m(self):
        return self.probabilities.size

    @classmethod
    def uniform(cls, m):
        return cls(np.full(m, 1.0 / m), family="uniform", params={"m": m})

    @classmethod
    def power(cls, p0, m):
        alpha = solve_power_profile_alpha(p0, m)
        p = p0 * alpha ** np.arange(1, m + 1, dtype=float)
        p /= p.sum()  # removes the residual bisection error
        return cls(p, family="power", params={"p0": p0, "alpha": alpha, "m": m})

    @classmethod
    def geometric(cls, q, m):
        if not 0.0 < q < 1.0:
            raise ProfileConfigError("geometric parameter must be in (0,1)")
        p = q * (1.0 - q) ** np.arange(1, m + 1, dtype=float)
        return cls(p / p.sum(), family="geometric", params={"q": q, "m": m})

    @classmethod
    def poisson(cls, lam, m):
        if lam <= 0:
            raise ProfileConfigError("poisson parameter must be > 0")
        i = np.arange(1, m + 1, dtype=float)
        logp = i * math.log(lam) - lam - gammaln(i + 1)
        p = np.exp(logp)
        return cls(p / p.sum(), family="poisson", params={"lam": lam, "m": m})

    def expected_draws(self, occupied):
        """Cached coupon-collector expectation for a set of resource indices."""
        occ = frozenset(occupied)
        hit = self._ccp_cache.get(occ)
        if hit is None:
            cap = getattr(self, "n_max_ceiling", None)
            z_cap = None if cap is None else int(_Z_CAP_FACTOR * max(cap, 1.0))
            hit = _ccp_sum(self.probabilities[sorted(occ)], z_cap)
            self._ccp_cache[occ] = hit
        return hit

    def __repr__(self):
        return (f"SelectionProfile(family={self.family}, m={self.m}, "
                f"n_max_ceiling={self.n_max_ceiling:.1f})")


_Z_HARD_CAP = 30_000_000


def _ccp_sum(p_occupied, z_cap=None, chunk=32768):
    """sum_{z>=0} (1 - prod_i (1 - exp(-p_i z))) for the occupied probabilities.

    The summand decreases monotonically toward 0, so summation stops once a
    term drops below 1e-12 (or at the z cap, whichever comes first). Evaluated
    through log1p/expm1 to keep the 1-minus-product accurate in the tail.
    """
    p = np.asarray(p_occupied, dtype=float)
    if p.size == 0:
        return 0.0
    cap = min(z_cap, _Z_HARD_CAP) if z_cap is not None else _Z_HARD_CAP
    total = 1.0  # z = 0 term: the product over empty exponents is 0
    z0 = 1
    while True:
        z = np.arange(z0, z0 + chunk, dtype=float)
        logprod = np.sum(np.log1p(-np.exp(-np.outer(z, p))), axis=1)
        terms = -np.expm1(logprod)
        if z0 + chunk > cap:
            total += terms[z <= cap].sum()
            if z_cap is None and terms[-1] >= _TERM_CUTOFF:
                raise ProfileConfigError(
                    "expected-draw sum did not converge; selection "
                    "probabilities are too small to tabulate")
            break
        below = np.nonzero(terms < _TERM_CUTOFF)[0]
        if below.size:
            total += terms[: below[0] + 1].sum()
            break
        total += terms.sum()
        z0 += chunk
    return float(total)


def ccp_expected_draws(occupied, profile):
    """Expected number of draws that produced the given non-idle resource set."""
    return profile.expected_draws(occupied)


def solve_power_profile(p0, m):
    """Power-series profile with sum_{i=1..m} p0*alpha^i = 1."""
    return SelectionProfile.power(p0, m)


def heuristic_partition(symbols, n_hat, profile):
    """Per-resource multiplicity guess: ceil(p_i * n_hat) on collisions,
    floored at the minimum collision size 2.

    Idle and singleton resources are reproduced exactly; row sums may exceed
    n_hat because of the ceilings (deliberately not renormalized).
    """
    sym = np.asarray(symbols)
    p = profile.probabilities
    guess = np.maximum(np.ceil(p * float(n_hat)), 2.0)
    out = np.where(sym == COLLISION, guess, sym)
    return out.astype(np.int64)


def ml_partition(symbols, n_hat, profile):
    """Most likely multiplicity partition consistent with the observation.

    Enumerates every sequence g with g_i = 0 on idle, 1 on singleton and
    g_i >= 2 on collision resources, summing to n_hat, and returns the one
    maximizing the multinomial probability under the selection profile.
    Ties break toward the lexicographically smallest sequence. Enumeration
    cost grows with n_hat^(number of collisions); meant for small instances.
    """
    sym = np.asarray(symbols)
    n_hat = int(n_hat)
    coll = np.nonzero(sym == COLLISION)[0]
    base = int(np.sum(sym == 1))
    extra = n_hat - base - 2 * len(coll)
    if extra < 0 or (len(coll) == 0 and extra != 0):
        raise EstimationError(
            f"n_hat={n_hat} infeasible for observation with {base} singletons "
            f"and {len(coll)} collisions")
    logp = np.log(profile.probabilities)
    log_fact = gammaln(np.arange(n_hat + 2))

    best_guess, best_ll = None, -np.inf
    for split in _compositions(extra, len(coll)):
        g = sym.astype(np.int64).copy()
        g[sym == COLLISION] = 0
        for i, extra_i in zip(coll, split):
            g[i] = 2 + extra_i
        # multinomial log-probability of the counts g
        ll = log_fact[n_hat] - np.sum(log_fact[g]) + float(np.dot(g, logp))
        if ll > best_ll + 1e-12 or (abs(ll - best_ll) <= 1e-12 and
                                    best_guess is not None and
                                    tuple(g) < tuple(best_guess)):
            best_guess, best_ll = g, ll
    return best_guess


def _compositions(total, parts):
    """All nonnegative integer vectors of length `parts` summing to `total`."""
    if parts == 0:
        yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def guess_set(symbols, n_hat):
    """All partition sequences consistent with the observation and total."""
    sym = np.asarray(symbols)
    coll = np.nonzero(sym == COLLISION)[0]
    base = int(np.sum(sym == 1))
    extra = n_hat - base - 2 * len(coll)
    out = []
    if extra < 0:
        return out
    for split in _compositions(extra, len(coll)):
        g = sym.astype(np.int64).copy()
        g[sym == COLLISION] = 0
        for i, extra_i in zip(coll, split):
            g[i] = 2 + extra_i
        out.append(tuple(g))
    return sorted(out)


_stirling_cache = {}


def _log_stirling2(n_max, k_max):
    """Table of log S(n,k) via the triangular recurrence, log-sum-exp form."""
    key = (n_max, k_max)
    hit = _stirling_cache.get(key)
    if hit is not None:
        return hit
    table = np.full((n_max + 1, k_max + 1), -np.inf)
    table[0, 0] = 0.0
    for n in range(1, n_max + 1):
        kk = min(n, k_max)
        prev = table[n - 1]
        for k in range(1, kk + 1):
            with_k = math.log(k) + prev[k] if prev[k] > -np.inf else -np.inf
            table[n, k] = np.logaddexp(with_k, prev[k - 1])
    _stirling_cache[key] = table
    return table


def mle_stirling(m_nonidle, m, n_cap):
    """Occupancy MLE for the backlog from the count of non-idle resources.

    Maximizes P[m_nonidle | m, N] = S(N, m_nonidle) m! / (m^N (m-m_nonidle)!)
    over N in [m_nonidle, n_cap], in log space. With every resource non-idle
    the likelihood increases monotonically, so the argmax saturates at n_cap.
    """
    if not 0 <= m_nonidle <= m:
        raise EstimationError(f"m_nonidle={m_nonidle} outside [0, {m}]")
    if m_nonidle == 0:
        return 0
    table = _log_stirling2(n_cap, m)
    ns = np.arange(m_nonidle, n_cap + 1)
    ll = (table[ns, m_nonidle] + gammaln(m + 1)
          - ns * math.log(m) - gammaln(m - m_nonidle + 1))
    return int(ns[np.argmax(ll)])


def mle_zanella(m_success, m_collision, m, bracket_hi=1e5):
    """Backlog MLE from the collided/successful resource counts.

    Solves (N - m_s)/m_c = x (e^x - 1) / (e^x - 1 - x) with x = N/m by
    bisection on [m_s + 2 m_c, bracket_hi] to 1e-9. With a full collision set
    the equation has no root; the minimal consistent backlog (the lower
    bracket) is returned, so the estimate stops tracking N from there on.
    Returns (n_hat, average collision size).
    """
    if m_collision < 1:
        raise EstimationError("collision count must be >= 1")

    def residual(n):
        x = n / m
        # x*(e^x-1)/(e^x-1-x) rewritten with exp(-x) to stay finite for large x
        emx = math.exp(-x)
        rhs = x * (1.0 - emx) / (1.0 - emx - x * emx)
        return (n - m_success) / m_collision - rhs

    lo = float(m_success + 2 * m_collision)
    hi = float(bracket_hi)
    if residual(lo) > 0.0:
        n_hat = lo
    elif residual(hi) < 0.0:
        n_hat = lo  # no root below the bracket: saturated observation
    else:
        while hi - lo > 1e-9 * max(1.0, lo):
            mid = 0.5 * (lo + hi)
            if residual(mid) <= 0.0:
                lo = mid
            else:
                hi = mid
        n_hat = 0.5 * (lo + hi)
    return n_hat, (n_hat - m_success) / m_collision


def pessimism_factor(profile, m=None, runs=1000, rng=None):
    """Mean per-resource absolute error of the heuristic estimator.

    Monte Carlo over true backlogs drawn uniformly from [1, n_max_ceiling];
    the result is added on top of multiplicity estimates before admission so
    that underestimation does not break the delay guarantee. Cached on the
    profile (keyed by the run count).
    """
    if m is not None and m != profile.m:
        raise ProfileConfigError("resource count does not match the profile")
    cached = profile._pessimism
    if cached is not None and cached[0] >= runs:
        return cached[1]
    rng = rng if rng is not None else np.random.default_rng(0)
    m = profile.m
    p = profile.probabilities
    hi = max(1, int(round(profile.n_max_ceiling)))
    total = 0.0
    for _ in range(runs):
        n_true = int(rng.integers(1, hi + 1))
        counts = rng.multinomial(n_true, p)
        sym = np.minimum(counts, COLLISION)
        occ = frozenset(np.nonzero(counts)[0].tolist())
        n_hat = profile.expected_draws(occ)
        u_hat = heuristic_partition(sym, n_hat, profile)
        total += float(np.mean(np.abs(u_hat - counts)))
    factor = total / runs
    profile._pessimism = (runs, factor)
    return factor


def apply_pessimism(u_hat, symbols, factor):
    """ceil(u_i + factor) on collision resources, untouched elsewhere."""
    sym = np.asarray(symbols)
    u = np.asarray(u_hat, dtype=float)
    out = np.where(sym == COLLISION, np.ceil(u + factor), u)
    return out.astype(np.int64)
