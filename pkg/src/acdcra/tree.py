"""Parallelized breadth-first binary contention tree resolution.

An admitted collision is resolved by repeated binary splitting: the users of a
collision node re-select one of two fresh resources, singleton picks get
through, collided picks form child nodes that are explored later in strict
FIFO (breadth-first) order. Up to ``m_p`` pending nodes are worked per slot,
one per allocated resolution frequency.

Delay is counted in resolution-channel slots starting right after admission:
the admission-channel collision itself is the tree root and is not billed
(the first resolution slot already realizes the level-1 branches). The
alternate convention that bills the root slot inside the budget is available
everywhere through ``count_root_slot``.

The delay/reliability trade-off is tabulated in a ParallelizationLUT mapping
(delay bound L, backlog N) to the smallest parallelization ``m_p`` whose
completion time stays within L with the target reliability, 0 if none does.
"""

import csv
import io
from collections import deque

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency normally
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap if not (args and callable(args[0])) else args[0]

from importlib import resources as _resources


class ResolutionJob:
    """Live tree-resolution state of one admitted collision.

    The frontier queues unexplored collision nodes as (level, user tuple);
    every user sits in exactly one frontier node until it resolves.
    """

    def __init__(self, job_id, user_ids, estimated_multiplicity, m_p,
                 created_slot, deadline_slot, start_slot=None):
        users = tuple(sorted(user_ids))
        if len(users) < 2:
            raise ValueError("a resolution job needs at least 2 users")
        if m_p < 1:
            raise ValueError("parallelization must be >= 1")
        self.job_id = job_id
        self.user_ids = users
        self.estimated_multiplicity = int(estimated_multiplicity)
        self.m_p = int(m_p)
        self.created_slot = int(created_slot)
        self.deadline_slot = int(deadline_slot)
        self.start_slot = int(created_slot + 1 if start_slot is None else start_slot)
        self.frontier = deque([(0, users)])
        self.resolved = {}  # user id -> slot

    @property
    def complete(self):
        return not self.frontier

    def pending_users(self):
        out = set()
        for _, node in self.frontier:
            out.update(node)
        return out

    def step(self, slot, rng):
        """Work up to m_p frontier nodes; returns the users resolved this slot.

        Each dequeued node's users pick one of two branches uniformly at
        random; singleton branches resolve their user in this slot, collision
        branches join the frontier tail, idle branches vanish.
        """
        if slot < self.start_slot:
            return []
        done = []
        for _ in range(min(self.m_p, len(self.frontier))):
            level, node = self.frontier.popleft()
            picks = rng.integers(0, 2, size=len(node))
            for branch in (0, 1):
                child = tuple(u for u, b in zip(node, picks) if b == branch)
                if len(child) == 1:
                    self.resolved[child[0]] = slot
                    done.append(child[0])
                elif len(child) >= 2:
                    self.frontier.append((level + 1, child))
        return done


def run_to_completion(n, m_p, rng):
    """Resolution slots until the last of n users resolves (n >= 2).

    Count-level twin of ResolutionJob.step: node sizes split binomially,
    FIFO order, m_p nodes per slot.
    """
    if n < 2:
        raise ValueError("resolution starts from a collision, need n >= 2")
    queue = deque([int(n)])
    resolved = 0
    slot = 0
    while resolved < n:
        slot += 1
        for _ in range(min(m_p, len(queue))):
            u = queue.popleft()
            k = int(rng.binomial(u, 0.5))
            for c in (k, u - k):
                if c == 1:
                    resolved += 1
                elif c >= 2:
                    queue.append(c)
    return slot


@njit(cache=True)
def _completion_slots_kernel(n, m_p, runs, max_slots, seed):  # pragma: no cover
    np.random.seed(seed)
    out = np.empty(runs, np.int64)
    cap = 8 * n + 64
    q = np.empty(cap, np.int64)
    for r in range(runs):
        q[0] = n
        head, tail = 0, 1
        resolved = 0
        slot = 0
        while resolved < n and slot < max_slots:
            slot += 1
            take = min(m_p, tail - head)
            for _ in range(take):
                u = q[head]
                head += 1
                k = np.random.binomial(u, 0.5)
                for c in (k, u - k):
                    if c == 1:
                        resolved += 1
                    elif c >= 2:
                        q[tail] = c
                        tail += 1
            if head > cap // 2 or tail + 2 * m_p + 2 > cap:
                span = tail - head
                for i in range(span):
                    q[i] = q[head + i]
                head, tail = 0, span
        out[r] = slot if resolved >= n else max_slots + 1
    return out


def _completion_slots_py(n, m_p, runs, max_slots, seed):
    rng = np.random.RandomState(seed)
    out = np.empty(runs, np.int64)
    for r in range(runs):
        q = deque([int(n)])
        resolved = 0
        slot = 0
        while resolved < n and slot < max_slots:
            slot += 1
            for _ in range(min(m_p, len(q))):
                u = q.popleft()
                k = int(rng.binomial(u, 0.5))
                for c in (k, u - k):
                    if c == 1:
                        resolved += 1
                    elif c >= 2:
                        q.append(c)
        out[r] = slot if resolved >= n else max_slots + 1
    return out


def completion_slots(n, m_p, runs, max_slots, seed):
    """Monte Carlo batch of completion times; values above max_slots saturate."""
    if _HAVE_NUMBA:
        return _completion_slots_kernel(n, m_p, runs, max_slots, int(seed) & 0x7FFFFFFF)
    return _completion_slots_py(n, m_p, runs, max_slots, int(seed) & 0x7FFFFFFF)


class ParallelizationLUT:
    """Lookup f(L, R, N) -> minimum parallelization, 0 when infeasible."""

    def __init__(self, reliability, l_values, n_values, entries, provenance,
                 runs=None, seed=None):
        self.reliability = float(reliability)
        self.l_values = sorted(int(v) for v in l_values)
        self.n_values = sorted(int(v) for v in n_values)
        self.entries = np.asarray(entries, dtype=np.int64)
        if self.entries.shape != (len(self.n_values), len(self.l_values)):
            raise ValueError("entry grid does not match the axes")
        self.provenance = provenance
        self.runs = runs
        self.seed = seed

    def cell(self, l, n):
        return int(self.entries[self.n_values.index(n), self.l_values.index(l)])

    def query(self, l, r, n):
        """Conservative lookup: N rounds up to the next row, L down to the
        previous column; anything off the safe edge of the grid is infeasible."""
        if abs(r - self.reliability) > 1e-9:
            raise ValueError(f"LUT is built for reliability {self.reliability}, not {r}")
        if l < self.l_values[0]:
            return 0
        l_idx = int(np.searchsorted(self.l_values, l, side="right")) - 1
        n_idx = int(np.searchsorted(self.n_values, n, side="left"))
        if n_idx >= len(self.n_values):
            return 0
        return int(self.entries[n_idx, l_idx])

    def to_csv(self, path_or_buf):
        close = False
        if isinstance(path_or_buf, (str, bytes)):
            buf = open(path_or_buf, "w", newline="")
            close = True
        else:
            buf = path_or_buf
        try:
            w = csv.writer(buf)
            w.writerow(["reliability", "L", "N", "m_p", "provenance", "runs", "seed"])
            for i, n in enumerate(self.n_values):
                for j, l in enumerate(self.l_values):
                    w.writerow([repr(self.reliability), l, n, int(self.entries[i, j]),
                                self.provenance,
                                "" if self.runs is None else self.runs,
                                "" if self.seed is None else self.seed])
        finally:
            if close:
                buf.close()

    @classmethod
    def from_csv(cls, path_or_buf):
        close = False
        if isinstance(path_or_buf, (str, bytes)):
            buf = open(path_or_buf, newline="")
            close = True
        else:
            buf = path_or_buf
        try:
            rows = list(csv.DictReader(buf))
        finally:
            if close:
                buf.close()
        if not rows:
            raise ValueError("empty LUT file")
        rel = float(rows[0]["reliability"])
        ls = sorted({int(r["L"]) for r in rows})
        ns = sorted({int(r["N"]) for r in rows})
        entries = np.zeros((len(ns), len(ls)), dtype=np.int64)
        for r in rows:
            entries[ns.index(int(r["N"])), ls.index(int(r["L"]))] = int(r["m_p"])
        runs = rows[0].get("runs") or None
        seed = rows[0].get("seed") or None
        return cls(rel, ls, ns, entries, rows[0]["provenance"],
                   runs=int(runs) if runs else None,
                   seed=int(seed) if seed else None)


def _enforce_monotone(entries):
    """Make entries non-increasing in L and non-decreasing in N, raising only.

    0 means infeasible and sorts above every finite parallelization.
    """
    e = entries.astype(float)
    e[e == 0] = np.inf
    for _ in range(2):  # two passes reach the joint fixpoint on a grid
        for j in range(e.shape[1] - 2, -1, -1):  # tighter L needs at least as much
            e[:, j] = np.maximum(e[:, j], e[:, j + 1])
        for i in range(1, e.shape[0]):  # more users need at least as much
            e[i, :] = np.maximum(e[i, :], e[i - 1, :])
    out = e.copy()
    out[np.isinf(out)] = 0
    return out.astype(np.int64)


def build_lut(reliability, l_values, n_values, m_p_max, runs, seed,
              count_root_slot=False):
    """Monte Carlo LUT: smallest m_p with P(completion <= L) >= reliability.

    One batch of completion times per (N, m_p) serves every delay column at
    once. ``count_root_slot`` bills the admission collision slot inside L
    (the alternate delay convention), shrinking the usable budget by one.
    """
    l_values = sorted(int(v) for v in l_values)
    n_values = sorted(int(v) for v in n_values)
    offset = 1 if count_root_slot else 0
    max_slots = max(l_values) + 1
    seeds = np.random.SeedSequence(seed).generate_state(len(n_values) * m_p_max)
    entries = np.zeros((len(n_values), len(l_values)), dtype=np.int64)
    for i, n in enumerate(n_values):
        remaining = set(range(len(l_values)))
        for m_p in range(1, m_p_max + 1):
            if not remaining:
                break
            s = int(seeds[i * m_p_max + (m_p - 1)])
            samples = completion_slots(n, m_p, runs, max_slots, s)
            for j in sorted(remaining):
                budget = l_values[j] - offset
                if budget >= 1 and np.mean(samples <= budget) >= reliability:
                    entries[i, j] = m_p
                    remaining.discard(j)
    entries = _enforce_monotone(entries)
    return ParallelizationLUT(reliability, l_values, n_values, entries,
                              provenance=f"monte-carlo(runs={runs}, seed={seed})",
                              runs=runs, seed=seed)


def lut_query(lut, l, r, n):
    return lut.query(l, r, n)


def bundled_table(name="table2_r095.csv"):
    """The delay/parallelization table shipped with the package (R = 0.95)."""
    ref = _resources.files("acdcra.data").joinpath(name)
    return ParallelizationLUT.from_csv(io.StringIO(ref.read_text()))
