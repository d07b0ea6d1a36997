"""Full protocol orchestration.

AC/DC-RA slot loop: activate -> contend on the class admission channel ->
estimate collision multiplicities -> admission decision -> parallel tree
resolution, with per-user state tracking along the chain
Off/Tx/A_R/(Resolving)/Suc/Fail. The dynamic-access-barring baseline runs the
same traffic over one pooled slotted-ALOHA resource set with a dynamically
updated barring factor and full barring of the non-prioritized class.
"""

import numpy as np

from .admission import CapacityLedger, decide, decide_buffered
from .channel import COLLISION, contend
from .estimator import apply_pessimism, heuristic_partition, pessimism_factor
from .tree import ResolutionJob

# Fig-8 style user chain plus the Resolving refinement of A_R -> Suc.
LEGAL_TRANSITIONS = {
    ("Off", "Tx"),
    ("Tx", "Suc"),
    ("Tx", "A_R"),
    ("A_R", "Resolving"),
    ("A_R", "Fail"),
    ("Resolving", "Suc"),
    ("Resolving", "Fail"),
}

# Drift coefficients of the pseudo-Bayesian backlog tracker used by the
# barring baseline (per observed collision/success/idle resource).
DAB_DRIFT = {"collision": 2.39, "success": -1.0, "idle": -0.81}


class StateError(RuntimeError):
    pass


class UserRecord:
    __slots__ = ("uid", "cls", "state", "activation_slot", "completion_slot",
                 "fail_reason")

    def __init__(self, uid, cls, activation_slot):
        self.uid = uid
        self.cls = cls
        self.state = "Off"
        self.activation_slot = activation_slot
        self.completion_slot = None
        self.fail_reason = None
        self.set_state("Tx")

    def set_state(self, new):
        if (self.state, new) not in LEGAL_TRANSITIONS:
            raise StateError(f"illegal transition {self.state} -> {new} (user {self.uid})")
        self.state = new


class SlotReport:
    __slots__ = ("slot", "activated", "collided_resources", "succeeded",
                 "rejected", "dropped", "admitted_jobs")

    def __init__(self, slot):
        self.slot = slot
        self.activated = 0
        self.collided_resources = 0
        self.succeeded = 0
        self.rejected = 0
        self.dropped = 0
        self.admitted_jobs = 0


class AcdcWorld:
    """One AC/DC-RA simulation run (single rng, single slot loop)."""

    def __init__(self, classes, m_rc, lut, rng, buffered=False, max_wait=0,
                 exact_multiplicity=False, pessimism_runs=1000,
                 count_root_slot=False, admission_log=None):
        self.classes = sorted(classes, key=lambda c: c.index)
        seen = set()
        for c in self.classes:
            if seen & set(c.ac_resources):
                raise ValueError("admission channels must be disjoint")
            seen.update(c.ac_resources)
        self.m_ac = len(seen)
        self.m_rc = int(m_rc)
        self.lut = lut
        self.ledger = CapacityLedger(m_rc)
        self.rng = rng
        self.buffered = buffered
        self.max_wait = int(max_wait)
        self.exact_multiplicity = exact_multiplicity
        self.count_root_slot = count_root_slot
        self.admission_log = admission_log
        self.users = {}
        self.jobs = {}
        self._next_job = 0
        self.pessimism = {}
        if not exact_multiplicity:
            for c in self.classes:
                self.pessimism[c.index] = pessimism_factor(
                    c.profile, runs=pessimism_runs,
                    rng=np.random.default_rng(12345 + c.index))
        # request/user accounting for rejection statistics
        self.requests = 0
        self.rejected_requests = {"infeasible": 0, "no-capacity": 0}

    # -- slot phases ------------------------------------------------------

    def _step_jobs(self, slot, report):
        for jid in sorted(self.jobs):
            job = self.jobs[jid]
            for uid in job.step(slot, self.rng):
                rec = self.users[uid]
                rec.set_state("Suc")
                rec.completion_slot = slot
                report.succeeded += 1
        for jid in sorted(self.jobs):
            job = self.jobs[jid]
            if job.complete:
                self.ledger.release(jid, slot)
                del self.jobs[jid]
            elif slot >= job.deadline_slot:
                for uid in sorted(job.pending_users()):
                    rec = self.users[uid]
                    rec.set_state("Fail")
                    rec.fail_reason = "dropped"
                    report.dropped += 1
                self.ledger.release(jid, slot)
                del self.jobs[jid]

    def _admit(self, slot, qos, resource, node_users, u_hat, u_dagger, report):
        self.requests += 1
        jid = self._next_job
        free_before = self.ledger.free_now(slot)
        if self.buffered:
            decision = decide_buffered(qos, u_dagger, self.lut, self.ledger,
                                       slot, jid, self.max_wait,
                                       count_root_slot=self.count_root_slot)
        else:
            decision = decide(qos, u_dagger, self.lut, self.ledger, slot, jid,
                              count_root_slot=self.count_root_slot)
        if decision.accepted:
            self._next_job += 1
            deadline = slot + qos.delay_constraint - (1 if self.count_root_slot else 0)
            job = ResolutionJob(jid, node_users, u_dagger, decision.m_p,
                                created_slot=slot, deadline_slot=deadline,
                                start_slot=slot + 1 + decision.wait)
            self.jobs[jid] = job
            for uid in node_users:
                self.users[uid].set_state("Resolving")
            report.admitted_jobs += 1
        else:
            self.rejected_requests[decision.reason] += 1
            for uid in node_users:
                rec = self.users[uid]
                rec.set_state("Fail")
                rec.fail_reason = decision.reason
                report.rejected += 1
        if self.admission_log is not None:
            self.admission_log.append({
                "slot": slot, "class": qos.index, "resource": resource,
                "u_hat": int(u_hat), "u_dagger": int(u_dagger),
                "verdict": decision.verdict if decision.accepted else decision.reason,
                "m_p": decision.m_p, "free_before": free_before,
                "free_after": self.ledger.free_now(slot)})

    def step(self, slot, arrivals_by_class):
        """Run one slot; arrivals_by_class maps class index -> new user ids."""
        report = SlotReport(slot)
        self._step_jobs(slot, report)
        for qos in self.classes:
            new_users = arrivals_by_class.get(qos.index, [])
            report.activated += len(new_users)
            for uid in new_users:
                self.users[uid] = UserRecord(uid, qos.index, slot)
            if not new_users:
                continue
            outcome = contend(new_users, qos.profile, self.rng)
            symbols = outcome.symbols()
            collided = outcome.collided_resources()
            report.collided_resources += len(collided)
            for i, node in enumerate(outcome.slots):
                if len(node) == 1:
                    rec = self.users[node[0]]
                    rec.set_state("Suc")
                    rec.completion_slot = slot
                    report.succeeded += 1
            if not collided:
                continue
            if self.exact_multiplicity:
                mult = outcome.multiplicities()
                u_hat = mult
                u_dagger = mult
            else:
                n_hat = qos.profile.expected_draws(outcome.occupied_set())
                u_hat = heuristic_partition(symbols, n_hat, qos.profile)
                u_dagger = apply_pessimism(u_hat, symbols, self.pessimism[qos.index])
            for i in collided:  # ascending resource index within the class
                self._admit(slot, qos, qos.ac_resources[i], outcome.slots[i],
                            u_hat[i], u_dagger[i], report)
        return report

    @property
    def live_jobs(self):
        return len(self.jobs)


class DabWorld:
    """Dynamic-access-barring baseline over one pooled resource set.

    Backlogged and new users of the permitted class transmit with the current
    barring probability on a uniformly chosen resource; the barring factor
    follows min(1, M / backlog estimate) with a drift-updated estimate, and
    the non-prioritized class is fully barred while the prioritized class has
    pending users. No admission: the only failure mode is a deadline drop.
    """

    def __init__(self, m_total, class_deadlines, rng, priority_order=None):
        self.m = int(m_total)
        self.deadlines = dict(class_deadlines)  # class index -> L
        self.rng = rng
        self.priority = sorted(self.deadlines) if priority_order is None else list(priority_order)
        self.users = {}
        self.pending = {j: set() for j in self.deadlines}
        self.backlog_estimate = 0.0
        self.barring_factor = 1.0

    def step(self, slot, arrivals_by_class):
        report = SlotReport(slot)
        for j in sorted(arrivals_by_class):
            for uid in arrivals_by_class[j]:
                self.users[uid] = UserRecord(uid, j, slot)
                self.pending[j].add(uid)
                report.activated += 1
        # full barring of every class behind the first one with pending users
        permitted = None
        for j in self.priority:
            if self.pending[j]:
                permitted = j
                break
        transmitters = []
        if permitted is not None:
            for uid in sorted(self.pending[permitted]):
                if self.rng.random() < self.barring_factor:
                    transmitters.append(uid)
        counts = np.zeros(self.m, dtype=np.int64)
        if transmitters:
            picks = self.rng.integers(0, self.m, size=len(transmitters))
            by_resource = {}
            for uid, r in zip(transmitters, picks):
                by_resource.setdefault(int(r), []).append(uid)
                counts[r] += 1
            for r, uids in by_resource.items():
                if len(uids) == 1:
                    uid = uids[0]
                    rec = self.users[uid]
                    rec.set_state("Suc")
                    rec.completion_slot = slot
                    self.pending[rec.cls].discard(uid)
                    report.succeeded += 1
        n_coll = int(np.sum(counts >= 2))
        n_succ = int(np.sum(counts == 1))
        n_idle = self.m - n_coll - n_succ
        report.collided_resources += n_coll
        self.backlog_estimate = max(0.0, self.backlog_estimate
                                    + DAB_DRIFT["collision"] * n_coll
                                    + DAB_DRIFT["success"] * n_succ
                                    + DAB_DRIFT["idle"] * n_idle)
        if self.backlog_estimate <= self.m or self.backlog_estimate == 0:
            self.barring_factor = 1.0
        else:
            self.barring_factor = min(1.0, self.m / self.backlog_estimate)
        # deadline drops (same delay budget convention as the main protocol)
        for j in sorted(self.pending):
            expired = [uid for uid in self.pending[j]
                       if slot >= self.users[uid].activation_slot + self.deadlines[j]]
            for uid in sorted(expired):
                rec = self.users[uid]
                # baseline users go straight from contention to dropped
                rec.state = "Fail"
                rec.fail_reason = "dropped"
                self.pending[j].discard(uid)
                report.dropped += 1
        return report

    @property
    def backlog(self):
        return sum(len(v) for v in self.pending.values())


def acdc_slot(world, slot, arrivals_by_class):
    """One admission-controlled slot (see AcdcWorld.step)."""
    return world.step(slot, arrivals_by_class)


def dab_slot(world, slot, arrivals_by_class):
    """One barring-baseline slot (see DabWorld.step)."""
    return world.step(slot, arrivals_by_class)


def run_scenario(config, seed=None):
    """Simulate one experiment configuration into a MetricsReport."""
    from .harness import run_one  # config parsing and metrics live in the harness

    return run_one(config, seed=seed)
