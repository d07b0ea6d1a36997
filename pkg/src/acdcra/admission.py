"""Admission control between the outer (contention) and inner (resolution) protocol.

A collided admission-channel resource asks the delay/parallelization table how
many resolution frequencies the backlog needs; the request is rejected when
the deadline is infeasible outright or when the resolution channel cannot
spare that many frequencies, and accepted otherwise, reserving concrete
frequencies in a capacity ledger until the resolution completes (or its
deadline passes).
"""

from .estimator import SelectionProfile


class LedgerError(RuntimeError):
    pass


class QoSClass:
    """A traffic class: delay bound L (slots), reliability R, its own
    admission-channel resources and their selection profile."""

    def __init__(self, index, delay_constraint, reliability, ac_resources, profile):
        if not 0.0 < reliability < 1.0:
            raise ValueError("reliability must be in (0,1)")
        if delay_constraint < 1:
            raise ValueError("delay constraint must be >= 1 slot")
        self.index = int(index)
        self.delay_constraint = int(delay_constraint)
        self.reliability = float(reliability)
        self.ac_resources = tuple(ac_resources)
        if not isinstance(profile, SelectionProfile):
            raise TypeError("profile must be a SelectionProfile")
        if profile.m != len(self.ac_resources):
            raise ValueError("profile size does not match the class resources")
        self.profile = profile

    def __repr__(self):
        return (f"QoSClass(j={self.index}, L={self.delay_constraint}, "
                f"R={self.reliability}, m_ac={len(self.ac_resources)})")


class _Booking:
    __slots__ = ("frequencies", "start", "end")

    def __init__(self, frequencies, start, end):
        self.frequencies = frozenset(frequencies)
        self.start = start
        self.end = end  # inclusive last occupied slot; shrinks on early release


class CapacityLedger:
    """Slot-granular bookkeeping of the resolution-channel frequencies.

    A booking holds specific frequencies over [start, end] inclusive; ``end``
    is the job deadline until an early completion shrinks it. Admission at
    slot t books [t+1+wait, deadline].
    """

    def __init__(self, total):
        if total < 0:
            raise ValueError("negative capacity")
        self.total = int(total)
        self.bookings = {}  # job id -> _Booking

    def free_frequencies(self, start, end=None):
        """Frequencies with no booking overlapping [start, end]."""
        end = start if end is None else end
        busy = set()
        for b in self.bookings.values():
            if b.start <= end and start <= b.end:
                busy.update(b.frequencies)
        return [f for f in range(self.total) if f not in busy]

    def free_now(self, slot):
        """Frequencies available to an admission decided at ``slot``
        (occupancy would begin at slot + 1)."""
        return len(self.free_frequencies(slot + 1))

    def projected_free(self, start, end):
        return len(self.free_frequencies(start, end))

    def allocate(self, job_id, m_p, start, end):
        """Reserve the m_p lowest-indexed frequencies free over [start, end]."""
        if job_id in self.bookings:
            raise LedgerError(f"job {job_id} already holds frequencies")
        free = self.free_frequencies(start, end)
        if len(free) < m_p:
            raise LedgerError("not enough free frequencies")
        freqs = free[:m_p]
        self.bookings[job_id] = _Booking(freqs, start, end)
        return tuple(freqs)

    def release(self, job_id, slot):
        """Return a job's frequencies; they are usable from slot + 1 on.

        The simulation only moves forward, so a released booking can simply
        be dropped: every later capacity query starts after ``slot``.
        """
        if job_id not in self.bookings:
            raise LedgerError(f"unknown job id {job_id}")
        del self.bookings[job_id]

    def held(self, slot):
        return sum(len(b.frequencies) for b in self.bookings.values()
                   if b.start <= slot <= b.end)

    def check_conservation(self, slot):
        free = self.free_now(slot - 1)  # occupancy during `slot` itself
        held = self.held(slot)
        if free + held != self.total:
            raise LedgerError(
                f"ledger leak at slot {slot}: free={free} held={held} total={self.total}")


class AdmissionDecision:
    """Accept carries the granted parallelization and concrete frequencies;
    Reject carries the reason (infeasible or no-capacity)."""

    def __init__(self, verdict, reason=None, m_p=0, frequencies=(), wait=0):
        self.verdict = verdict
        self.reason = reason
        self.m_p = int(m_p)
        self.frequencies = tuple(frequencies)
        self.wait = int(wait)

    @property
    def accepted(self):
        return self.verdict == "accept"

    @classmethod
    def reject(cls, reason):
        return cls("reject", reason=reason)

    def __repr__(self):
        if self.accepted:
            return f"Accept(m_p={self.m_p}, freqs={self.frequencies}, wait={self.wait})"
        return f"Reject({self.reason})"


def decide(qos, u_dagger, lut, ledger, slot, job_id, count_root_slot=False):
    """Admission verdict for one collided resource with pessimistic backlog
    estimate ``u_dagger``; an accept immediately reserves capacity."""
    if u_dagger < 2:
        raise ValueError("admission is decided for collisions only (u >= 2)")
    m_p = lut.query(qos.delay_constraint, qos.reliability, u_dagger)
    if m_p == 0:
        return AdmissionDecision.reject("infeasible")
    start = slot + 1
    end = slot + qos.delay_constraint - (1 if count_root_slot else 0)
    if ledger.projected_free(start, end) < m_p:
        return AdmissionDecision.reject("no-capacity")
    freqs = ledger.allocate(job_id, m_p, start, end)
    return AdmissionDecision("accept", m_p=m_p, frequencies=freqs)


def decide_buffered(qos, u_dagger, lut, ledger, slot, job_id, max_wait,
                    count_root_slot=False):
    """Like :func:`decide` but a capacity miss may wait: re-query the table
    with the residual deadline L - w for w = 1..max_wait against projected
    future releases, accepting at the earliest feasible wait."""
    first = decide(qos, u_dagger, lut, ledger, slot, job_id,
                   count_root_slot=count_root_slot)
    if first.accepted or first.reason != "no-capacity":
        return first
    deadline = slot + qos.delay_constraint - (1 if count_root_slot else 0)
    for wait in range(1, max_wait + 1):
        residual = qos.delay_constraint - wait
        if residual < 1:
            break
        m_p = lut.query(residual, qos.reliability, u_dagger)
        if m_p == 0:
            break  # residual budgets only shrink from here
        start = slot + 1 + wait
        if ledger.projected_free(start, deadline) >= m_p:
            freqs = ledger.allocate(job_id, m_p, start, deadline)
            return AdmissionDecision("accept", m_p=m_p, frequencies=freqs, wait=wait)
    return AdmissionDecision.reject("no-capacity")


def release(ledger, job_id, slot):
    ledger.release(job_id, slot)
