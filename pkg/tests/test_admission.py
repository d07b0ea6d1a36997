import numpy as np
import pytest

from acdcra.admission import (AdmissionDecision, CapacityLedger, LedgerError,
                              QoSClass, decide, decide_buffered, release)
from acdcra.estimator import SelectionProfile
from acdcra.tree import ResolutionJob, bundled_table


def _qos(l=15, r=0.95, m_ac=4, index=1):
    return QoSClass(index, l, r, tuple(range(m_ac)), SelectionProfile.power(1e-3, m_ac))


def test_decide_accept_rejects_and_capacity():
    lut = bundled_table()
    ledger = CapacityLedger(12)
    d = decide(_qos(l=15), 20, lut, ledger, slot=0, job_id=1)
    assert d.accepted and d.m_p == 3 and d.frequencies == (0, 1, 2)
    assert ledger.free_now(0) == 9

    d2 = decide(_qos(l=5), 10, lut, CapacityLedger(12), slot=0, job_id=2)
    assert not d2.accepted and d2.reason == "infeasible"

    small = CapacityLedger(2)
    d3 = decide(_qos(l=15), 20, lut, small, slot=0, job_id=3)
    assert not d3.accepted and d3.reason == "no-capacity"


def test_decide_requires_collision():
    with pytest.raises(ValueError):
        decide(_qos(), 1, bundled_table(), CapacityLedger(12), 0, 0)


def test_ledger_conservation_and_release():
    lut = bundled_table()
    ledger = CapacityLedger(12)
    d1 = decide(_qos(l=15), 20, lut, ledger, slot=0, job_id=1)   # m_p = 3
    d2 = decide(_qos(l=15), 25, lut, ledger, slot=0, job_id=2)   # m_p = 4
    assert d1.m_p == 3 and d2.m_p == 4
    assert ledger.free_now(0) == 5
    ledger.check_conservation(1)
    release(ledger, 1, slot=6)
    assert ledger.free_now(6) == 8
    release(ledger, 2, slot=6)
    assert ledger.free_now(6) == 12
    with pytest.raises(LedgerError):
        release(ledger, 99, slot=6)


def test_early_completion_frees_at_completion_not_deadline():
    lut = bundled_table()
    ledger = CapacityLedger(4)
    qos = _qos(l=10, m_ac=1)
    d = decide(qos, 2, lut, ledger, slot=0, job_id=0)
    assert d.accepted
    job = ResolutionJob(0, (100, 101), 2, d.m_p, created_slot=0, deadline_slot=10)
    rng = np.random.default_rng(42)
    slot = 0
    while not job.complete:
        slot += 1
        job.step(slot, rng)
    assert slot < 10  # resolves early with overwhelming probability
    ledger.release(0, slot)
    assert ledger.free_now(slot) == 4  # capacity back at completion, not deadline


def test_allocation_uses_lowest_free_frequencies():
    ledger = CapacityLedger(6)
    assert ledger.allocate("a", 2, 1, 5) == (0, 1)
    assert ledger.allocate("b", 2, 1, 5) == (2, 3)
    ledger.release("a", 2)
    assert ledger.allocate("c", 3, 3, 8) == (0, 1, 4)


def test_buffered_accepts_at_earliest_feasible_wait():
    lut = bundled_table()
    ledger = CapacityLedger(3)
    # a job holds everything through slot 3; capacity reappears at slot 4
    ledger.allocate("busy", 3, start=1, end=3)
    qos = _qos(l=18)
    # waits 1..2 still collide with the busy window; at wait 3 the residual
    # deadline of 15 slots asks for 3 frequencies, which are then free
    d = decide_buffered(qos, 20, lut, ledger, slot=0, job_id=1, max_wait=6)
    assert d.accepted and d.wait == 3 and d.m_p == 3
    # occupancy begins after the wait
    assert ledger.bookings[1].start == 4


def test_buffered_rejects_when_residual_infeasible():
    lut = bundled_table()
    ledger = CapacityLedger(3)
    ledger.allocate("busy", 3, start=1, end=30)
    qos = _qos(l=12)
    # residual deadline falls under the feasibility floor before capacity frees
    d = decide_buffered(qos, 20, lut, ledger, slot=0, job_id=1, max_wait=11)
    assert not d.accepted and d.reason == "no-capacity"


def test_buffered_immediate_accept_passthrough():
    lut = bundled_table()
    ledger = CapacityLedger(12)
    d = decide_buffered(_qos(l=15), 20, lut, ledger, slot=0, job_id=1, max_wait=4)
    assert d.accepted and d.wait == 0


def test_admission_decision_repr():
    assert "Reject" in repr(AdmissionDecision.reject("infeasible"))
