import io

import numpy as np
import pytest

from acdcra.tree import (ParallelizationLUT, ResolutionJob, build_lut,
                         bundled_table, completion_slots, lut_query,
                         run_to_completion)


def test_two_users_resolve_in_one_slot_half_the_time():
    # the root split sends both users to different branches w.p. 1/2
    rng = np.random.default_rng(11)
    wins = sum(run_to_completion(2, 2, rng) == 1 for _ in range(4000))
    assert abs(wins / 4000 - 0.5) < 0.03


def test_run_to_completion_needs_a_collision():
    with pytest.raises(ValueError):
        run_to_completion(1, 2, np.random.default_rng(0))


def test_job_conservation_and_fifo_order():
    rng = np.random.default_rng(12)
    users = tuple(range(17))
    job = ResolutionJob(0, users, 17, 3, created_slot=4, deadline_slot=400)
    slot = 4
    resolved = set()
    while not job.complete:
        slot += 1
        levels = [lvl for lvl, _ in job.frontier]
        assert levels == sorted(levels)  # breadth-first: queue levels never decrease
        got = job.step(slot, rng)
        resolved.update(got)
        pending = job.pending_users()
        assert pending | resolved == set(users)
        assert not (pending & resolved)
    assert resolved == set(users)
    assert max(job.resolved.values()) == slot


def test_job_respects_start_slot():
    rng = np.random.default_rng(13)
    job = ResolutionJob(0, (1, 2), 2, 2, created_slot=10, deadline_slot=20)
    assert job.step(10, rng) == []  # resolution starts the slot after admission
    assert len(job.frontier) == 1


def test_kernel_matches_python_dynamics():
    n, m_p = 10, 3
    kernel = completion_slots(n, m_p, 20000, 200, seed=77)
    rng = np.random.default_rng(78)
    py = np.array([run_to_completion(n, m_p, rng) for _ in range(4000)])
    assert abs(kernel.mean() - py.mean()) < 0.15
    assert abs(np.quantile(kernel, 0.95) - np.quantile(py, 0.95)) <= 1


def test_job_step_matches_count_dynamics():
    rng = np.random.default_rng(14)
    tots = []
    for _ in range(1500):
        job = ResolutionJob(0, tuple(range(8)), 8, 2, created_slot=0,
                            deadline_slot=10_000)
        slot = 0
        while not job.complete:
            slot += 1
            job.step(slot, rng)
        tots.append(slot)
    kernel = completion_slots(8, 2, 20000, 200, seed=79)
    assert abs(np.mean(tots) - kernel.mean()) < 0.25


def test_build_lut_monotone_and_reliable():
    lut = build_lut(0.9, l_values=[4, 8, 12], n_values=[2, 4, 8], m_p_max=8,
                    runs=4000, seed=21)
    e = lut.entries.astype(float)
    e[e == 0] = np.inf
    assert np.all(np.diff(e, axis=0) >= 0)  # more users never need less
    assert np.all(np.diff(e, axis=1) <= 0)  # looser deadline never needs more
    # reliability soundness: fresh runs hit the target within 0.01
    for i, n in enumerate(lut.n_values):
        for j, l in enumerate(lut.l_values):
            m_p = int(lut.entries[i, j])
            if m_p == 0:
                continue
            fresh = completion_slots(n, m_p, 10000, l + 1, seed=1000 + 10 * i + j)
            assert np.mean(fresh <= l) >= 0.9 - 0.01


def test_lut_query_rounding_against_bundled_table():
    lut = bundled_table()
    assert lut.query(15, 0.95, 20) == 3
    assert lut.query(35, 0.95, 5) == 1
    # off-grid: N=22 rounds up to 25, L=12 rounds down to 10
    assert lut.query(12, 0.95, 22) == 8
    assert lut.query(4, 0.95, 10) == 0   # below the smallest tabulated deadline
    assert lut.query(10, 0.95, 60) == 0  # beyond the largest tabulated backlog
    assert lut.query(100, 0.95, 3) == 1  # large deadlines round down to 35
    with pytest.raises(ValueError):
        lut.query(15, 0.9, 20)


def test_bundled_table_shape_and_infeasible_column():
    lut = bundled_table()
    assert lut.reliability == 0.95
    assert lut.l_values == [5, 10, 15, 20, 25, 30, 35]
    assert lut.n_values == [5, 10, 15, 20, 25, 30, 35, 40]
    assert all(lut.cell(5, n) == 0 for n in lut.n_values)
    assert lut.cell(10, 40) == 13 and lut.cell(15, 20) == 3


def test_lut_csv_roundtrip():
    lut = build_lut(0.9, [4, 8], [2, 4], m_p_max=6, runs=1500, seed=3)
    buf = io.StringIO()
    lut.to_csv(buf)
    buf.seek(0)
    back = ParallelizationLUT.from_csv(buf)
    assert back.reliability == lut.reliability
    assert back.l_values == lut.l_values and back.n_values == lut.n_values
    assert np.array_equal(back.entries, lut.entries)
    assert lut_query(back, 8, 0.9, 2) == lut.cell(8, 2)
