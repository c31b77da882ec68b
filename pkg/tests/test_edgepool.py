from __future__ import annotations

import pytest

from edgechain.admission import AdmissionDecision, Reason, ResourceRequest, Verdict
from edgechain.edgepool import DuplicateAllocationError, Pool, PoolConsistencyError

W = (300.0, 250.0, 250.0, 250.0)


def pair(rid="a", demand=(5, 5, 5, 5), lifetime=2):
    r = ResourceRequest(rid, "d", tuple(float(x) for x in demand), 1, lifetime, 0)
    return AdmissionDecision(rid, Verdict.ACCEPT, 1.0, Reason.ACCEPTED, 100), r


def test_reserve_and_identity():
    pool = Pool(W)
    alloc = pool.reserve(*pair(), start=3)
    assert pool.snapshot() == (295.0, 245.0, 245.0, 245.0) and alloc.end == 5
    pool.check_identity()
    assert pool.used() == (5.0, 5.0, 5.0, 5.0)


def test_duplicate_and_overdraw():
    pool = Pool(W)
    pool.reserve(*pair(), start=0)
    with pytest.raises(DuplicateAllocationError):
        pool.reserve(*pair(), start=0)
    with pytest.raises(PoolConsistencyError):
        pool.reserve(*pair("big", (301, 0, 0, 0)), start=0)
    d, r = pair("x")
    with pytest.raises(PoolConsistencyError):
        pool.reserve(AdmissionDecision("x", Verdict.DENY, None, Reason.INFEASIBLE), r, 0)


def test_release_boundary():
    pool = Pool(W)
    assert pool.release_expired(0) == []
    pool.reserve(*pair(), start=3)
    assert pool.release_expired(4) == []
    released = pool.release_expired(5)
    assert [a.request_id for a in released] == ["a"] and pool.snapshot() == W
    pool.reserve(*pair(), start=5)  # id reusable once released


def test_exhaustion():
    pool = Pool((0.0, 0.0, 0.0, 0.0))
    assert pool.is_exhausted([pair()[1]])
    assert pool.is_exhausted([])
    assert not Pool(W).is_exhausted([pair()[1], pair("b", (999, 0, 0, 0))[1]])


def test_identity_detects_drift():
    pool = Pool(W)
    pool.reserve(*pair(), start=0)
    pool.available[0] += 1
    with pytest.raises(PoolConsistencyError):
        pool.check_identity()
