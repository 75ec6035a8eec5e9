from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from stdse.evaluators import (EvaluatorError, all_reduce_latency, get_evaluator, link_transfer, list_evaluators,
                              register_evaluator, roofline_compute, storage_footprint)


def test_roofline_examples():
    assert roofline_compute(0, 256, 0, 64) == 0
    assert roofline_compute(1024, 256, 64, 64) == 4
    assert roofline_compute(64, 256, 1024, 64) == 16
    with pytest.raises(EvaluatorError):
        roofline_compute(1, 0)
    with pytest.raises(EvaluatorError):
        roofline_compute(1, 1, 1, 0)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4096), st.integers(0, 10**6), st.integers(1, 4096))
def test_roofline_matches_reference(ops, thr, nbytes, bw):
    # integer ceiling of the larger ratio, computed without rationals
    ref = max((ops + thr - 1) // thr, (nbytes + bw - 1) // bw)
    assert roofline_compute(ops, thr, nbytes, bw) == ref


def test_link_transfer_examples():
    assert link_transfer(3, 2, 0, 64) == 6
    assert link_transfer(3, 2, 128, 64) == 8
    assert link_transfer(0, 0, 50, Fraction(1, 2)) == 100
    assert link_transfer(0, 0, 1, 3, quantize=False) == Fraction(1, 3)
    with pytest.raises(EvaluatorError):
        link_transfer(1, 1, 1, 0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 6), st.integers(0, 5), st.integers(0, 1000), st.integers(0, 1000), st.integers(1, 50),
       st.integers(1, 50))
def test_link_transfer_monotone(h, lat, v1, v2, b1, b2):
    lo, hi = sorted((v1, v2))
    assert link_transfer(h, lat, lo, b1) <= link_transfer(h, lat, hi, b1)
    slow, fast = sorted((b1, b2))
    assert link_transfer(h, lat, v1, fast) <= link_transfer(h, lat, v1, slow)


def test_all_reduce_examples():
    assert all_reduce_latency(4, 1, 4096, 1024) == 15
    assert all_reduce_latency(5, 3, 0, 7) == 15
    assert all_reduce_latency(1, 2, 10, 5) == 2 + 4
    with pytest.raises(EvaluatorError):
        all_reduce_latency(0, 1, 1, 1)


def test_storage_footprint_examples():
    lt = storage_footprint(8, [5], [9])
    assert (lt.start, lt.end, lt.duration) == (5, 9, 4)
    lt = storage_footprint(8, [3, 7], [10, 6])
    assert (lt.start, lt.end) == (3, 10)
    lt = storage_footprint(8, [3], [], horizon=40)
    assert (lt.end, lt.leaked) == (40, True)
    with pytest.raises(EvaluatorError, match="negative lifetime"):
        storage_footprint(8, [10], [4])


def test_registry():
    names = [e.name for e in list_evaluators()]
    assert names == sorted(names) and {"roofline", "link", "storage"} <= set(names)
    ev = get_evaluator("roofline")
    assert ev({"throughput": 2, "local_bandwidth": 4}, {"ops": 10, "bytes": 40}) == 10
    register_evaluator("test_const", {"compute"}, lambda p, w: 7, replace=True)
    assert get_evaluator("test_const")({}, {}) == 7
    register_evaluator("test_neg", {"compute"}, lambda p, w: -1, replace=True)
    with pytest.raises(EvaluatorError, match="negative"):
        get_evaluator("test_neg")({}, {})
    with pytest.raises(EvaluatorError):
        get_evaluator("missing")
