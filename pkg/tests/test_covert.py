from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spoofwatch.covert import (
    CovertThresholds,
    Direction,
    LatencyStats,
    batch_latency_stats,
    covert_flags,
    delay_direction,
    is_covert_delayed,
    latency_stats,
    mad,
    median,
    site_filtered_rtts,
)

from conftest import make_window


def test_median_and_mad():
    assert median([3, 1, 2]) == 2
    assert median([1, 2, 3, 10]) == 2.5
    assert mad([1, 2, 3, 4, 100]) == 1
    with pytest.raises(ValueError):
        median([])


def test_thresholds_validated():
    with pytest.raises(ValueError):
        CovertThresholds(floor_ms=0)


def test_clear_delay_detected():
    st_ = LatencyStats(60.0, 20.0, 1.0, 1.0)
    assert is_covert_delayed(st_)
    assert delay_direction(st_) == (Direction.DNS_SLOWER, 40.0)


def test_negative_direction():
    st_ = LatencyStats(20.0, 40.0, 1.0, 1.0)
    assert is_covert_delayed(st_)
    assert delay_direction(st_)[0] is Direction.PING_SLOWER


def test_site_filter_drops_other_site(profile):
    dns = [("b1-lax", 10.0)] * 8 + [("b1-mia", 90.0)] * 3
    assert site_filtered_rtts(make_window("B", dns=dns), profile) == [10.0] * 8


def test_site_filter_tie_gives_none(profile):
    dns = [("b1-lax", 10.0)] * 4 + [("b1-mia", 90.0)] * 4
    assert site_filtered_rtts(make_window("B", dns=dns), profile) is None


def test_catchment_switch_does_not_flag(profile):
    dns = [("b1-lax", 20.0)] * 10 + [("b1-mia", 80.0)] * 5
    w = make_window("B", dns=dns, ping=[20.5] * 15)
    s = latency_stats(w, profile)
    assert s is not None and not is_covert_delayed(s)


def test_too_few_samples(profile):
    w = make_window("B", dns=[("b1-lax", 50.0)] * 4, ping=[10.0] * 15)
    assert latency_stats(w, profile) is None


def test_no_icmp_letter(profile):
    w = make_window("G", dns=[("groot-lax1", 50.0)] * 15, ping=[10.0] * 15)
    assert latency_stats(w, profile) is None


_rtts = st.lists(st.floats(1, 300, allow_nan=False).map(lambda x: round(x, 3)), min_size=0, max_size=20)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(_rtts, _rtts), max_size=8))
def test_batch_matches_single(profile, pairs):
    windows = [
        make_window("B", dns=[("b1-lax", r) for r in d], ping=p, vp=f"v{i}") for i, (d, p) in enumerate(pairs)
    ]
    batch = batch_latency_stats(windows, profile)
    single = [latency_stats(w, profile) for w in windows]
    assert batch == single
    assert covert_flags(batch) == [s is not None and is_covert_delayed(s) for s in single]


@settings(max_examples=300, deadline=None)
@given(
    st.floats(0.5, 500), st.floats(0.5, 500), st.floats(0, 50), st.floats(0, 50),
)
def test_detector_conjunction(md, mp, ad, ap):
    s = LatencyStats(md, mp, ad, ap)
    d = abs(md - mp)
    expected = d > 0.2 * min(md, mp) and d > 3 * max(ad, ap) and d > 10
    assert is_covert_delayed(s) == expected
    # the detector is symmetric in the two channels
    assert is_covert_delayed(LatencyStats(mp, md, ap, ad)) == expected
