from __future__ import annotations

import pytest

from spoofwatch.covert import LatencyStats
from spoofwatch.mechanism import (
    PenultimateHopSet,
    build_penultimate_set,
    classify_mechanism,
    penultimate_hop,
    refine_with_server_log,
    rtt_equal,
)
from spoofwatch.model import Classification, Mechanism, TracerouteObservation, Verdict
from spoofwatch.overt import classify_window
from spoofwatch.validate import MatchResult

from conftest import HOUR, make_window

B_ADDR = "199.9.14.201"
LEGIT = "198.18.1.1"
FOREIGN = "203.0.113.9"


def _trace(*hops, reached=True):
    return TracerouteObservation("v", "B", HOUR, tuple(enumerate(hops, 1)), reached)


def test_penultimate_skips_silent_hops():
    assert penultimate_hop(_trace("10.0.0.1", LEGIT, None, B_ADDR), B_ADDR) == LEGIT
    assert penultimate_hop(_trace("10.0.0.1", LEGIT, reached=False), B_ADDR) is None
    assert penultimate_hop(_trace(B_ADDR), B_ADDR) is None


def test_hopset_from_valid_windows_only(profile):
    good = make_window("B", dns=[("b1-lax", 10.0)] * 5, traces=[(["10.0.0.1", LEGIT, B_ADDR], True)], vp="good")
    bad = make_window("B", dns=[("hosting", 10.0)] * 5, traces=[(["10.0.0.2", FOREIGN, B_ADDR], True)], vp="bad")
    windows = [good, bad]
    verdicts = [classify_window(w, profile) for w in windows]
    hs = build_penultimate_set(verdicts, windows)
    assert hs["B"] == frozenset({LEGIT})
    assert hs["A"] == frozenset()


def test_hopset_merge():
    a = PenultimateHopSet({"B": frozenset({"x"})})
    b = PenultimateHopSet({"B": frozenset({"y"}), "C": frozenset({"z"})})
    m = a.merge(b)
    assert m["B"] == {"x", "y"} and m["C"] == {"z"}


def _spoofed(profile, hops, reached=True):
    w = make_window("B", dns=[("hosting", 20.0)] * 10, ping=[20.0] * 10, traces=[(hops, reached)])
    return w, classify_window(w, profile)


HOPSET = PenultimateHopSet({"B": frozenset({LEGIT})})


def test_anycast_needs_foreign_hop_and_equal_rtt(profile):
    w, v = _spoofed(profile, ["10.0.0.1", FOREIGN, B_ADDR])
    res = classify_mechanism(w, v, HOPSET, LatencyStats(20.0, 21.0, 0.5, 0.5))
    assert res.mechanism is Mechanism.ANYCAST
    assert res.foreign_hops and res.rtt_equal


def test_foreign_hop_with_unequal_rtt_is_non_anycast(profile):
    w, v = _spoofed(profile, ["10.0.0.1", FOREIGN, B_ADDR])
    res = classify_mechanism(w, v, HOPSET, LatencyStats(5.0, 40.0, 0.5, 0.5))
    assert res.mechanism is Mechanism.NON_ANYCAST and res.rtt_equal is False


def test_legit_hop_is_non_anycast(profile):
    w, v = _spoofed(profile, ["10.0.0.1", LEGIT, B_ADDR])
    res = classify_mechanism(w, v, HOPSET, LatencyStats(20.0, 20.0, 0.5, 0.5))
    assert res.mechanism is Mechanism.NON_ANYCAST and not res.low_confidence


def test_unreached_traceroute_is_low_confidence(profile):
    w, v = _spoofed(profile, ["10.0.0.1", FOREIGN], reached=False)
    res = classify_mechanism(w, v, HOPSET, LatencyStats(20.0, 20.0, 0.5, 0.5))
    assert res.mechanism is Mechanism.NON_ANYCAST and res.low_confidence


def test_rtt_equal_boundary():
    assert rtt_equal(LatencyStats(30.0, 40.0, 0, 0))  # 10 ms floor, inclusive
    assert not rtt_equal(LatencyStats(30.0, 40.01, 0, 0))
    assert rtt_equal(LatencyStats(100.0, 120.0, 0, 0))  # 20% of 100
    assert not rtt_equal(LatencyStats(100.0, 120.5, 0, 0))


def test_requires_spoofed_verdict(profile):
    w = make_window("B", dns=[("b1-lax", 10.0)])
    with pytest.raises(ValueError):
        classify_mechanism(w, classify_window(w, profile), HOPSET, None)


def test_refinement():
    v = Verdict("v", "B", HOUR, Classification.OVERT_SPOOFED, Mechanism.NON_ANYCAST)
    hit = MatchResult("v", "B", HOUR, 15, 15)
    miss = MatchResult("v", "B", HOUR, 15, 0)
    assert refine_with_server_log(v, hit) is Mechanism.INJECTION
    assert refine_with_server_log(v, miss) is Mechanism.PROXY
    a = Verdict("v", "B", HOUR, Classification.OVERT_SPOOFED, Mechanism.ANYCAST)
    assert refine_with_server_log(a, miss) is Mechanism.ANYCAST
    with pytest.raises(ValueError):
        refine_with_server_log(Verdict("v", "B", HOUR, Classification.VALID), hit)
