from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spoofwatch.model import Classification, Mechanism, VantagePoint, Verdict
from spoofwatch.validate import (
    MatchResult,
    ServerLogRecord,
    UnsortedLogError,
    confirm_covert_delayers,
    examined_queries,
    match_queries,
    parse_server_log,
    refine_verdicts,
    render_tables,
    serialize_server_log,
    true_positive_rates,
    upper_bound_false_positive,
)

from conftest import HOUR, make_window

VPS = {
    "v1": VantagePoint("v1", "10.0.1.0", 64500, "US"),
    "v2": VantagePoint("v2", "10.0.2.0", 64500, "US"),
    "v3": VantagePoint("v3", "10.0.2.0", 64501, "US"),  # shares v2's /24
}


def _log(ts, prefix="10.0.1.0", qtype="CH TXT", qname="hostname.bind", letter="B"):
    return ServerLogRecord(ts, prefix, qtype, qname, letter)


def test_log_round_trip():
    recs = [_log(HOUR, "10.0.1.77"), _log(HOUR + 5, qname="HOSTNAME.BIND.")]
    back, rep = parse_server_log(serialize_server_log(recs))
    assert back == recs
    assert back[0].source_prefix == "10.0.1.0/24" and back[1].qname == "hostname.bind"
    assert rep.n_skipped == 0


def test_log_bad_lines_skipped():
    data = b'{"timestamp": 1.5, "source_prefix": "10.0.0.0", "query_type": "CH TXT", "qname": "x", "letter": "B"}\nnope\n'
    recs, rep = parse_server_log(data)
    assert recs == [] and rep.n_skipped == 2


def test_match_within_tolerance():
    w = make_window("B", dns=[("hosting", 3.0)], vp="v1")  # query at HOUR
    for offset, ok in ((240, True), (-240, True), (241, False)):
        (m,) = match_queries([w], [_log(HOUR + offset)], VPS)
        assert m.matched is ok, offset


def test_match_requires_same_prefix_type_and_name():
    w = make_window("B", dns=[("hosting", 3.0)], vp="v1")
    for rec in (_log(HOUR, prefix="10.0.9.0"), _log(HOUR, qtype="IN A"), _log(HOUR, qname="id.server"), _log(HOUR, letter="A")):
        (m,) = match_queries([w], [rec], VPS)
        assert not m.matched


def test_successes_examined_before_timeouts():
    w = make_window("B", dns=[("b1-lax", 3.0)], timeouts=2, vp="v1")
    assert examined_queries(w) == [HOUR]
    w = make_window("B", timeouts=2, vp="v1")
    assert len(examined_queries(w)) == 2


def test_unsorted_log_rejected():
    w = make_window("B", dns=[("b1-lax", 3.0)], vp="v1")
    with pytest.raises(UnsortedLogError):
        match_queries([w], [_log(HOUR + 10), _log(HOUR)], VPS)
    with pytest.raises(UnsortedLogError):
        match_queries([], [_log(HOUR + 10), _log(HOUR)], VPS)


def test_unknown_vp_counts_unmatched():
    w = make_window("B", dns=[("b1-lax", 3.0)], vp="ghost")
    (m,) = match_queries([w], [_log(HOUR)], VPS)
    assert not m.matched and m.queries_sent == 1


def test_shared_prefix_flagged():
    ws = [make_window("B", dns=[("b1-lax", 3.0)], vp=vp) for vp in ("v1", "v2", "v3")]
    res = {m.vp_id: m for m in match_queries(ws, [_log(HOUR, "10.0.2.0")], VPS)}
    assert not res["v1"].shared_prefix
    assert res["v2"].shared_prefix and res["v3"].shared_prefix
    assert res["v2"].matched and res["v3"].matched


def test_windows_must_share_letter():
    ws = [make_window("A", dns=[("x", 3.0)], vp="v1"), make_window("B", dns=[("x", 3.0)], vp="v1")]
    with pytest.raises(ValueError):
        match_queries(ws, [], VPS)


def _v(vp, cls, mech=None, evidence=None):
    return Verdict(vp, "B", HOUR, cls, mech, evidence=evidence or {})


def test_rates_and_upper_bound():
    verdicts = [
        _v("a", Classification.OVERT_SPOOFED, Mechanism.NON_ANYCAST),
        _v("b", Classification.OVERT_SPOOFED, Mechanism.NON_ANYCAST),
        _v("c", Classification.OVERT_SPOOFED, Mechanism.ANYCAST),
        _v("d", Classification.TIMEOUT),
        _v("e", Classification.VALID),
        _v("f", Classification.VALID),
    ]
    matches = [
        MatchResult("a", "B", HOUR, 15, 0),
        MatchResult("b", "B", HOUR, 15, 15),
        MatchResult("c", "B", HOUR, 15, 0),
        MatchResult("d", "B", HOUR, 15, 0),
        MatchResult("e", "B", HOUR, 15, 15),
        MatchResult("f", "B", HOUR, 15, 0),
    ]
    rep = true_positive_rates(matches, verdicts)
    hour = rep["hours"][HOUR]
    r = hour["rates"]
    assert r["spoofed"] == {"n": 3, "n_matched": 1, "tp": 2 / 3}
    assert r["non_anycast"]["tp"] == 0.5
    assert r["anycast"]["tp"] == 1.0
    assert r["timeout"]["tp"] == 1.0
    assert r["not_spoofed"]["tp"] == 0.5
    assert hour["upper_bound_fp"] == 1 / 3
    assert hour["residual_not_spoofed_unmatched"] == 1
    assert upper_bound_false_positive(matches, verdicts) == 1 / 3
    assert rep["summary"]["spoofed"]["n_hours"] == 1
    assert "spoofed" in render_tables(rep)


def test_refinement_and_covert_confirmation():
    lat = {"median_dns": 60.0, "median_ping": 20.0, "mad_dns": 1.0, "mad_ping": 1.0, "n_dns": 15, "n_ping": 15}
    lat_neg = {**lat, "median_dns": 10.0}
    verdicts = [
        _v("a", Classification.OVERT_SPOOFED, Mechanism.NON_ANYCAST),
        _v("b", Classification.OVERT_SPOOFED, Mechanism.NON_ANYCAST),
        _v("c", Classification.COVERT_DELAYED, evidence={"latency": lat}),
        _v("d", Classification.COVERT_DELAYED, evidence={"latency": lat_neg}),
    ]
    matches = [
        MatchResult("a", "B", HOUR, 15, 0),
        MatchResult("b", "B", HOUR, 15, 3),
        MatchResult("c", "B", HOUR, 15, 15),
        MatchResult("d", "B", HOUR, 15, 0),
    ]
    refined = {v.vp_id: v for v in refine_verdicts(verdicts, matches)}
    assert refined["a"].mechanism is Mechanism.PROXY
    assert refined["b"].mechanism is Mechanism.INJECTION
    assert refined["b"].evidence["server_match"] == {"queries_sent": 15, "queries_matched": 3}
    rep = confirm_covert_delayers(verdicts, matches)
    assert rep["n_delayers"] == 2 and rep["n_reached"] == 1
    assert rep["directions"]["dns_slower"] == {"n": 1, "n_reached": 1, "mean_signed_difference": 40.0}
    assert rep["directions"]["ping_slower"]["mean_signed_difference"] == -10.0
    assert [r["vp_id"] for r in rep["anomalous"]] == ["d"]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 3599), min_size=1, max_size=15), st.lists(st.integers(-600, 4200), max_size=30))
def test_matching_against_brute_force(query_offsets, log_offsets):
    from spoofwatch.model import DnsObservation, HourlyWindow, Outcome

    dns = tuple(
        sorted(
            (DnsObservation("v1", "B", HOUR + t, Outcome.ANSWERED, "b1-lax", 1.0) for t in query_offsets),
            key=DnsObservation.sort_key,
        )
    )
    w = HourlyWindow("v1", "B", HOUR, dns)
    log = [_log(HOUR + t) for t in sorted(log_offsets)]
    (m,) = match_queries([w], log, VPS)
    want = sum(any(abs(q - t) <= 240 for t in log_offsets) for q in query_offsets)
    assert m.queries_matched == want
