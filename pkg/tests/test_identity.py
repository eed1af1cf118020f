from __future__ import annotations

from hypothesis import given, settings
from hypothesis import strategies as st

from spoofwatch.identity import (
    Category,
    GroupingBasis,
    category_counts,
    cluster_index,
    cluster_spoofers,
    load_company_map,
)
from spoofwatch.model import Classification, VantagePoint, Verdict
from spoofwatch.psl import PublicSuffixList

from conftest import HOUR

VPS = {
    "v1": VantagePoint("v1", "10.0.1.0", 64500, "US"),
    "v2": VantagePoint("v2", "10.0.2.0", 64500, "US"),
    "v3": VantagePoint("v3", "10.0.3.0", 64501, "DE"),
}


def _spoofed(vp, *ids, letter="A"):
    return Verdict(vp, letter, HOUR, Classification.OVERT_SPOOFED, evidence={"overt": {"unmatched": {i: 1 for i in ids}}})


def _by_member(clusters):
    return {sid: c for c in clusters for sid in c.member_server_ids}


def test_psl():
    psl = PublicSuffixList.load()
    assert psl.registrable_domain("njamerson.rdit.ch") == "rdit.ch"
    assert psl.registrable_domain("a.b.example.co.uk") == "example.co.uk"
    assert psl.registrable_domain("co.uk") is None
    assert psl.registrable_domain("DNS13") is None
    assert psl.registrable_domain("hosting") is None


def test_psl_wildcard_and_exception():
    psl = PublicSuffixList(["*.ck", "!www.ck", "com"])
    assert psl.registrable_domain("a.b.foo.ck") == "b.foo.ck"
    assert psl.registrable_domain("www.ck") == "www.ck"
    assert psl.registrable_domain("x.example.com") == "example.com"


def test_shared_suffix_groups_together():
    clusters = cluster_spoofers(
        [_spoofed("v1", "njamerson.rdit.ch"), _spoofed("v3", "ninishowen.rdit.ch")], None, load_company_map(), VPS
    )
    (c,) = clusters
    assert c.member_server_ids == {"njamerson.rdit.ch", "ninishowen.rdit.ch"}
    assert (c.grouping_basis, c.label, c.cluster_id) == (GroupingBasis.DNS_SUFFIX, "rdit.ch", "domain:rdit.ch")


def test_generic_id_groups_by_asn():
    (c,) = cluster_spoofers([_spoofed("v1", "DNS13"), _spoofed("v2", "DNS13")], None, load_company_map(), VPS)
    assert c.cluster_id == "asn:64500"
    assert c.grouping_basis is GroupingBasis.VP_ASN
    assert c.category is Category.UNIDENTIFIABLE


def test_generic_id_seen_from_two_ases_takes_most_frequent():
    verdicts = [_spoofed("v3", "DNS-Expire"), _spoofed("v1", "DNS-Expire"), _spoofed("v2", "DNS-Expire")]
    (c,) = cluster_spoofers(verdicts, None, None, VPS)
    assert c.cluster_id == "asn:64500"


def test_categories_from_company_map():
    verdicts = [_spoofed("v1", "2kom.ru", "vpn1.nordvpn.com", "gw.eero.com")]
    by = _by_member(cluster_spoofers(verdicts, None, load_company_map(), VPS))
    assert by["2kom.ru"].category is Category.ISP
    assert by["vpn1.nordvpn.com"].category is Category.VPN
    assert by["gw.eero.com"].category is Category.HARDWARE


def test_company_regex_overrides_domain():
    by = _by_member(cluster_spoofers([_spoofed("v1", "chic-cns13.nlb.mdw1.comcast.net")], None, load_company_map(), VPS))
    c = by["chic-cns13.nlb.mdw1.comcast.net"]
    assert c.grouping_basis is GroupingBasis.COMPANY_NAME
    assert c.category is Category.ISP


def test_reverse_dns_names_ip_ids():
    rdns = {"192.0.2.53": "resolver.skbroadband.com"}
    by = _by_member(cluster_spoofers([_spoofed("v1", "192.0.2.53", "192.0.2.54")], rdns, load_company_map(), VPS))
    assert by["192.0.2.53"].grouping_basis is GroupingBasis.REVERSE_DNS
    assert by["192.0.2.53"].category is Category.ISP
    assert by["192.0.2.54"].grouping_basis is GroupingBasis.VP_ASN


def test_missing_company_map_leaves_unidentifiable():
    (c,) = cluster_spoofers([_spoofed("v1", "2kom.ru")], None, None, VPS)
    assert c.category is Category.UNIDENTIFIABLE


def test_category_counts_cover_all_categories():
    counts = category_counts(cluster_spoofers([_spoofed("v1", "2kom.ru", "DNS13")], None, load_company_map(), VPS))
    assert set(counts) == {c.value for c in Category}
    assert counts["ISP"] == 1 and counts["unidentifiable"] == 1


_ids = st.sampled_from(
    ["DNS13", "hosting", "sawo", "a.rdit.ch", "b.rdit.ch", "2kom.ru", "x.nordvpn.com", "192.0.2.1", "c.comcast.net"]
)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(sorted(VPS)), st.lists(_ids, min_size=1, max_size=3)), max_size=8))
def test_each_id_in_exactly_one_cluster(items):
    verdicts = [_spoofed(vp, *ids) for vp, ids in items]
    clusters = cluster_spoofers(verdicts, {}, load_company_map(), VPS)
    seen = [sid for c in clusters for sid in c.member_server_ids]
    assert len(seen) == len(set(seen))
    assert set(seen) == {sid for _, ids in items for sid in ids}
    assert set(cluster_index(clusters)) == set(seen)
    for c in clusters:
        if c.grouping_basis is GroupingBasis.VP_ASN:
            assert c.category is Category.UNIDENTIFIABLE
