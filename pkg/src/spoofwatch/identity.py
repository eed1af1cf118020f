"""Cluster overt spoofers into parties and categorize them."""

from __future__ import annotations

import csv
import ipaddress
import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from io import StringIO
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

from .model import VantagePoint, Verdict
from .psl import PublicSuffixList

log = logging.getLogger(__name__)

UNIDENTIFIABLE = "unidentifiable"


class Category(str, Enum):
    ISP = "ISP"
    NETWORK_PROVIDER = "network_provider"
    EDUCATION = "education"
    DNS_TOOL = "dns_tool"
    VPN = "vpn"
    HARDWARE = "hardware"
    PERSONAL = "personal"
    UNIDENTIFIABLE = "unidentifiable"


class GroupingBasis(str, Enum):
    DNS_SUFFIX = "dns_suffix"
    REVERSE_DNS = "reverse_dns"
    COMPANY_NAME = "company_name"
    VP_ASN = "vp_asn"


@dataclass(frozen=True)
class CompanyEntry:
    label: str
    category: Category
    match: Optional[re.Pattern]


@dataclass(frozen=True)
class CompanyMap:
    entries: tuple[CompanyEntry, ...]

    def by_label(self, label: str) -> Optional[CompanyEntry]:
        for e in self.entries:
            if e.label.lower() == label.lower():
                return e
        return None

    def match(self, name: str) -> Optional[CompanyEntry]:
        for e in self.entries:
            if e.match is not None and e.match.search(name):
                return e
        return None


def _read_text(source: Union[str, Path]) -> str:
    return Path(source).read_text(encoding="utf-8")


def load_company_map(source: Union[str, Path, None] = None) -> CompanyMap:
    """CSV with columns ``label,category,match``; ``match`` is an optional regex."""
    if source is None:
        text = resources.files("spoofwatch").joinpath("data", "company_map.csv").read_text(encoding="utf-8")
    else:
        text = _read_text(source)
    entries = []
    for row in csv.DictReader(StringIO(text)):
        pattern = (row.get("match") or "").strip()
        entries.append(
            CompanyEntry(
                row["label"].strip(),
                Category(row["category"].strip()),
                re.compile(pattern, re.IGNORECASE) if pattern else None,
            )
        )
    return CompanyMap(tuple(entries))


def load_reverse_dns(source: Union[str, Path]) -> dict[str, str]:
    """CSV with columns ``address,hostname``."""
    out = {}
    for row in csv.DictReader(StringIO(_read_text(source))):
        out[str(ipaddress.ip_address(row["address"].strip()))] = row["hostname"].strip().rstrip(".").lower()
    return out


@dataclass(frozen=True)
class SpooferCluster:
    cluster_id: str
    member_server_ids: frozenset[str]
    grouping_basis: GroupingBasis
    label: str
    category: Category

    def as_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "member_server_ids": sorted(self.member_server_ids),
            "grouping_basis": self.grouping_basis.value,
            "label": self.label,
            "category": self.category.value,
        }


def categorize(cluster: SpooferCluster, company_map: Optional[CompanyMap]) -> Category:
    if cluster.grouping_basis is GroupingBasis.VP_ASN or company_map is None:
        return Category.UNIDENTIFIABLE
    entry = company_map.by_label(cluster.label)
    return entry.category if entry else Category.UNIDENTIFIABLE


def _is_ip(text: str) -> bool:
    try:
        ipaddress.ip_address(text)
    except ValueError:
        return False
    return True


def spoofed_server_ids(verdicts: Iterable[Verdict]) -> list[tuple[str, str]]:
    """``(server_id, vp_id)`` pairs for every atypical id in spoofed verdicts."""
    out = []
    for v in verdicts:
        if not v.is_spoofed:
            continue
        for sid in v.evidence.get("overt", {}).get("unmatched", {}):
            out.append((sid, v.vp_id))
    return out


def cluster_spoofers(
    spoofed_verdicts: Iterable[Verdict],
    reverse_dns_map: Optional[Mapping[str, str]],
    company_map: Optional[CompanyMap],
    vp_index: Mapping[str, VantagePoint],
    psl: Optional[PublicSuffixList] = None,
) -> list[SpooferCluster]:
    """Group atypical server IDs into spoofing parties.

    Order of evidence: IP-address ids are replaced by their reverse name; a
    name with a registrable domain groups under that domain; a company-map
    match overrides the domain grouping; everything else groups by the ASN of
    the observing VP (the most frequent one when an id is seen from several).
    """
    if reverse_dns_map is None:
        log.warning("no reverse-DNS map; IP-address server ids stay ungrouped")
    if company_map is None:
        log.warning("no company map; company grouping and categories skipped")
    psl = psl or PublicSuffixList.load()

    asn_seen: dict[str, Counter] = defaultdict(Counter)
    for sid, vp_id in spoofed_server_ids(spoofed_verdicts):
        vp = vp_index.get(vp_id)
        asn_seen[sid][vp.asn if vp else -1] += 1

    groups: dict[tuple[GroupingBasis, str], set[str]] = defaultdict(set)
    for sid in sorted(asn_seen):
        name, basis = sid.strip().rstrip(".").lower(), None
        if _is_ip(name) and reverse_dns_map is not None and name in reverse_dns_map:
            name, basis = reverse_dns_map[name], GroupingBasis.REVERSE_DNS
        key: Optional[tuple[GroupingBasis, str]] = None
        domain = None if _is_ip(name) else psl.registrable_domain(name)
        if domain is not None:
            key = (basis or GroupingBasis.DNS_SUFFIX, domain)
        entry = company_map.match(name) if company_map is not None else None
        if entry is not None:
            key = (GroupingBasis.COMPANY_NAME, entry.label)
        if key is None:
            # most frequent observing AS; ties go to the lowest number
            asn = min(asn_seen[sid].items(), key=lambda kv: (-kv[1], kv[0]))[0]
            key = (GroupingBasis.VP_ASN, str(asn))
        groups[key].add(sid)

    clusters = []
    for (basis, name), members in sorted(groups.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
        if basis is GroupingBasis.VP_ASN:
            cid, label = f"asn:{name}", UNIDENTIFIABLE
        else:
            prefix = "company" if basis is GroupingBasis.COMPANY_NAME else "domain"
            cid, label = f"{prefix}:{name}", name
        draft = SpooferCluster(cid, frozenset(members), basis, label, Category.UNIDENTIFIABLE)
        clusters.append(
            SpooferCluster(cid, draft.member_server_ids, basis, label, categorize(draft, company_map))
        )
    return clusters


def cluster_index(clusters: Iterable[SpooferCluster]) -> dict[str, str]:
    """server_id -> cluster_id."""
    return {sid: c.cluster_id for c in clusters for sid in c.member_server_ids}


def category_counts(clusters: Iterable[SpooferCluster]) -> dict[str, int]:
    counts = Counter(c.category.value for c in clusters)
    return {cat.value: counts.get(cat.value, 0) for cat in Category}
