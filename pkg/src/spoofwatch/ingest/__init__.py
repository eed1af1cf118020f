from .api import FetchError, TruncatedPageError, fetch_measurements
from .profiles import (
    KnownSiteList,
    PatternProfile,
    ProfileError,
    default_known_sites,
    default_profile,
    load_known_sites,
    load_pattern_profile,
)
from .records import (
    ParseResult,
    SkipReport,
    parse_any,
    parse_dns_results,
    parse_ping_results,
    parse_traceroute_results,
    serialize,
    to_record,
)

__all__ = [
    "FetchError",
    "KnownSiteList",
    "ParseResult",
    "PatternProfile",
    "ProfileError",
    "SkipReport",
    "TruncatedPageError",
    "default_known_sites",
    "default_profile",
    "fetch_measurements",
    "load_known_sites",
    "load_pattern_profile",
    "parse_any",
    "parse_dns_results",
    "parse_ping_results",
    "parse_traceroute_results",
    "serialize",
    "to_record",
]
