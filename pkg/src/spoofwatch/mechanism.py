"""Spoofing mechanism: anycast (off-path) versus non-anycast (proxy or injection)."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .covert import DEFAULT_THRESHOLDS, CovertThresholds, LatencyStats
from .ingest.profiles import KnownSiteList
from .model import (
    LETTERS,
    ROOT_LETTERS,
    Classification,
    HourlyWindow,
    Mechanism,
    ServiceLetter,
    TracerouteObservation,
    Verdict,
)


@dataclass(frozen=True)
class PenultimateHopSet:
    hops: Mapping[str, frozenset[str]]

    def __getitem__(self, letter: str) -> frozenset[str]:
        return self.hops.get(letter, frozenset())

    def merge(self, other: "PenultimateHopSet") -> "PenultimateHopSet":
        letters = set(self.hops) | set(other.hops)
        return PenultimateHopSet({k: self[k] | other[k] for k in sorted(letters)})


def penultimate_hop(trace: TracerouteObservation, service_address: str) -> Optional[str]:
    """Last responding hop strictly before the service address.

    Non-responding hops are skipped. Returns None when the traceroute did not
    reach the service or no responder precedes it.
    """
    if not trace.reached:
        return None
    hops = trace.hops
    end = next((i for i, (_, addr) in enumerate(hops) if addr == service_address), None)
    if end is None:
        return None
    for _, addr in reversed(hops[:end]):
        if addr is not None and addr != service_address:
            return addr
    return None


def build_penultimate_set(
    verdicts: Iterable[Verdict],
    windows: Iterable[HourlyWindow],
    letters: Mapping[str, ServiceLetter] = ROOT_LETTERS,
    known_sites: Optional[KnownSiteList] = None,
) -> PenultimateHopSet:
    """Union of penultimate hops seen from windows classified valid.

    Hops listed in ``known_sites`` are added to every letter's set.
    """
    valid = {v.key for v in verdicts if v.classification is Classification.VALID}
    hops: dict[str, set[str]] = defaultdict(set)
    for w in windows:
        if w.key not in valid:
            continue
        addr = letters[w.letter].service_address
        for t in w.traceroute:
            h = penultimate_hop(t, addr)
            if h is not None:
                hops[w.letter].add(h)
    if known_sites is not None:
        for letter in LETTERS:
            hops[letter] |= known_sites.penultimate_hops.get(letter, frozenset())
    return PenultimateHopSet({k: frozenset(v) for k, v in sorted(hops.items())})


def rtt_equal(stats: LatencyStats, thresholds: CovertThresholds = DEFAULT_THRESHOLDS) -> bool:
    """DNS and ping RTT agree within the covert-delay noise allowance."""
    return stats.delta <= max(thresholds.floor_ms, thresholds.rel_factor * min(stats.median_dns, stats.median_ping))


@dataclass(frozen=True)
class MechanismResult:
    mechanism: Mechanism
    low_confidence: bool
    penultimate_hops: tuple[str, ...]
    foreign_hops: bool
    rtt_equal: Optional[bool]
    reason: str

    def as_dict(self) -> dict:
        return {
            "mechanism": self.mechanism.value,
            "low_confidence": self.low_confidence,
            "penultimate_hops": list(self.penultimate_hops),
            "foreign_hops": self.foreign_hops,
            "rtt_equal": self.rtt_equal,
            "reason": self.reason,
        }


def classify_mechanism(
    window: HourlyWindow,
    verdict: Verdict,
    hopset: PenultimateHopSet,
    stats: Optional[LatencyStats],
    letters: Mapping[str, ServiceLetter] = ROOT_LETTERS,
    thresholds: CovertThresholds = DEFAULT_THRESHOLDS,
) -> MechanismResult:
    """Anycast iff every reached traceroute ends behind a foreign penultimate hop
    and DNS and ping RTTs are equal; non_anycast otherwise."""
    if verdict.classification is not Classification.OVERT_SPOOFED:
        raise ValueError("mechanism is only classified for overt_spoofed windows")
    addr = letters[window.letter].service_address
    found = tuple(h for h in (penultimate_hop(t, addr) for t in window.traceroute) if h is not None)
    legit = hopset[window.letter]
    foreign = bool(found) and all(h not in legit for h in found)
    equal = rtt_equal(stats, thresholds) if stats is not None else None

    if not found:
        return MechanismResult(Mechanism.NON_ANYCAST, True, found, False, equal, "no reached traceroute")
    if not legit:
        return MechanismResult(Mechanism.NON_ANYCAST, True, found, foreign, equal, "no authentic hops for letter")
    if not foreign:
        return MechanismResult(Mechanism.NON_ANYCAST, False, found, False, equal, "penultimate hop is legitimate")
    if equal is None:
        return MechanismResult(Mechanism.NON_ANYCAST, True, found, True, None, "no latency baseline")
    if equal:
        return MechanismResult(Mechanism.ANYCAST, False, found, True, True, "foreign hop and equal RTT")
    return MechanismResult(Mechanism.NON_ANYCAST, False, found, True, False, "foreign hop but DNS RTT differs")


def refine_with_server_log(verdict: Verdict, match) -> Mechanism:
    """Split non-anycast spoofing by whether the query reached the authority.

    ``match`` is a :class:`~spoofwatch.validate.MatchResult`. A proxy drops the
    query; an injector lets it through. Anycast is kept as is.
    """
    if not verdict.is_spoofed:
        raise ValueError("only overt_spoofed verdicts carry a mechanism")
    if verdict.mechanism is Mechanism.ANYCAST:
        return Mechanism.ANYCAST
    return Mechanism.INJECTION if match.matched else Mechanism.PROXY
