"""Shared domain types and the hourly sampling-window semantics."""

from __future__ import annotations

import bisect
import calendar
import ipaddress
import random
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from enum import Enum
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

LETTERS: tuple[str, ...] = tuple("ABCDEFGHIJKLM")
WINDOW_SECONDS = 3600

# nominal probing cadence, seconds
DNS_INTERVAL = 240
PING_INTERVAL = 240
TRACEROUTE_INTERVAL = 1800


class ScheduleConflictError(ValueError):
    """Two scheduled windows overlap."""


class Outcome(str, Enum):
    ANSWERED = "answered"
    TIMEOUT = "timeout"
    ERROR = "error"


class Classification(str, Enum):
    VALID = "valid"
    OVERT_SPOOFED = "overt_spoofed"
    COVERT_DELAYED = "covert_delayed"
    TIMEOUT = "timeout"
    INSUFFICIENT = "insufficient"


class Mechanism(str, Enum):
    ANYCAST = "anycast"
    NON_ANYCAST = "non_anycast"
    INJECTION = "injection"
    PROXY = "proxy"


NON_ANYCAST_MECHANISMS = frozenset({Mechanism.NON_ANYCAST, Mechanism.PROXY, Mechanism.INJECTION})


def normalize_prefix(value: str) -> str:
    """Return the /24 network containing ``value`` as ``a.b.c.0/24``.

    Accepts a bare address (low octet anonymized or not) or a CIDR string.
    """
    text = value.strip()
    if "/" in text:
        net = ipaddress.IPv4Network(text, strict=False)
        if net.prefixlen != 24:
            raise ValueError(f"expected a /24 prefix, got /{net.prefixlen}: {value!r}")
    else:
        net = ipaddress.IPv4Network(f"{text}/24", strict=False)
    return str(net)


@dataclass(frozen=True)
class VantagePoint:
    vp_id: str
    public_prefix: str
    asn: int
    country: str
    latitude: Optional[float] = None
    longitude: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "public_prefix", normalize_prefix(self.public_prefix))
        if len(self.country) != 2 or not self.country.isalpha():
            raise ValueError(f"country must be an ISO 3166-1 alpha-2 code: {self.country!r}")
        object.__setattr__(self, "country", self.country.upper())


@dataclass(frozen=True)
class ServiceLetter:
    letter: str
    service_address: str
    icmp_responsive: bool = True

    def __post_init__(self) -> None:
        if self.letter not in LETTERS:
            raise ValueError(f"unknown service letter {self.letter!r}")
        ipaddress.IPv4Address(self.service_address)


ROOT_LETTERS: dict[str, ServiceLetter] = {
    s.letter: s
    for s in (
        ServiceLetter("A", "198.41.0.4"),
        ServiceLetter("B", "199.9.14.201"),
        ServiceLetter("C", "192.33.4.12"),
        ServiceLetter("D", "199.7.91.13"),
        ServiceLetter("E", "192.203.230.10"),
        ServiceLetter("F", "192.5.5.241"),
        ServiceLetter("G", "192.112.36.4", icmp_responsive=False),
        ServiceLetter("H", "198.97.190.53"),
        ServiceLetter("I", "192.36.148.17"),
        ServiceLetter("J", "192.58.128.30"),
        ServiceLetter("K", "193.0.14.129"),
        ServiceLetter("L", "199.7.83.42"),
        ServiceLetter("M", "202.12.27.33"),
    )
}


def _check_letter(letter: str) -> None:
    if letter not in LETTERS:
        raise ValueError(f"unknown service letter {letter!r}")


def _check_rtt(rtt: Optional[float]) -> None:
    if rtt is not None and not rtt > 0:
        raise ValueError(f"rtt must be positive, got {rtt!r}")


@dataclass(frozen=True, slots=True)
class DnsObservation:
    vp_id: str
    letter: str
    timestamp: int
    outcome: Outcome
    server_id: Optional[str] = None
    rtt: Optional[float] = None

    def __post_init__(self) -> None:
        _check_letter(self.letter)
        if self.outcome is Outcome.ANSWERED:
            if self.server_id is None or self.rtt is None:
                raise ValueError("answered observation needs server_id and rtt")
            _check_rtt(self.rtt)
        elif self.outcome is Outcome.TIMEOUT:
            if self.server_id is not None or self.rtt is not None:
                raise ValueError("timeout observation carries no server_id or rtt")
        elif not isinstance(self.outcome, Outcome):
            raise ValueError(f"bad outcome {self.outcome!r}")

    def sort_key(self) -> tuple:
        return (self.timestamp, self.outcome.value, self.server_id or "", self.rtt or 0.0)


@dataclass(frozen=True, slots=True)
class PingObservation:
    vp_id: str
    letter: str
    timestamp: int
    rtt: Optional[float] = None

    def __post_init__(self) -> None:
        _check_letter(self.letter)
        _check_rtt(self.rtt)

    def sort_key(self) -> tuple:
        return (self.timestamp, -1.0 if self.rtt is None else self.rtt)


Hop = tuple[int, Optional[str]]


@dataclass(frozen=True, slots=True)
class TracerouteObservation:
    vp_id: str
    letter: str
    timestamp: int
    hops: tuple[Hop, ...]
    reached: bool

    def __post_init__(self) -> None:
        _check_letter(self.letter)
        hops = tuple((int(ttl), addr) for ttl, addr in self.hops)
        object.__setattr__(self, "hops", hops)
        for (a, _), (b, _) in zip(hops, hops[1:]):
            if b <= a:
                raise ValueError("traceroute ttl values must be strictly increasing")
        if self.reached and self.last_responder() is None:
            raise ValueError("reached traceroute has no responding hop")

    def last_responder(self) -> Optional[str]:
        for _, addr in reversed(self.hops):
            if addr is not None:
                return addr
        return None

    def check_reached(self, service_address: str) -> bool:
        """True when the ``reached`` flag is consistent with ``service_address``."""
        return not self.reached or self.last_responder() == service_address

    def sort_key(self) -> tuple:
        return (self.timestamp, self.reached, tuple((t, a or "") for t, a in self.hops))


Observation = Union[DnsObservation, PingObservation, TracerouteObservation]


@dataclass(frozen=True, slots=True)
class HourlyWindow:
    vp_id: str
    letter: str
    window_start: int
    dns: tuple[DnsObservation, ...] = ()
    ping: tuple[PingObservation, ...] = ()
    traceroute: tuple[TracerouteObservation, ...] = ()

    def __post_init__(self) -> None:
        end = self.window_start + WINDOW_SECONDS
        for obs in (*self.dns, *self.ping, *self.traceroute):
            if not self.window_start <= obs.timestamp < end:
                raise ValueError(
                    f"observation at {obs.timestamp} outside window [{self.window_start}, {end})"
                )
            if obs.vp_id != self.vp_id or obs.letter != self.letter:
                raise ValueError("observation belongs to a different (vp, letter)")

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.vp_id, self.letter, self.window_start)

    def __len__(self) -> int:
        return len(self.dns) + len(self.ping) + len(self.traceroute)


@dataclass(frozen=True)
class Verdict:
    vp_id: str
    letter: str
    window_start: int
    classification: Classification
    mechanism: Optional[Mechanism] = None
    spoofer_cluster: Optional[str] = None
    evidence: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.mechanism is not None and self.classification is not Classification.OVERT_SPOOFED:
            raise ValueError("mechanism is only defined for overt_spoofed verdicts")

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.vp_id, self.letter, self.window_start)

    @property
    def is_spoofed(self) -> bool:
        return self.classification is Classification.OVERT_SPOOFED

    @property
    def counts_as_valid(self) -> bool:
        # covert delayers pass the query through, so they are not spoofers
        return self.classification in (Classification.VALID, Classification.COVERT_DELAYED)


def check_schedule(schedule: Iterable[int]) -> list[int]:
    starts = sorted(int(s) for s in schedule)
    for a, b in zip(starts, starts[1:]):
        if b - a < WINDOW_SECONDS:
            raise ScheduleConflictError(f"scheduled windows at {a} and {b} overlap")
    return starts


def build_windows(observations: Iterable[Observation], schedule: Sequence[int]) -> list[HourlyWindow]:
    """Group observations into per-(vp, letter, hour) windows.

    Each window covers ``[start, start + 3600)``. Observations outside every
    scheduled hour are dropped and empty windows are omitted. The result is
    sorted by ``(vp_id, letter, window_start)`` and does not depend on input
    order.
    """
    starts = check_schedule(schedule)
    groups: dict[tuple[str, str, int], tuple[list, list, list]] = defaultdict(lambda: ([], [], []))
    for obs in observations:
        i = bisect.bisect_right(starts, obs.timestamp) - 1
        if i < 0 or obs.timestamp >= starts[i] + WINDOW_SECONDS:
            continue
        slot = groups[(obs.vp_id, obs.letter, starts[i])]
        if isinstance(obs, DnsObservation):
            slot[0].append(obs)
        elif isinstance(obs, PingObservation):
            slot[1].append(obs)
        elif isinstance(obs, TracerouteObservation):
            slot[2].append(obs)
        else:
            raise TypeError(f"not an observation: {type(obs).__name__}")

    windows = []
    for (vp_id, letter, start) in sorted(groups):
        dns, ping, trace = groups[(vp_id, letter, start)]
        windows.append(
            HourlyWindow(
                vp_id,
                letter,
                start,
                tuple(sorted(dns, key=DnsObservation.sort_key)),
                tuple(sorted(ping, key=PingObservation.sort_key)),
                tuple(sorted(trace, key=TracerouteObservation.sort_key)),
            )
        )
    return windows


def _week_ranges(year: int, month: int) -> list[tuple[int, int]]:
    last = calendar.monthrange(year, month)[1]
    return [(1, 7), (8, 14), (15, 21), (22, last)]


def monthly_schedule(first: date, last: date, rng: random.Random) -> list[int]:
    """Four hour-aligned sample windows per month, one per approximate week.

    The hour is drawn independently per week so the sample does not favor a
    time of day. ``first`` and ``last`` select months inclusively.
    """
    out = []
    year, month = first.year, first.month
    while (year, month) <= (last.year, last.month):
        for lo, hi in _week_ranges(year, month):
            day = rng.randint(lo, hi)
            hour = rng.randrange(24)
            ts = datetime(year, month, day, hour, tzinfo=timezone.utc)
            out.append(int(ts.timestamp()))
        month += 1
        if month == 13:
            year, month = year + 1, 1
    return check_schedule(out)


def daily_schedule(first: date, n_days: int, rng: random.Random, per_day: int = 4) -> list[int]:
    """``per_day`` non-overlapping full hours per day, each at a random second offset."""
    day0 = int(datetime(first.year, first.month, first.day, tzinfo=timezone.utc).timestamp())
    out: list[int] = []
    for d in range(n_days):
        base = day0 + 86400 * d
        picked: list[int] = []
        while len(picked) < per_day:
            start = base + rng.randrange(86400 - WINDOW_SECONDS + 1)
            if all(abs(start - p) >= WINDOW_SECONDS for p in (*out[-per_day:], *picked)):
                picked.append(start)
        out.extend(picked)
    return check_schedule(out)


def epoch_date(window_start: int) -> str:
    return datetime.fromtimestamp(window_start, tz=timezone.utc).strftime("%Y-%m-%d")
