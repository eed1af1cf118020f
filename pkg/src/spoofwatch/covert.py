"""Covert-delayer detection: DNS latency versus ICMP latency within a window."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from .ingest.profiles import PatternProfile
from .model import ROOT_LETTERS, HourlyWindow, Outcome, ServiceLetter


@dataclass(frozen=True)
class CovertThresholds:
    rel_factor: float = 0.2
    mad_factor: float = 3.0
    floor_ms: float = 10.0
    min_samples: int = 5

    def __post_init__(self) -> None:
        if self.rel_factor <= 0 or self.mad_factor <= 0 or self.floor_ms <= 0 or self.min_samples < 1:
            raise ValueError("thresholds must be positive")


DEFAULT_THRESHOLDS = CovertThresholds()


def median(values: Sequence[float]) -> float:
    s = sorted(values)
    n = len(s)
    if n == 0:
        raise ValueError("median of empty sequence")
    return (s[(n - 1) // 2] + s[n // 2]) / 2.0


def mad(values: Sequence[float]) -> float:
    """Median absolute deviation, unscaled."""
    m = median(values)
    return median([abs(x - m) for x in values])


@dataclass(frozen=True)
class LatencyStats:
    median_dns: float
    median_ping: float
    mad_dns: float
    mad_ping: float
    n_dns: int = 0
    n_ping: int = 0
    delta: float = field(init=False)

    def __post_init__(self) -> None:
        if self.mad_dns < 0 or self.mad_ping < 0:
            raise ValueError("MAD cannot be negative")
        object.__setattr__(self, "delta", abs(self.median_dns - self.median_ping))

    @classmethod
    def from_samples(cls, dns: Sequence[float], ping: Sequence[float]) -> "LatencyStats":
        return cls(median(dns), median(ping), mad(dns), mad(ping), len(dns), len(ping))

    @property
    def signed_difference(self) -> float:
        return self.median_dns - self.median_ping

    def as_dict(self) -> dict:
        return {
            "median_dns": self.median_dns,
            "median_ping": self.median_ping,
            "mad_dns": self.mad_dns,
            "mad_ping": self.mad_ping,
            "delta": self.delta,
            "n_dns": self.n_dns,
            "n_ping": self.n_ping,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "LatencyStats":
        return cls(d["median_dns"], d["median_ping"], d["mad_dns"], d["mad_ping"], d["n_dns"], d["n_ping"])


class Direction(str, Enum):
    DNS_SLOWER = "dns_slower"
    PING_SLOWER = "ping_slower"


def site_filtered_rtts(window: HourlyWindow, profile: Optional[PatternProfile]) -> Optional[list[float]]:
    """Answered DNS RTTs from the window's modal site.

    Answers labelled with another site reflect a catchment change and are
    dropped. Returns None when no single site is most common.
    """
    answered = [o for o in window.dns if o.outcome is Outcome.ANSWERED]
    if profile is None:
        return [o.rtt for o in answered]
    labels = [profile.site_of(window.letter, o.server_id) for o in answered]
    counts = Counter(label for label in labels if label is not None)
    if not counts:
        return []
    ranked = counts.most_common(2)
    if len(ranked) == 2 and ranked[0][1] == ranked[1][1]:
        return None
    site = ranked[0][0]
    return [o.rtt for o, label in zip(answered, labels) if label == site]


def spoofed_rtts(window: HourlyWindow, profile: PatternProfile) -> list[float]:
    """RTTs of answers whose server ID matches no legitimate pattern."""
    return [
        o.rtt
        for o in window.dns
        if o.outcome is Outcome.ANSWERED and not profile.matches(window.letter, o.server_id)
    ]


def ping_rtts(window: HourlyWindow) -> list[float]:
    return [p.rtt for p in window.ping if p.rtt is not None]


def _enough(dns: Optional[Sequence[float]], ping: Sequence[float], thresholds: CovertThresholds) -> bool:
    return dns is not None and len(dns) >= thresholds.min_samples and len(ping) >= thresholds.min_samples


def latency_stats(
    window: HourlyWindow,
    profile: Optional[PatternProfile] = None,
    thresholds: CovertThresholds = DEFAULT_THRESHOLDS,
    letters: Mapping[str, ServiceLetter] = ROOT_LETTERS,
) -> Optional[LatencyStats]:
    """DNS and ping medians/MADs for a window; None when data is insufficient.

    Letters that never answer ICMP have no ping baseline and always give None.
    """
    if not letters[window.letter].icmp_responsive:
        return None
    dns = site_filtered_rtts(window, profile)
    ping = ping_rtts(window)
    if not _enough(dns, ping, thresholds):
        return None
    return LatencyStats.from_samples(dns, ping)


def spoofed_latency_stats(
    window: HourlyWindow,
    profile: PatternProfile,
    thresholds: CovertThresholds = DEFAULT_THRESHOLDS,
    letters: Mapping[str, ServiceLetter] = ROOT_LETTERS,
) -> Optional[LatencyStats]:
    """Like :func:`latency_stats` but over the spoofed answers only."""
    if not letters[window.letter].icmp_responsive:
        return None
    dns = spoofed_rtts(window, profile)
    ping = ping_rtts(window)
    if not _enough(dns, ping, thresholds):
        return None
    return LatencyStats.from_samples(dns, ping)


def is_covert_delayed(stats: LatencyStats, thresholds: CovertThresholds = DEFAULT_THRESHOLDS) -> bool:
    d = stats.delta
    return (
        d > thresholds.rel_factor * min(stats.median_dns, stats.median_ping)
        and d > thresholds.mad_factor * max(stats.mad_dns, stats.mad_ping)
        and d > thresholds.floor_ms
    )


def delay_direction(stats: LatencyStats) -> tuple[Direction, float]:
    """Which side is slower, with the signed DNS-minus-ping difference.

    Equal medians count as ping_slower; dns_slower needs a strictly larger DNS median.
    """
    diff = stats.signed_difference
    return (Direction.DNS_SLOWER if diff > 0 else Direction.PING_SLOWER), diff


def _csr(samples: Sequence[Sequence[float]]) -> tuple[np.ndarray, np.ndarray]:
    counts = np.fromiter((len(s) for s in samples), dtype=np.int64, count=len(samples))
    offsets = np.zeros(len(samples) + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    values = np.fromiter((x for s in samples for x in s), dtype=np.float64, count=int(offsets[-1]))
    return values, offsets


def stats_from_sample_sets(
    dns_sets: Sequence[Optional[Sequence[float]]],
    ping_sets: Sequence[Sequence[float]],
    thresholds: CovertThresholds = DEFAULT_THRESHOLDS,
) -> list[Optional[LatencyStats]]:
    """Batched :meth:`LatencyStats.from_samples` on the median/MAD kernel."""
    keep = [i for i, (d, p) in enumerate(zip(dns_sets, ping_sets)) if _enough(d, p, thresholds)]
    out: list[Optional[LatencyStats]] = [None] * len(dns_sets)
    if not keep:
        return out
    dv, do = _csr([dns_sets[i] for i in keep])
    pv, po = _csr([ping_sets[i] for i in keep])
    md, madd = _kernels.segment_median_mad(dv, do)
    mp, madp = _kernels.segment_median_mad(pv, po)
    nd, np_ = np.diff(do), np.diff(po)
    for j, i in enumerate(keep):
        out[i] = LatencyStats(
            float(md[j]), float(mp[j]), float(madd[j]), float(madp[j]), int(nd[j]), int(np_[j])
        )
    return out


def batch_latency_stats(
    windows: Iterable[HourlyWindow],
    profile: Optional[PatternProfile] = None,
    thresholds: CovertThresholds = DEFAULT_THRESHOLDS,
    letters: Mapping[str, ServiceLetter] = ROOT_LETTERS,
) -> list[Optional[LatencyStats]]:
    """:func:`latency_stats` for many windows at once; identical results."""
    dns_sets, ping_sets = [], []
    for w in windows:
        if letters[w.letter].icmp_responsive:
            dns_sets.append(site_filtered_rtts(w, profile))
            ping_sets.append(ping_rtts(w))
        else:
            dns_sets.append(None)
            ping_sets.append([])
    return stats_from_sample_sets(dns_sets, ping_sets, thresholds)


def covert_flags(stats: Sequence[Optional[LatencyStats]], thresholds: CovertThresholds = DEFAULT_THRESHOLDS) -> list[bool]:
    """Vectorized :func:`is_covert_delayed`; None entries give False."""
    idx = [i for i, s in enumerate(stats) if s is not None]
    out = [False] * len(stats)
    if not idx:
        return out
    cols = np.array(
        [(stats[i].median_dns, stats[i].median_ping, stats[i].mad_dns, stats[i].mad_ping) for i in idx]
    )
    mask = _kernels.covert_mask(
        cols[:, 0], cols[:, 1], cols[:, 2], cols[:, 3], thresholds.rel_factor, thresholds.mad_factor, thresholds.floor_ms
    )
    for i, flag in zip(idx, mask):
        out[i] = bool(flag)
    return out
