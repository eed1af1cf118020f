"""Population-level reductions over verdicts: spoof fractions, trends, countries, CDFs."""

from __future__ import annotations

import csv
import io
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from .model import LETTERS, ROOT_LETTERS, Classification, Mechanism, ServiceLetter, VantagePoint, Verdict, epoch_date

UNKNOWN_COUNTRY = "??"

# VP-level state within one hour, strongest first
_SPOOFED, _ANSWERED, _TIMEOUT, _INSUFFICIENT = range(4)


def _state(v: Verdict) -> int:
    if v.is_spoofed:
        return _SPOOFED
    if v.counts_as_valid:
        return _ANSWERED
    if v.classification is Classification.TIMEOUT:
        return _TIMEOUT
    return _INSUFFICIENT


@dataclass(frozen=True)
class VpState:
    vp_id: str
    state: int
    covert: bool
    spoofed_letters: frozenset[str]


def vp_states(verdicts: Iterable[Verdict]) -> dict[str, VpState]:
    """Collapse per-letter verdicts of one hour into one state per VP.

    A VP is spoofed when any letter is overt_spoofed; otherwise answered when
    any letter answered; otherwise timeout; otherwise insufficient.
    """
    best: dict[str, int] = {}
    covert: dict[str, bool] = defaultdict(bool)
    spoofed: dict[str, set[str]] = defaultdict(set)
    for v in verdicts:
        s = _state(v)
        best[v.vp_id] = min(best.get(v.vp_id, _INSUFFICIENT), s)
        if v.classification is Classification.COVERT_DELAYED:
            covert[v.vp_id] = True
        if v.is_spoofed:
            spoofed[v.vp_id].add(v.letter)
    return {
        vp: VpState(vp, s, covert[vp] and s == _ANSWERED, frozenset(spoofed[vp]))
        for vp, s in sorted(best.items())
    }


@dataclass(frozen=True)
class EpochSummary:
    window_start: int
    date: str
    n_active_vps: int
    n_timeout: int
    n_answered: int
    n_valid: int
    n_covert_delayed: int
    n_spoofed: int
    n_insufficient: int
    fraction_timeout: float
    fraction_spoofed: float
    fraction_covert_delayed: float
    per_letter_spoofed: Mapping[str, int] = field(default_factory=dict)
    per_letter_active: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.n_answered != self.n_valid + self.n_spoofed:
            raise AssertionError("n_answered != n_valid + n_spoofed")
        if self.n_active_vps != self.n_answered + self.n_timeout:
            raise AssertionError("n_active != n_answered + n_timeout")

    def as_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["per_letter_spoofed"] = dict(self.per_letter_spoofed)
        d["per_letter_active"] = dict(self.per_letter_active)
        return d


def _frac(num: int, den: int) -> float:
    return num / den if den else 0.0


def epoch_summary(verdicts: Iterable[Verdict], letter: Optional[str] = None) -> EpochSummary:
    """Counts for one sampled hour; ``letter`` restricts to one service letter.

    Covert delayers count inside valid. Insufficient VPs are not active.
    """
    verdicts = [v for v in verdicts if letter is None or v.letter == letter]
    starts = {v.window_start for v in verdicts}
    if len(starts) > 1:
        raise ValueError(f"verdicts span {len(starts)} hours; summarize one hour at a time")
    start = starts.pop() if starts else 0
    states = vp_states(verdicts)
    c = Counter(s.state for s in states.values())
    n_spoofed, n_answered_ok, n_timeout = c[_SPOOFED], c[_ANSWERED], c[_TIMEOUT]
    n_answered = n_spoofed + n_answered_ok
    n_active = n_answered + n_timeout
    n_covert = sum(s.covert for s in states.values())

    per_spoofed: Counter = Counter()
    per_active: Counter = Counter()
    for v in verdicts:
        if v.classification is not Classification.INSUFFICIENT:
            per_active[v.letter] += 1
        if v.is_spoofed:
            per_spoofed[v.letter] += 1
    return EpochSummary(
        window_start=start,
        date=epoch_date(start),
        n_active_vps=n_active,
        n_timeout=n_timeout,
        n_answered=n_answered,
        n_valid=n_answered_ok,
        n_covert_delayed=n_covert,
        n_spoofed=n_spoofed,
        n_insufficient=c[_INSUFFICIENT],
        fraction_timeout=_frac(n_timeout, n_active),
        fraction_spoofed=_frac(n_spoofed, n_active),
        fraction_covert_delayed=_frac(n_covert, n_active),
        per_letter_spoofed={k: per_spoofed[k] for k in LETTERS if per_active[k] or per_spoofed[k]},
        per_letter_active={k: per_active[k] for k in LETTERS if per_active[k]},
    )


def group_epochs(verdicts: Iterable[Verdict]) -> dict[int, list[Verdict]]:
    """Verdicts bucketed by sampled hour, in time order."""
    out: dict[int, list[Verdict]] = defaultdict(list)
    for v in verdicts:
        out[v.window_start].append(v)
    return {k: out[k] for k in sorted(out)}


def trend(epochs: Mapping[int, Sequence[Verdict]]) -> list[dict[str, Any]]:
    """Spoofed fraction per hour, overall and per letter."""
    rows = []
    for start in sorted(epochs):
        s = epoch_summary(epochs[start])
        row = {
            "window_start": start,
            "date": s.date,
            "n_active_vps": s.n_active_vps,
            "n_spoofed": s.n_spoofed,
            "fraction_spoofed": s.fraction_spoofed,
        }
        for k in LETTERS:
            row[f"fraction_{k}"] = _frac(s.per_letter_spoofed.get(k, 0), s.per_letter_active.get(k, 0))
        rows.append(row)
    return rows


def select_cohort(epochs: Mapping[int, Sequence[Verdict]], n: int = 3000) -> frozenset[str]:
    """The ``n`` VPs active in the most hours; ties go to the smaller vp_id."""
    presence: Counter = Counter()
    for verdicts in epochs.values():
        for vp, s in vp_states(verdicts).items():
            if s.state != _INSUFFICIENT:
                presence[vp] += 1
    ranked = sorted(presence.items(), key=lambda kv: (-kv[1], kv[0]))
    return frozenset(vp for vp, _ in ranked[:n])


def cohort_trend(epochs: Mapping[int, Sequence[Verdict]], cohort: Iterable[str]) -> list[dict[str, Any]]:
    """:func:`trend` restricted to a fixed set of VPs."""
    cohort = frozenset(cohort)
    if not cohort:
        raise ValueError("cohort is empty")
    return trend({k: [v for v in vs if v.vp_id in cohort] for k, vs in epochs.items()})


def country_fractions(
    verdicts: Iterable[Verdict], vp_index: Mapping[str, VantagePoint], min_vps: int = 10
) -> dict[str, Any]:
    """Spoofed and active VPs per country for one hour.

    Countries with fewer than ``min_vps`` active VPs are flagged and left out of
    the ranking. VPs without metadata land in the ``??`` bucket so the spoofed
    counts still add up to the epoch total.
    """
    spoofed: Counter = Counter()
    active: Counter = Counter()
    for vp, s in vp_states(verdicts).items():
        if s.state == _INSUFFICIENT:
            continue
        meta = vp_index.get(vp)
        cc = meta.country if meta is not None else UNKNOWN_COUNTRY
        active[cc] += 1
        spoofed[cc] += s.state == _SPOOFED
    countries = {}
    for cc in sorted(active):
        countries[cc] = {
            "spoofed": spoofed[cc],
            "active": active[cc],
            "fraction": _frac(spoofed[cc], active[cc]),
            "under_sampled": active[cc] < min_vps,
        }
    ranking = sorted(
        (cc for cc, row in countries.items() if not row["under_sampled"] and cc != UNKNOWN_COUNTRY),
        key=lambda cc: (-countries[cc]["fraction"], cc),
    )
    return {"min_vps": min_vps, "countries": countries, "ranking": ranking}


def letter_count_cdf(verdicts: Iterable[Verdict], n_letters: int = len(LETTERS)) -> dict[str, Any]:
    """Distribution of how many letters each spoofed VP sees spoofed.

    ``cdf[k-1]`` is the share of spoofed VPs with at most ``k`` spoofed letters.
    Empty when no VP is spoofed.
    """
    counts = Counter(len(s.spoofed_letters) for s in vp_states(verdicts).values() if s.state == _SPOOFED)
    total = sum(counts.values())
    if total == 0:
        return {"n_spoofed_vps": 0, "counts": [0] * n_letters, "cdf": []}
    hist = [counts.get(k, 0) for k in range(1, n_letters + 1)]
    cdf = (np.cumsum(hist) / total).tolist()
    return {"n_spoofed_vps": total, "counts": hist, "cdf": cdf}


def mechanism_trend(epochs: Mapping[int, Sequence[Verdict]]) -> list[dict[str, Any]]:
    """Spoofed VPs per hour split by mechanism.

    A VP counts as anycast only when every spoofed letter it sees is anycast;
    one non-anycast letter means a device on its path. Hours without spoofed
    VPs produce no row.
    """
    rows = []
    for start in sorted(epochs):
        mech_by_vp: dict[str, set] = defaultdict(set)
        for v in epochs[start]:
            if v.is_spoofed:
                mech_by_vp[v.vp_id].add(v.mechanism)
        if not mech_by_vp:
            continue
        anycast = sum(1 for ms in mech_by_vp.values() if ms == {Mechanism.ANYCAST})
        total = len(mech_by_vp)
        rows.append(
            {
                "window_start": start,
                "date": epoch_date(start),
                "n_spoofed_vps": total,
                "anycast": anycast,
                "non_anycast": total - anycast,
                "non_anycast_share": (total - anycast) / total,
            }
        )
    return rows


def _cdf(values: Sequence[float]) -> list[list[float]]:
    xs = sorted(values)
    n = len(xs)
    return [[x, (i + 1) / n] for i, x in enumerate(xs)]


def latency_improvement(
    verdicts: Iterable[Verdict], letters: Mapping[str, ServiceLetter] = ROOT_LETTERS
) -> dict[str, Any]:
    """Per-letter CDF of ping median minus spoofed-DNS median.

    Positive values mean the spoofed answer arrives faster than the real
    service would. Letters without ICMP and windows without a latency baseline
    are excluded and counted.
    """
    values: dict[str, list[float]] = defaultdict(list)
    excluded = Counter()
    for v in verdicts:
        if not v.is_spoofed:
            continue
        if not letters[v.letter].icmp_responsive:
            excluded["no_icmp"] += 1
            continue
        st = v.evidence.get("spoof_latency")
        if not st:
            excluded["no_baseline"] += 1
            continue
        values[v.letter].append(st["median_ping"] - st["median_dns"])
    pooled = [x for k in sorted(values) for x in values[k]]
    return {
        "letters": {k: {"n": len(values[k]), "cdf": _cdf(values[k])} for k in sorted(values)},
        "all": {"n": len(pooled), "cdf": _cdf(pooled)},
        "share_nonpositive": _frac(sum(x <= 0 for x in pooled), len(pooled)) if pooled else None,
        "excluded": {"no_icmp": excluded["no_icmp"], "no_baseline": excluded["no_baseline"]},
    }


SUMMARY_COLUMNS = (
    "window_start",
    "date",
    "n_active_vps",
    "n_timeout",
    "n_answered",
    "n_valid",
    "n_covert_delayed",
    "n_spoofed",
    "n_insufficient",
    "fraction_timeout",
    "fraction_spoofed",
    "fraction_covert_delayed",
)
TREND_COLUMNS = ("window_start", "date", "n_active_vps", "n_spoofed", "fraction_spoofed") + tuple(
    f"fraction_{k}" for k in LETTERS
)
MECHANISM_COLUMNS = ("window_start", "date", "n_spoofed_vps", "anycast", "non_anycast", "non_anycast_share")
COUNTRY_COLUMNS = ("country", "spoofed", "active", "fraction", "under_sampled")


def _cell(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def to_csv(rows: Iterable[Mapping[str, Any]], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row[c]) for c in columns])
    return buf.getvalue()


def country_rows(report: Mapping[str, Any]) -> list[dict[str, Any]]:
    return [{"country": cc, **row} for cc, row in report["countries"].items()]
