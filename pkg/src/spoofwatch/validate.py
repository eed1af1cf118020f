"""Server-side validation: match client queries against anonymized authority logs."""

from __future__ import annotations

import dataclasses
import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from .covert import LatencyStats, delay_direction
from .ingest.records import SkipReport, Source, dumps_record, iter_lines
from .mechanism import refine_with_server_log
from .model import (
    Classification,
    HourlyWindow,
    Mechanism,
    Outcome,
    VantagePoint,
    Verdict,
    normalize_prefix,
)

log = logging.getLogger(__name__)

DEFAULT_QNAME = "hostname.bind"
DEFAULT_QUERY_TYPE = "CH TXT"
DEFAULT_TOLERANCE = 240


class UnsortedLogError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class ServerLogRecord:
    timestamp: int
    source_prefix: str
    query_type: str
    qname: str
    letter: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "source_prefix", normalize_prefix(self.source_prefix))
        object.__setattr__(self, "qname", self.qname.lower().rstrip("."))

    def to_record(self) -> dict[str, Any]:
        return {
            "timestamp": self.timestamp,
            "source_prefix": self.source_prefix,
            "query_type": self.query_type,
            "qname": self.qname,
            "letter": self.letter,
        }


def serialize_server_log(records: Iterable[ServerLogRecord]) -> bytes:
    return "".join(
        dumps_record(r.to_record()) + "\n" for r in records
    ).encode()


def parse_server_log(source: Source) -> tuple[list[ServerLogRecord], SkipReport]:
    report = SkipReport()
    out = []
    for n, raw in iter_lines(source):
        if not raw.strip():
            continue
        report.n_lines += 1
        try:
            rec = json.loads(raw.decode("utf-8"))
            ts = rec["timestamp"]
            if not isinstance(ts, int) or isinstance(ts, bool):
                raise ValueError("timestamp must be integer seconds")
            out.append(ServerLogRecord(ts, rec["source_prefix"], rec["query_type"], rec["qname"], rec["letter"]))
        except (ValueError, TypeError, KeyError, AttributeError, UnicodeDecodeError) as exc:
            report.skipped.append((n, f"{type(exc).__name__}: {exc}"))
    report.n_parsed = len(out)
    return out, report


@dataclass(frozen=True)
class MatchResult:
    vp_id: str
    letter: str
    window_start: int
    queries_sent: int
    queries_matched: int
    shared_prefix: bool = False
    matched: bool = field(init=False)

    def __post_init__(self) -> None:
        if not 0 <= self.queries_matched <= self.queries_sent:
            raise ValueError("queries_matched must lie in [0, queries_sent]")
        object.__setattr__(self, "matched", self.queries_matched > 0)

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.vp_id, self.letter, self.window_start)


class LogIndex:
    """Timestamps per source /24, for one letter, query type and name."""

    def __init__(self, records: Sequence[ServerLogRecord], letter: str, query_type: str, qname: str):
        prev = None
        by_prefix: dict[str, list[int]] = defaultdict(list)
        qname = qname.lower().rstrip(".")
        for r in records:
            if prev is not None and r.timestamp < prev:
                raise UnsortedLogError(f"server log not sorted by timestamp ({r.timestamp} after {prev})")
            prev = r.timestamp
            if r.letter == letter and r.query_type == query_type and r.qname == qname:
                by_prefix[r.source_prefix].append(r.timestamp)
        self.times = {p: np.asarray(ts, dtype=np.int64) for p, ts in by_prefix.items()}
        self._empty = np.empty(0, dtype=np.int64)

    def __getitem__(self, prefix: str) -> np.ndarray:
        return self.times.get(prefix, self._empty)


def examined_queries(window: HourlyWindow) -> list[int]:
    """Timestamps of the client queries a window is validated on.

    Only successes when any query succeeded; all timeouts otherwise.
    """
    answered = [o.timestamp for o in window.dns if o.outcome is Outcome.ANSWERED]
    if answered:
        return answered
    return [o.timestamp for o in window.dns if o.outcome is Outcome.TIMEOUT]


def match_queries(
    windows: Iterable[HourlyWindow],
    log_records: Sequence[ServerLogRecord],
    vp_index: Mapping[str, VantagePoint],
    tolerance: int = DEFAULT_TOLERANCE,
    query_type: str = DEFAULT_QUERY_TYPE,
    qname: str = DEFAULT_QNAME,
) -> list[MatchResult]:
    """Per-window count of client queries seen at the server.

    A query matches a log record from the VP's /24 with the same query type
    and name within ``tolerance`` seconds. One log record may satisfy several
    queries; anonymization rules out exact pairing.
    """
    windows = list(windows)
    letters = {w.letter for w in windows}
    if len(letters) > 1:
        raise ValueError(f"windows span several letters: {sorted(letters)}")
    if not windows:
        # still reject an unsorted log
        LogIndex(log_records, "", query_type, qname)
        return []
    letter = letters.pop()
    index = LogIndex(log_records, letter, query_type, qname)

    vps_per_prefix: dict[str, set[str]] = defaultdict(set)
    for w in windows:
        vp = vp_index.get(w.vp_id)
        if vp is not None:
            vps_per_prefix[vp.public_prefix].add(w.vp_id)

    out = []
    for w in windows:
        vp = vp_index.get(w.vp_id)
        sent = examined_queries(w)
        if vp is None:
            log.warning("no metadata for VP %s; counted as unmatched", w.vp_id)
            out.append(MatchResult(w.vp_id, letter, w.window_start, len(sent), 0))
            continue
        hits = _kernels.match_within(np.asarray(sent, dtype=np.int64), index[vp.public_prefix], tolerance)
        shared = len(vps_per_prefix[vp.public_prefix]) > 1
        out.append(MatchResult(w.vp_id, letter, w.window_start, len(sent), int(hits.sum()), shared))
    return out


@dataclass(frozen=True)
class ClassRate:
    n: int
    n_matched: int
    tp: Optional[float]

    def as_dict(self) -> dict:
        return {"n": self.n, "n_matched": self.n_matched, "tp": self.tp}


RATE_CLASSES = ("timeout", "spoofed", "non_anycast", "anycast", "not_spoofed")


def _classes_of(v: Verdict) -> list[str]:
    if v.classification is Classification.TIMEOUT:
        return ["timeout"]
    if v.is_spoofed:
        mech = "anycast" if v.mechanism is Mechanism.ANYCAST else "non_anycast"
        return ["spoofed", mech]
    if v.counts_as_valid:
        return ["not_spoofed"]
    return []


def _rate(cls: str, n: int, n_matched: int) -> ClassRate:
    if n == 0:
        return ClassRate(0, 0, None)
    # not-spoofed windows are correct when seen; all others when absent
    good = n_matched if cls == "not_spoofed" else n - n_matched
    return ClassRate(n, n_matched, good / n)


def _verdict_lookup(verdicts: Iterable[Verdict]) -> dict[tuple[str, str, int], Verdict]:
    return {v.key: v for v in verdicts}


def true_positive_rates(match_results: Iterable[MatchResult], verdicts: Iterable[Verdict]) -> dict[str, Any]:
    """Per-hour true-positive rate for each detection class, plus spread across hours."""
    lookup = _verdict_lookup(verdicts)
    tallies: dict[int, dict[str, list[int]]] = defaultdict(lambda: {c: [0, 0] for c in RATE_CLASSES})
    residual: Counter = Counter()
    collisions: Counter = Counter()
    for m in match_results:
        v = lookup.get(m.key)
        if v is None:
            continue
        hour = tallies[m.window_start]
        for cls in _classes_of(v):
            hour[cls][0] += 1
            hour[cls][1] += int(m.matched)
        if v.counts_as_valid and not m.matched:
            residual[m.window_start] += 1
        if m.shared_prefix:
            collisions[m.window_start] += 1

    hours = {}
    for start in sorted(tallies):
        rates = {c: _rate(c, *tallies[start][c]) for c in RATE_CLASSES}
        sp = rates["spoofed"]
        hours[start] = {
            "rates": {c: r.as_dict() for c, r in rates.items()},
            "upper_bound_fp": None if sp.tp is None else sp.n_matched / sp.n,
            "residual_not_spoofed_unmatched": residual[start],
            "shared_prefix_windows": collisions[start],
        }

    summary = {}
    for c in RATE_CLASSES:
        vals = [h["rates"][c]["tp"] for h in hours.values() if h["rates"][c]["tp"] is not None]
        if vals:
            q25, q50, q75 = np.quantile(vals, [0.25, 0.5, 0.75])
            summary[c] = {
                "n_hours": len(vals),
                "min": min(vals),
                "max": max(vals),
                "q25": float(q25),
                "q50": float(q50),
                "q75": float(q75),
            }
        else:
            summary[c] = {"n_hours": 0, "min": None, "max": None, "q25": None, "q50": None, "q75": None}
    return {"hours": hours, "summary": summary}


def upper_bound_false_positive(match_results: Iterable[MatchResult], verdicts: Iterable[Verdict]) -> Optional[float]:
    """Share of spoofed windows whose queries still reached the server.

    Injection also produces this pattern, so it bounds the false-positive rate
    from above; it is not itself a false-positive count.
    """
    lookup = _verdict_lookup(verdicts)
    n = hit = 0
    for m in match_results:
        v = lookup.get(m.key)
        if v is not None and v.is_spoofed:
            n += 1
            hit += int(m.matched)
    return None if n == 0 else hit / n


def confirm_covert_delayers(
    verdicts: Iterable[Verdict],
    match_results: Iterable[MatchResult],
    stats: Optional[Mapping[tuple[str, str, int], LatencyStats]] = None,
) -> dict[str, Any]:
    """Did covert-delayed queries reach the server, and which side was slower?

    ``stats`` defaults to the latency block stored in each verdict's evidence.
    """
    matches = {m.key: m for m in match_results}
    rows = []
    for v in sorted(verdicts, key=lambda v: v.key):
        if v.classification is not Classification.COVERT_DELAYED or v.key not in matches:
            continue
        st = stats[v.key] if stats is not None else LatencyStats.from_dict(v.evidence["latency"])
        direction, diff = delay_direction(st)
        reached = matches[v.key].matched
        rows.append(
            {
                "vp_id": v.vp_id,
                "letter": v.letter,
                "window_start": v.window_start,
                "reached": reached,
                "direction": direction.value,
                "signed_difference": diff,
                "anomalous": not reached,
            }
        )
    by_dir: dict[str, list[dict]] = defaultdict(list)
    for r in rows:
        by_dir[r["direction"]].append(r)
    directions = {}
    for d in ("dns_slower", "ping_slower"):
        group = by_dir.get(d, [])
        directions[d] = {
            "n": len(group),
            "n_reached": sum(r["reached"] for r in group),
            "mean_signed_difference": (sum(r["signed_difference"] for r in group) / len(group)) if group else None,
        }
    return {
        "n_delayers": len(rows),
        "n_reached": sum(r["reached"] for r in rows),
        "directions": directions,
        "anomalous": [r for r in rows if r["anomalous"]],
        "delayers": rows,
    }


def refine_verdicts(verdicts: Iterable[Verdict], match_results: Iterable[MatchResult]) -> list[Verdict]:
    """Split non-anycast spoofed verdicts into proxy or injection."""
    matches = {m.key: m for m in match_results}
    out = []
    for v in verdicts:
        m = matches.get(v.key)
        if m is not None:
            ev = dict(v.evidence)
            ev["server_match"] = {"queries_sent": m.queries_sent, "queries_matched": m.queries_matched}
            mech = refine_with_server_log(v, m) if v.is_spoofed else v.mechanism
            v = dataclasses.replace(v, mechanism=mech, evidence=ev)
        out.append(v)
    return out


def _fmt(x: Optional[float], digits: int = 2) -> str:
    return "-" if x is None else f"{x:.{digits}f}"


def render_tables(tp_report: Mapping[str, Any], covert: Optional[Mapping[str, Any]] = None) -> str:
    """Aligned text tables: per-hour reach counts, TP spread, and delayer check."""
    lines = []
    for start, hour in tp_report["hours"].items():
        lines.append(f"hour {start}")
        lines.append(f"  {'class':<14}{'sent':>8}{'received':>10}{'tp':>8}")
        for c in RATE_CLASSES:
            r = hour["rates"][c]
            lines.append(f"  {c:<14}{r['n']:>8}{r['n_matched']:>10}{_fmt(r['tp']):>8}")
        lines.append(f"  upper-bound FP {_fmt(hour['upper_bound_fp'])}")
        lines.append("")
    lines.append(f"{'class':<14}{'min':>8}{'max':>8}{'q25':>9}{'q50':>9}{'q75':>9}")
    for c, s in tp_report["summary"].items():
        lines.append(
            f"{c:<14}{_fmt(s['min']):>8}{_fmt(s['max']):>8}"
            f"{_fmt(s['q25'], 4):>9}{_fmt(s['q50'], 4):>9}{_fmt(s['q75'], 4):>9}"
        )
    if covert is not None:
        lines.append("")
        lines.append(f"{'covert delayers':<22}{'detected':>9}{'received':>10}{'dns-ping ms':>13}")
        lines.append(f"{'all':<22}{covert['n_delayers']:>9}{covert['n_reached']:>10}{'-':>13}")
        for d, label in (("dns_slower", "RTT_dns > RTT_ping"), ("ping_slower", "RTT_dns <= RTT_ping")):
            s = covert["directions"][d]
            lines.append(f"{label:<22}{s['n']:>9}{s['n_reached']:>10}{_fmt(s['mean_signed_difference']):>13}")
    return "\n".join(lines) + "\n"
