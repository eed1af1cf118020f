"""Canonical newline-delimited record format for DNS, ping and traceroute results.

One JSON object per line. Canonical records carry a ``kind`` field; lines that
look like RIPE Atlas result objects (``prb_id`` + ``dst_addr``) are converted
on the fly. Bad lines are counted in a :class:`SkipReport`, never raised.
"""

from __future__ import annotations

import gzip
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Callable, Iterable, Iterator, Mapping, NamedTuple, Optional, Union

from ..model import (
    ROOT_LETTERS,
    DnsObservation,
    Observation,
    Outcome,
    PingObservation,
    ServiceLetter,
    TracerouteObservation,
)

Source = Union[bytes, str, Path, IO[bytes]]


@dataclass
class SkipReport:
    n_lines: int = 0
    n_parsed: int = 0
    skipped: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_skipped(self) -> int:
        return len(self.skipped)

    def as_dict(self) -> dict[str, Any]:
        return {
            "n_lines": self.n_lines,
            "n_parsed": self.n_parsed,
            "n_skipped": self.n_skipped,
            "skipped": [{"line": n, "reason": r} for n, r in self.skipped[:100]],
        }


class ParseResult(NamedTuple):
    observations: list
    report: SkipReport


def _rtt(value: Any) -> Optional[float]:
    if value is None:
        return None
    rtt = float(value)
    if rtt != rtt or rtt <= 0:
        raise ValueError(f"bad rtt {value!r}")
    # microsecond precision, expressed in milliseconds
    return round(rtt, 3)


def _timestamp(value: Any) -> int:
    if isinstance(value, bool):
        raise ValueError("timestamp must be an integer")
    ts = int(value)
    if ts != value:
        raise ValueError(f"timestamp must be integer seconds, got {value!r}")
    return ts


def _letter_by_address(letters: Mapping[str, ServiceLetter]) -> dict[str, str]:
    return {s.service_address: s.letter for s in letters.values()}


# -- canonical <-> observation ------------------------------------------------


def to_record(obs: Observation) -> dict[str, Any]:
    if isinstance(obs, DnsObservation):
        return {
            "kind": "dns",
            "vp_id": obs.vp_id,
            "letter": obs.letter,
            "timestamp": obs.timestamp,
            "outcome": obs.outcome.value,
            "server_id": obs.server_id,
            "rtt": obs.rtt,
        }
    if isinstance(obs, PingObservation):
        return {"kind": "ping", "vp_id": obs.vp_id, "letter": obs.letter, "timestamp": obs.timestamp, "rtt": obs.rtt}
    if isinstance(obs, TracerouteObservation):
        return {
            "kind": "traceroute",
            "vp_id": obs.vp_id,
            "letter": obs.letter,
            "timestamp": obs.timestamp,
            "hops": [[ttl, addr] for ttl, addr in obs.hops],
            "reached": obs.reached,
        }
    raise TypeError(f"not an observation: {type(obs).__name__}")


# one shared encoder; json.dumps would build a new one per call
_ENCODER = json.JSONEncoder(sort_keys=True, separators=(",", ":"))


def dumps_record(record: Mapping[str, Any]) -> str:
    return _ENCODER.encode(record)


def serialize(observations: Iterable[Observation]) -> bytes:
    return "".join(dumps_record(to_record(o)) + "\n" for o in observations).encode()


def _dns_from_canonical(rec: Mapping[str, Any]) -> DnsObservation:
    outcome = Outcome(rec["outcome"])
    server_id = rec.get("server_id")
    if server_id is not None and not isinstance(server_id, str):
        raise ValueError("server_id must be a string")
    return DnsObservation(
        str(rec["vp_id"]), rec["letter"], _timestamp(rec["timestamp"]), outcome, server_id, _rtt(rec.get("rtt"))
    )


def _ping_from_canonical(rec: Mapping[str, Any]) -> PingObservation:
    return PingObservation(str(rec["vp_id"]), rec["letter"], _timestamp(rec["timestamp"]), _rtt(rec.get("rtt")))


def _trace_from_canonical(rec: Mapping[str, Any]) -> TracerouteObservation:
    hops = []
    for hop in rec["hops"]:
        ttl, addr = hop
        if addr is not None and not isinstance(addr, str):
            raise ValueError("hop responder must be a string or null")
        hops.append((_timestamp(ttl), addr))
    reached = rec["reached"]
    if not isinstance(reached, bool):
        raise ValueError("reached must be a boolean")
    return TracerouteObservation(str(rec["vp_id"]), rec["letter"], _timestamp(rec["timestamp"]), tuple(hops), reached)


# -- RIPE Atlas result objects -------------------------------------------------


def _atlas_letter(rec: Mapping[str, Any], by_addr: Mapping[str, str]) -> str:
    addr = rec.get("dst_addr")
    if addr not in by_addr:
        raise ValueError(f"destination {addr!r} is not a known service address")
    return by_addr[addr]


def _atlas_txt(result: Mapping[str, Any]) -> Optional[str]:
    for answer in result.get("answers", ()):
        rdata = answer.get("RDATA")
        if rdata:
            return rdata[0] if isinstance(rdata, list) else str(rdata)
    return None


def _dns_from_atlas(rec: Mapping[str, Any], by_addr: Mapping[str, str]) -> DnsObservation:
    letter = _atlas_letter(rec, by_addr)
    vp, ts = str(rec["prb_id"]), _timestamp(rec["timestamp"])
    if "error" in rec:
        if "timeout" in rec["error"]:
            return DnsObservation(vp, letter, ts, Outcome.TIMEOUT)
        return DnsObservation(vp, letter, ts, Outcome.ERROR)
    result = rec["result"]
    server_id = _atlas_txt(result)
    if server_id is None:
        return DnsObservation(vp, letter, ts, Outcome.ERROR)
    return DnsObservation(vp, letter, ts, Outcome.ANSWERED, server_id, _rtt(result["rt"]))


def _ping_from_atlas(rec: Mapping[str, Any], by_addr: Mapping[str, str]) -> PingObservation:
    letter = _atlas_letter(rec, by_addr)
    rtts = [r["rtt"] for r in rec.get("result", ()) if isinstance(r, dict) and "rtt" in r]
    return PingObservation(str(rec["prb_id"]), letter, _timestamp(rec["timestamp"]), _rtt(min(rtts)) if rtts else None)


def _trace_from_atlas(rec: Mapping[str, Any], by_addr: Mapping[str, str]) -> TracerouteObservation:
    letter = _atlas_letter(rec, by_addr)
    hops = []
    for hop in rec["result"]:
        responder = next((r["from"] for r in hop.get("result", ()) if "from" in r), None)
        hops.append((int(hop["hop"]), responder))
    reached = any(addr == rec["dst_addr"] for _, addr in hops)
    if reached:
        # drop anything after the destination answered
        last = max(i for i, (_, a) in enumerate(hops) if a == rec["dst_addr"])
        hops = hops[: last + 1]
    return TracerouteObservation(str(rec["prb_id"]), letter, _timestamp(rec["timestamp"]), tuple(hops), reached)


# -- parsing driver -------------------------------------------------------------


def _open_bytes(source: Source) -> IO[bytes]:
    if isinstance(source, bytes):
        return io.BytesIO(source)
    if isinstance(source, (str, Path)):
        path = Path(source)
        if path.suffix == ".gz":
            return gzip.open(path, "rb")
        return open(path, "rb")
    return source


def iter_lines(source: Source) -> Iterator[tuple[int, bytes]]:
    stream = _open_bytes(source)
    try:
        for n, raw in enumerate(stream, start=1):
            yield n, raw
    finally:
        if stream is not source:
            stream.close()


def _parse(
    source: Source,
    kind: str,
    canonical: Callable[[Mapping[str, Any]], Observation],
    atlas: Callable[[Mapping[str, Any], Mapping[str, str]], Observation],
    letters: Mapping[str, ServiceLetter],
) -> ParseResult:
    by_addr = _letter_by_address(letters)
    report = SkipReport()
    out = []
    for n, raw in iter_lines(source):
        if not raw.strip():
            continue
        report.n_lines += 1
        try:
            rec = json.loads(raw.decode("utf-8"))
            if not isinstance(rec, dict):
                raise ValueError("record is not an object")
            if "kind" in rec:
                if rec["kind"] != kind:
                    raise ValueError(f"record kind {rec['kind']!r}, expected {kind!r}")
                obs = canonical(rec)
            elif "prb_id" in rec and "dst_addr" in rec:
                obs = atlas(rec, by_addr)
            else:
                raise ValueError("unrecognized record shape")
        except (ValueError, TypeError, KeyError, IndexError, AttributeError, UnicodeDecodeError, OverflowError) as exc:
            report.skipped.append((n, f"{type(exc).__name__}: {exc}"))
            continue
        out.append(obs)
    report.n_parsed = len(out)
    return ParseResult(out, report)


def parse_dns_results(source: Source, letters: Mapping[str, ServiceLetter] = ROOT_LETTERS) -> ParseResult:
    """Parse hostname.bind results into :class:`DnsObservation` objects."""
    return _parse(source, "dns", _dns_from_canonical, _dns_from_atlas, letters)


def parse_ping_results(source: Source, letters: Mapping[str, ServiceLetter] = ROOT_LETTERS) -> ParseResult:
    return _parse(source, "ping", _ping_from_canonical, _ping_from_atlas, letters)


def parse_traceroute_results(source: Source, letters: Mapping[str, ServiceLetter] = ROOT_LETTERS) -> ParseResult:
    """Parse traceroutes; a hop with no responder is stored with ``None``."""
    return _parse(source, "traceroute", _trace_from_canonical, _trace_from_atlas, letters)


def parse_any(source: Source, letters: Mapping[str, ServiceLetter] = ROOT_LETTERS) -> ParseResult:
    """Parse a mixed canonical file holding all three kinds."""
    parsers = {"dns": _dns_from_canonical, "ping": _ping_from_canonical, "traceroute": _trace_from_canonical}
    report = SkipReport()
    out = []
    for n, raw in iter_lines(source):
        if not raw.strip():
            continue
        report.n_lines += 1
        try:
            rec = json.loads(raw.decode("utf-8"))
            out.append(parsers[rec["kind"]](rec))
        except (ValueError, TypeError, KeyError, IndexError, AttributeError, UnicodeDecodeError, OverflowError) as exc:
            report.skipped.append((n, f"{type(exc).__name__}: {exc}"))
    report.n_parsed = len(out)
    return ParseResult(out, report)
