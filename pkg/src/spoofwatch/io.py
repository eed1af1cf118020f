"""Deterministic file output and verdict (de)serialization."""

from __future__ import annotations

import csv
import gzip
import io
import json
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Union

from .ingest.records import dumps_record, iter_lines
from .model import Classification, Mechanism, VantagePoint, Verdict

PathLike = Union[str, Path]


def dumps_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_bytes(path: PathLike, data: bytes) -> None:
    """Write ``data``; a ``.gz`` suffix compresses with a zero mtime so output is reproducible."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".gz":
        data = gzip.compress(data, mtime=0)
    path.write_bytes(data)


def write_text(path: PathLike, text: str) -> None:
    write_bytes(path, text.encode("utf-8"))


def write_json(path: PathLike, obj: Any) -> None:
    write_text(path, dumps_json(obj))


def jsonl_bytes(records: Iterable[Mapping[str, Any]]) -> bytes:
    return "".join(dumps_record(r) + "\n" for r in records).encode()


def write_jsonl(path: PathLike, records: Iterable[Mapping[str, Any]]) -> None:
    write_bytes(path, jsonl_bytes(records))


def read_jsonl(path: PathLike) -> Iterator[dict[str, Any]]:
    for _, raw in iter_lines(Path(path)):
        if raw.strip():
            yield json.loads(raw)


def verdict_to_record(v: Verdict) -> dict[str, Any]:
    return {
        "vp_id": v.vp_id,
        "letter": v.letter,
        "window_start": v.window_start,
        "classification": v.classification.value,
        "mechanism": v.mechanism.value if v.mechanism else None,
        "spoofer_cluster": v.spoofer_cluster,
        "evidence": v.evidence,
    }


def verdict_from_record(rec: Mapping[str, Any]) -> Verdict:
    mech = rec.get("mechanism")
    return Verdict(
        rec["vp_id"],
        rec["letter"],
        int(rec["window_start"]),
        Classification(rec["classification"]),
        Mechanism(mech) if mech else None,
        rec.get("spoofer_cluster"),
        rec.get("evidence") or {},
    )


def write_verdicts(path: PathLike, verdicts: Iterable[Verdict]) -> None:
    write_jsonl(path, (verdict_to_record(v) for v in sorted(verdicts, key=lambda v: v.key)))


def read_verdicts(path: PathLike) -> list[Verdict]:
    return [verdict_from_record(r) for r in read_jsonl(path)]


VP_COLUMNS = ("vp_id", "public_prefix", "asn", "country", "latitude", "longitude")


def vp_index_csv(vps: Iterable[VantagePoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(VP_COLUMNS)
    for vp in sorted(vps, key=lambda v: v.vp_id):
        w.writerow(
            [vp.vp_id, vp.public_prefix, vp.asn, vp.country]
            + ["" if x is None else repr(float(x)) for x in (vp.latitude, vp.longitude)]
        )
    return buf.getvalue()


def read_vp_index(path: PathLike) -> dict[str, VantagePoint]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            lat, lon = row.get("latitude") or None, row.get("longitude") or None
            vp = VantagePoint(
                row["vp_id"],
                row["public_prefix"],
                int(row["asn"]),
                row["country"],
                float(lat) if lat else None,
                float(lon) if lon else None,
            )
            out[vp.vp_id] = vp
    return out
