"""spoofwatch command line: ingest, detect, validate, report, simulate, score.

Exit codes: 0 success, 2 configuration or usage error, 3 input parse
failure, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from collections import Counter
from pathlib import Path
from typing import Any, Iterable, Optional

from . import __version__, _kernels, aggregate, identity, pipeline, simulate, validate
from .covert import CovertThresholds
from .ingest import (
    FetchError,
    ProfileError,
    default_known_sites,
    default_profile,
    fetch_measurements,
    load_known_sites,
    load_pattern_profile,
    parse_any,
    serialize,
)
from .io import (
    read_jsonl,
    read_verdicts,
    read_vp_index,
    vp_index_csv,
    write_bytes,
    write_json,
    write_jsonl,
    write_text,
    write_verdicts,
)
from .model import (
    DnsObservation,
    PingObservation,
    ScheduleConflictError,
    TracerouteObservation,
    WINDOW_SECONDS,
    build_windows,
)

log = logging.getLogger("spoofwatch")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_INVARIANT = 4


class ConfigError(Exception):
    pass


class InputParseError(Exception):
    pass


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _existing(path: Optional[str], what: str) -> Optional[Path]:
    if path is None:
        return None
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} not found: {path}")
    return p


def write_manifest(out_dir: Path, command: str, inputs: dict[str, Optional[Path]], params: dict, counts: dict) -> None:
    """Machine-readable record of a run; only ``created`` varies between identical runs."""
    manifest = {
        "command": command,
        "version": __version__,
        "kernel_backend": _kernels.BACKEND,
        "inputs": {k: {"path": str(p), "sha256": _sha256(p)} for k, p in sorted(inputs.items()) if p is not None},
        "parameters": params,
        "counts": counts,
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    write_json(out_dir / "manifest.json", manifest)


def _thresholds(args) -> CovertThresholds:
    try:
        return CovertThresholds(args.rel_factor, args.mad_factor, args.floor_ms, args.min_samples)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _threshold_params(args) -> dict[str, Any]:
    return {
        "rel_factor": args.rel_factor,
        "mad_factor": args.mad_factor,
        "floor_ms": args.floor_ms,
        "min_samples": args.min_samples,
    }


def _parse_file(path: Path, strict: bool):
    result = parse_any(path)
    rep = result.report
    if rep.n_lines and rep.n_parsed == 0:
        raise InputParseError(f"{path}: none of {rep.n_lines} lines parsed (first: {rep.skipped[0][1]})")
    if strict and rep.n_skipped:
        raise InputParseError(f"{path}: {rep.n_skipped} malformed lines (first at line {rep.skipped[0][0]})")
    for line, reason in rep.skipped[:5]:
        log.warning("%s:%d skipped: %s", path, line, reason)
    return result


def _split(observations) -> dict[str, list]:
    out = {"dns": [], "ping": [], "traceroute": []}
    for o in observations:
        if isinstance(o, DnsObservation):
            out["dns"].append(o)
        elif isinstance(o, PingObservation):
            out["ping"].append(o)
        elif isinstance(o, TracerouteObservation):
            out["traceroute"].append(o)
    for k in out:
        out[k].sort(key=lambda o: (o.vp_id, o.letter, o.sort_key()))
    return out


def cmd_ingest(args) -> int:
    out = Path(args.out)
    inputs = {f"input{i}": _existing(p, "input file") for i, p in enumerate(args.inputs)}
    if args.fetch:
        if not (args.api and args.measurement and args.start is not None and args.stop is not None):
            raise ConfigError("--fetch needs --api, --measurement, --start and --stop")
        try:
            raw = fetch_measurements(args.api, args.measurement, (args.start, args.stop))
        except FetchError as exc:
            raise InputParseError(f"fetch failed (resume cursor {exc.cursor!r}): {exc}") from None
        fetched = out / f"raw_{args.measurement}.jsonl"
        write_bytes(fetched, raw)
        inputs["fetched"] = fetched
    if not any(inputs.values()):
        raise ConfigError("nothing to ingest: pass input files or --fetch")
    observations, reports = [], {}
    for name, path in inputs.items():
        res = _parse_file(path, args.strict)
        observations.extend(res.observations)
        reports[str(path)] = res.report.as_dict()
    parts = _split(observations)
    for kind, obs in parts.items():
        write_bytes(out / f"{kind}.jsonl", serialize(obs))
    write_json(out / "ingest_report.json", reports)
    write_manifest(out, "ingest", inputs, {"strict": args.strict}, {k: len(v) for k, v in parts.items()})
    return EXIT_OK


def _load_observations(input_dir: Path, strict: bool) -> tuple[list, dict[str, Path]]:
    observations, inputs = [], {}
    for kind in ("dns", "ping", "traceroute"):
        for suffix in (".jsonl", ".jsonl.gz"):
            p = input_dir / f"{kind}{suffix}"
            if p.exists():
                observations.extend(_parse_file(p, strict).observations)
                inputs[kind] = p
                break
    if "dns" not in inputs:
        raise ConfigError(f"no dns.jsonl in {input_dir}")
    return observations, inputs


def _load_schedule(path: Optional[Path], observations: Iterable) -> list[int]:
    if path is not None:
        try:
            sched = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InputParseError(f"{path}: {exc}") from None
        if not isinstance(sched, list) or not all(isinstance(x, int) for x in sched):
            raise ConfigError("schedule file must be a JSON list of integer hour starts")
        return sched
    # no schedule: every clock hour holding a DNS observation
    return sorted({o.timestamp - o.timestamp % WINDOW_SECONDS for o in observations if isinstance(o, DnsObservation)})


def cmd_detect(args) -> int:
    thresholds = _thresholds(args)
    in_dir = _existing(args.input, "input directory")
    sched_path = _existing(args.schedule, "schedule file")
    profile_path = _existing(args.profile, "pattern profile")
    sites_path = _existing(args.known_sites, "known-site list")
    cmap_path = _existing(args.company_map, "company map")
    rdns_path = _existing(args.reverse_dns, "reverse-DNS map")
    vps_path = _existing(args.vps, "VP metadata")
    try:
        profile = load_pattern_profile(profile_path) if profile_path else default_profile()
        known = load_known_sites(sites_path) if sites_path else default_known_sites()
    except ProfileError as exc:
        raise ConfigError(str(exc)) from None

    observations, inputs = _load_observations(in_dir, args.strict)
    windows = build_windows(observations, _load_schedule(sched_path, observations))
    verdicts = pipeline.detect(windows, profile, thresholds, known, workers=args.workers)

    vp_index = read_vp_index(vps_path) if vps_path else {}
    cmap = identity.load_company_map(cmap_path)
    rdns = identity.load_reverse_dns(rdns_path) if rdns_path else None
    clusters = identity.cluster_spoofers([v for v in verdicts if v.is_spoofed], rdns, cmap, vp_index)
    verdicts = pipeline.assign_clusters(verdicts, clusters)

    out = Path(args.out)
    write_verdicts(out / "verdicts.jsonl", verdicts)
    write_json(
        out / "clusters.json",
        {"clusters": [c.as_dict() for c in clusters], "category_counts": identity.category_counts(clusters)},
    )
    counts = pipeline.classification_counts(verdicts)
    write_json(out / "detect_summary.json", {"classifications": counts, "covert": pipeline.covert_corroboration(verdicts)})
    inputs.update(schedule=sched_path, profile=profile_path, known_sites=sites_path, company_map=cmap_path,
                  reverse_dns=rdns_path, vps=vps_path)
    params = {**_threshold_params(args), "workers": args.workers, "profile_version": profile.version}
    write_manifest(out, "detect", inputs, params, {"windows": len(windows), **counts, "clusters": len(clusters)})
    return EXIT_OK


def cmd_validate(args) -> int:
    in_dir = _existing(args.input, "input directory")
    verdict_path = _existing(args.verdicts, "verdict file")
    log_path = _existing(args.server_log, "server log")
    vps_path = _existing(args.vps, "VP metadata")
    sched_path = _existing(args.schedule, "schedule file")
    if args.tolerance <= 0:
        raise ConfigError("tolerance must be positive")
    observations, inputs = _load_observations(in_dir, args.strict)
    windows = [
        w for w in build_windows(observations, _load_schedule(sched_path, observations)) if w.letter == args.letter
    ]
    records, rep = validate.parse_server_log(log_path)
    if rep.n_lines and not records:
        raise InputParseError(f"{log_path}: no parsable log records")
    verdicts = read_verdicts(verdict_path)
    matches = validate.match_queries(windows, records, read_vp_index(vps_path), tolerance=args.tolerance)
    refined = validate.refine_verdicts(verdicts, matches)
    tp = validate.true_positive_rates(matches, verdicts)
    covert = validate.confirm_covert_delayers(refined, matches)
    report = {
        "letter": args.letter,
        "tolerance": args.tolerance,
        "true_positive": tp,
        "upper_bound_false_positive": validate.upper_bound_false_positive(matches, verdicts),
        "covert_delayers": covert,
        "mechanisms": dict(
            sorted(
                Counter(v.mechanism.value for v in refined if v.is_spoofed and v.letter == args.letter).items()
            )
        ),
        "log_skipped": rep.as_dict(),
    }
    out = Path(args.out)
    write_json(out / "validation.json", report)
    write_text(out / "validation.txt", validate.render_tables(tp, covert))
    write_verdicts(out / "verdicts_refined.jsonl", refined)
    inputs.update(verdicts=verdict_path, server_log=log_path, vps=vps_path, schedule=sched_path)
    write_manifest(out, "validate", inputs, {"letter": args.letter, "tolerance": args.tolerance},
                   {"windows": len(windows), "matched": sum(m.matched for m in matches)})
    return EXIT_OK


def cmd_report(args) -> int:
    verdict_path = _existing(args.verdicts, "verdict file")
    vps_path = _existing(args.vps, "VP metadata")
    if args.min_country_vps < 1 or args.cohort_size < 1:
        raise ConfigError("--min-country-vps and --cohort-size must be positive")
    verdicts = read_verdicts(verdict_path)
    vp_index = read_vp_index(vps_path) if vps_path else {}
    epochs = aggregate.group_epochs(verdicts)
    summaries = [aggregate.epoch_summary(vs) for vs in epochs.values()]
    cohort = aggregate.select_cohort(epochs, args.cohort_size)
    report = {
        "epochs": [s.as_dict() for s in summaries],
        "trend": aggregate.trend(epochs),
        "cohort": {"size": len(cohort), "trend": aggregate.cohort_trend(epochs, cohort) if cohort else []},
        "countries": {str(k): aggregate.country_fractions(vs, vp_index, args.min_country_vps) for k, vs in epochs.items()},
        "letter_count_cdf": {str(k): aggregate.letter_count_cdf(vs) for k, vs in epochs.items()},
        "mechanism_trend": aggregate.mechanism_trend(epochs),
        "latency_improvement": aggregate.latency_improvement(verdicts),
    }
    out = Path(args.out)
    write_json(out / "summary.json", report)
    write_text(out / "summary.csv", aggregate.to_csv([s.as_dict() for s in summaries], aggregate.SUMMARY_COLUMNS))
    write_text(out / "trend.csv", aggregate.to_csv(report["trend"], aggregate.TREND_COLUMNS))
    write_text(out / "cohort_trend.csv", aggregate.to_csv(report["cohort"]["trend"], aggregate.TREND_COLUMNS))
    write_text(out / "mechanism.csv", aggregate.to_csv(report["mechanism_trend"], aggregate.MECHANISM_COLUMNS))
    country_rows = [
        {"window_start": k, **row} for k, rep in report["countries"].items() for row in aggregate.country_rows(rep)
    ]
    write_text(out / "countries.csv", aggregate.to_csv(country_rows, ("window_start",) + aggregate.COUNTRY_COLUMNS))
    write_manifest(out, "report", {"verdicts": verdict_path, "vps": vps_path},
                   {"min_country_vps": args.min_country_vps, "cohort_size": args.cohort_size},
                   {"epochs": len(summaries), "verdicts": len(verdicts)})
    return EXIT_OK


def cmd_simulate(args) -> int:
    if (args.preset is None) == (args.config is None):
        raise ConfigError("pass exactly one of --preset or --config")
    cfg_path = _existing(args.config, "scenario config")
    try:
        cfg = simulate.load_config(cfg_path) if cfg_path else simulate.load_preset(args.preset)
    except FileNotFoundError:
        raise ConfigError(f"unknown preset {args.preset!r}; available: {', '.join(simulate.preset_names())}") from None
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    scenario = simulate.generate(cfg)
    out = Path(args.out)
    parts = _split(scenario.observations)
    for kind, obs in parts.items():
        write_bytes(out / f"{kind}.jsonl", serialize(obs))
    write_bytes(out / "server_log.jsonl", validate.serialize_server_log(scenario.server_logs))
    write_jsonl(out / "truth.jsonl", (t.to_record() for t in scenario.truth))
    write_text(out / "vps.csv", vp_index_csv(scenario.vantage_points))
    write_json(out / "schedule.json", list(scenario.schedule))
    write_manifest(out, "simulate", {"config": cfg_path}, {"preset": args.preset, "seed": cfg.seed},
                   {"vps": cfg.n_vps, **{k: len(v) for k, v in parts.items()}, "server_log": len(scenario.server_logs)})
    return EXIT_OK


def cmd_score(args) -> int:
    verdict_path = _existing(args.verdicts, "verdict file")
    truth_path = _existing(args.truth, "truth file")
    truth = [simulate.TruthLabel.from_record(r) for r in read_jsonl(truth_path)]
    result = simulate.score(read_verdicts(verdict_path), truth)
    out = Path(args.out)
    write_json(out / "score.json", result)
    write_manifest(out, "score", {"verdicts": verdict_path, "truth": truth_path}, {}, {"windows": result["n_windows"]})
    return EXIT_OK


def _add_thresholds(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("covert-delay thresholds")
    g.add_argument("--rel-factor", type=float, default=0.2, help="delta must exceed this times the smaller median")
    g.add_argument("--mad-factor", type=float, default=3.0, help="delta must exceed this times the larger MAD")
    g.add_argument("--floor-ms", type=float, default=10.0, help="delta must exceed this many ms")
    g.add_argument("--min-samples", type=int, default=5, help="minimum RTT samples per side")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spoofwatch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("ingest", help="normalize raw result files into canonical JSONL")
    p.add_argument("inputs", nargs="*", help="raw or canonical result files (.jsonl, .json, .gz)")
    p.add_argument("--out", required=True)
    p.add_argument("--strict", action="store_true", help="fail on any malformed line")
    p.add_argument("--fetch", action="store_true", help="download results from the measurement API first")
    p.add_argument("--api", help="API base URL; key read from $SPOOFWATCH_API_KEY")
    p.add_argument("--measurement")
    p.add_argument("--start", type=int)
    p.add_argument("--stop", type=int)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("detect", help="classify hourly windows and cluster spoofers")
    p.add_argument("--input", required=True, help="directory with dns/ping/traceroute JSONL")
    p.add_argument("--out", required=True)
    p.add_argument("--schedule", help="JSON list of sampled hour starts (default: every hour with data)")
    p.add_argument("--profile", help="server-id pattern profile (default: bundled)")
    p.add_argument("--known-sites", help="known-site list (default: bundled)")
    p.add_argument("--company-map", help="company map CSV (default: bundled)")
    p.add_argument("--reverse-dns", help="address,hostname CSV")
    p.add_argument("--vps", help="VP metadata CSV")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--strict", action="store_true")
    _add_thresholds(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("validate", help="match client queries against a server log")
    p.add_argument("--input", required=True)
    p.add_argument("--verdicts", required=True)
    p.add_argument("--server-log", required=True)
    p.add_argument("--vps", required=True)
    p.add_argument("--letter", default="B")
    p.add_argument("--tolerance", type=int, default=validate.DEFAULT_TOLERANCE, help="seconds (default 240)")
    p.add_argument("--schedule")
    p.add_argument("--out", required=True)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="population summaries, trends and CDFs")
    p.add_argument("--verdicts", required=True)
    p.add_argument("--vps")
    p.add_argument("--min-country-vps", type=int, default=10)
    p.add_argument("--cohort-size", type=int, default=3000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("simulate", help="generate a labeled synthetic campaign")
    p.add_argument("--preset", help=f"one of: {', '.join(simulate.preset_names())}")
    p.add_argument("--config", help="scenario YAML file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("score", help="compare verdicts with simulator ground truth")
    p.add_argument("--verdicts", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "workers", 1) < 1:
        parser.error("--workers must be at least 1")
    try:
        return args.func(args)
    except (ConfigError, ProfileError, simulate.SimulationConfigError, ScheduleConflictError) as exc:
        print(f"spoofwatch: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputParseError, validate.UnsortedLogError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        print(f"spoofwatch: input error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except AssertionError as exc:
        print(f"spoofwatch: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
