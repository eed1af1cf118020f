"""End-to-end detection over hourly windows: overt, covert, then mechanism."""

from __future__ import annotations

import dataclasses
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Iterable, Mapping, Optional, Sequence

from .covert import (
    DEFAULT_THRESHOLDS,
    CovertThresholds,
    covert_flags,
    delay_direction,
    ping_rtts,
    site_filtered_rtts,
    spoofed_latency_stats,
    stats_from_sample_sets,
)
from .identity import SpooferCluster, cluster_index
from .ingest.profiles import KnownSiteList, PatternProfile
from .mechanism import build_penultimate_set, classify_mechanism
from .model import ROOT_LETTERS, Classification, HourlyWindow, ServiceLetter, Verdict
from .overt import classify_window


def _covert_pass(
    windows: Sequence[HourlyWindow],
    verdicts: list[Verdict],
    profile: PatternProfile,
    thresholds: CovertThresholds,
    letters: Mapping[str, ServiceLetter],
) -> list[Verdict]:
    idx, dns_sets, ping_sets, notes = [], [], [], {}
    for i, (w, v) in enumerate(zip(windows, verdicts)):
        if v.classification is not Classification.VALID:
            continue
        if not letters[w.letter].icmp_responsive:
            notes[i] = "no_icmp"
            continue
        dns = site_filtered_rtts(w, profile)
        if dns is None:
            notes[i] = "no_modal_site"
            continue
        idx.append(i)
        dns_sets.append(dns)
        ping_sets.append(ping_rtts(w))
    stats = stats_from_sample_sets(dns_sets, ping_sets, thresholds)
    flags = covert_flags(stats, thresholds)

    out = list(verdicts)
    for j, i in enumerate(idx):
        st = stats[j]
        if st is None:
            notes[i] = "too_few_samples"
            continue
        v = out[i]
        direction, diff = delay_direction(st)
        ev = {
            **v.evidence,
            "latency": st.as_dict(),
            "covert": {"evaluated": True, "delayed": flags[j], "direction": direction.value, "signed_difference": diff},
        }
        cls = Classification.COVERT_DELAYED if flags[j] else v.classification
        out[i] = dataclasses.replace(v, classification=cls, evidence=ev)
    for i, reason in notes.items():
        v = out[i]
        out[i] = dataclasses.replace(v, evidence={**v.evidence, "covert": {"evaluated": False, "reason": reason}})
    return out


def detect_epoch(
    windows: Sequence[HourlyWindow],
    profile: PatternProfile,
    thresholds: CovertThresholds = DEFAULT_THRESHOLDS,
    known_sites: Optional[KnownSiteList] = None,
    letters: Mapping[str, ServiceLetter] = ROOT_LETTERS,
) -> list[Verdict]:
    """Verdicts for the windows of one sampled hour, in input order."""
    verdicts = [classify_window(w, profile) for w in windows]
    verdicts = _covert_pass(windows, verdicts, profile, thresholds, letters)
    hopset = build_penultimate_set(verdicts, windows, letters, known_sites)
    out = []
    for w, v in zip(windows, verdicts):
        if v.is_spoofed:
            st = spoofed_latency_stats(w, profile, thresholds, letters)
            res = classify_mechanism(w, v, hopset, st, letters, thresholds)
            ev = {**v.evidence, "mechanism": res.as_dict(), "spoof_latency": st.as_dict() if st else None}
            v = dataclasses.replace(v, mechanism=res.mechanism, evidence=ev)
        out.append(v)
    return out


def _detect_epoch_args(args) -> list[Verdict]:
    return detect_epoch(*args)


def detect(
    windows: Iterable[HourlyWindow],
    profile: PatternProfile,
    thresholds: CovertThresholds = DEFAULT_THRESHOLDS,
    known_sites: Optional[KnownSiteList] = None,
    letters: Mapping[str, ServiceLetter] = ROOT_LETTERS,
    workers: int = 1,
) -> list[Verdict]:
    """Classify every window; output sorted by (vp_id, letter, window_start).

    Penultimate-hop sets are built per sampled hour. With ``workers > 1``
    hours are processed in separate processes; the result is identical.
    """
    epochs: dict[int, list[HourlyWindow]] = defaultdict(list)
    for w in windows:
        epochs[w.window_start].append(w)
    jobs = [(epochs[k], profile, thresholds, known_sites, letters) for k in sorted(epochs)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_detect_epoch_args, jobs))
    else:
        parts = [_detect_epoch_args(j) for j in jobs]
    return sorted((v for part in parts for v in part), key=lambda v: v.key)


def primary_spoof_id(v: Verdict) -> Optional[str]:
    """Most frequent atypical id of a spoofed verdict; ties go to the smallest string."""
    unmatched = v.evidence.get("overt", {}).get("unmatched", {})
    if not unmatched:
        return None
    return min(unmatched.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def assign_clusters(verdicts: Iterable[Verdict], clusters: Iterable[SpooferCluster]) -> list[Verdict]:
    index = cluster_index(clusters)
    out = []
    for v in verdicts:
        sid = primary_spoof_id(v) if v.is_spoofed else None
        if sid is not None and sid in index:
            v = dataclasses.replace(v, spoofer_cluster=index[sid])
        out.append(v)
    return out


def classification_counts(verdicts: Iterable[Verdict]) -> dict[str, int]:
    c = Counter(v.classification.value for v in verdicts)
    return {k.value: c.get(k.value, 0) for k in Classification}


def covert_corroboration(verdicts: Iterable[Verdict]) -> dict[str, Any]:
    """Share of covert-delayed VP-hours seen on two or more letters."""
    letters_by_vp: dict[tuple[str, int], set[str]] = defaultdict(set)
    for v in verdicts:
        if v.classification is Classification.COVERT_DELAYED:
            letters_by_vp[(v.vp_id, v.window_start)].add(v.letter)
    n = len(letters_by_vp)
    multi = sum(1 for s in letters_by_vp.values() if len(s) >= 2)
    return {"n_delayer_vp_hours": n, "n_multi_letter": multi, "fraction_multi_letter": multi / n if n else None}
