"""Overt-spoofer detection from hostname.bind server IDs."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Any, Iterable, Optional

from .ingest.profiles import PatternProfile
from .model import Classification, HourlyWindow, Outcome, Verdict


@dataclass(frozen=True)
class OvertEvidence:
    observed_server_ids: tuple[str, ...]
    matched: tuple[bool, ...]
    first_unmatched: Optional[str] = None

    def __post_init__(self) -> None:
        if len(self.observed_server_ids) != len(self.matched):
            raise ValueError("one match flag per observed id")

    @property
    def unmatched(self) -> tuple[str, ...]:
        return tuple(s for s, ok in zip(self.observed_server_ids, self.matched) if not ok)

    @property
    def mixed(self) -> bool:
        return any(self.matched) and not all(self.matched)

    def as_dict(self) -> dict[str, Any]:
        unmatched = Counter(self.unmatched)
        return {
            "server_ids": dict(sorted(Counter(self.observed_server_ids).items())),
            "unmatched": dict(sorted(unmatched.items())),
            "n_matched": sum(self.matched),
            "n_unmatched": len(self.observed_server_ids) - sum(self.matched),
            "first_unmatched": self.first_unmatched,
            "mixed": self.mixed,
        }


def overt_evidence(window: HourlyWindow, profile: PatternProfile) -> OvertEvidence:
    ids = tuple(o.server_id for o in window.dns if o.outcome is Outcome.ANSWERED)
    matched = tuple(profile.matches(window.letter, s) for s in ids)
    first = next((s for s, ok in zip(ids, matched) if not ok), None)
    return OvertEvidence(ids, matched, first)


def classify_window(window: HourlyWindow, profile: PatternProfile) -> Verdict:
    """Classify one window as valid, overt_spoofed, timeout or insufficient.

    A single atypical server ID taints the whole window; ``evidence["mixed"]``
    records whether authentic answers were seen alongside it. Error outcomes
    count as neither answered nor timed out.
    """
    n_answered = n_timeout = n_error = 0
    for o in window.dns:
        if o.outcome is Outcome.ANSWERED:
            n_answered += 1
        elif o.outcome is Outcome.TIMEOUT:
            n_timeout += 1
        else:
            n_error += 1
    counts = {"n_answered": n_answered, "n_timeout": n_timeout, "n_error": n_error}

    if n_answered == 0:
        # errors are ignored, so timeouts plus errors still means "all timed out"
        cls = Classification.TIMEOUT if n_timeout else Classification.INSUFFICIENT
        return Verdict(window.vp_id, window.letter, window.window_start, cls, evidence=counts)

    ev = overt_evidence(window, profile)
    cls = Classification.VALID if ev.first_unmatched is None else Classification.OVERT_SPOOFED
    return Verdict(window.vp_id, window.letter, window.window_start, cls, evidence={**counts, "overt": ev.as_dict()})


def letters_spoofed_per_vp(verdicts: Iterable[Verdict]) -> int:
    """Number of letters seen overtly spoofed by one VP in one sampled hour."""
    verdicts = list(verdicts)
    if len({(v.vp_id, v.window_start) for v in verdicts}) > 1:
        raise ValueError("verdicts must share vp_id and window_start")
    return len({v.letter for v in verdicts if v.is_spoofed})
