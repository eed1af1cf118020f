"""Server-ID pattern profiles and known-site lists (versioned YAML data files)."""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import yaml

from ..model import LETTERS


class ProfileError(ValueError):
    """A pattern profile or known-site list failed validation."""


def _load_yaml(source: Union[str, Path, bytes]) -> Any:
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ProfileError(f"not valid YAML: {exc}") from exc


def _missing_letters(present) -> list[str]:
    return [letter for letter in LETTERS if letter not in present]


@dataclass(frozen=True)
class PatternProfile:
    """Per-letter anchored patterns describing legitimate server IDs.

    A pattern may name a ``site`` group; its capture is used as the site label
    when checking for catchment changes.
    """

    version: str
    patterns: Mapping[str, tuple[re.Pattern, ...]]

    @classmethod
    def from_mapping(cls, version: str, raw: Mapping[str, list[str]]) -> "PatternProfile":
        missing = _missing_letters(raw)
        if missing:
            raise ProfileError(f"profile has no patterns for letter(s): {', '.join(missing)}")
        compiled = {}
        for letter in LETTERS:
            items = raw[letter]
            if not items:
                raise ProfileError(f"profile has no patterns for letter(s): {letter}")
            try:
                compiled[letter] = tuple(re.compile(p, re.IGNORECASE) for p in items)
            except re.error as exc:
                raise ProfileError(f"letter {letter}: pattern does not compile: {exc}") from exc
        return cls(str(version), compiled)

    def _match(self, letter: str, server_id: str) -> Optional[re.Match]:
        for pattern in self.patterns[letter]:
            m = pattern.fullmatch(server_id)
            if m is not None:
                return m
        return None

    def matches(self, letter: str, server_id: str) -> bool:
        return self._match(letter, server_id) is not None

    def site_of(self, letter: str, server_id: str) -> Optional[str]:
        """Site label for a legitimate id, or None if the id matches no pattern."""
        m = self._match(letter, server_id)
        if m is None:
            return None
        site = m.groupdict().get("site")
        return (site or server_id).lower()

    def with_pattern(self, letter: str, pattern: str) -> "PatternProfile":
        extended = dict(self.patterns)
        extended[letter] = (*extended[letter], re.compile(pattern, re.IGNORECASE))
        return PatternProfile(self.version, extended)


def load_pattern_profile(source: Union[str, Path, bytes]) -> PatternProfile:
    doc = _load_yaml(source)
    if not doc:
        raise ProfileError("pattern profile is empty")
    if not isinstance(doc, dict) or not isinstance(doc.get("letters"), dict):
        raise ProfileError("pattern profile needs a 'letters' mapping")
    raw = {str(k).upper(): list(v or []) for k, v in doc["letters"].items()}
    return PatternProfile.from_mapping(doc.get("version", "unversioned"), raw)


@dataclass(frozen=True)
class KnownSiteList:
    source_date: str
    sites: Mapping[str, frozenset[str]]
    penultimate_hops: Mapping[str, frozenset[str]]


def load_known_sites(source: Union[str, Path, bytes]) -> KnownSiteList:
    doc = _load_yaml(source)
    if not doc:
        raise ProfileError("known-site list is empty")
    if not isinstance(doc, dict) or not isinstance(doc.get("letters"), dict):
        raise ProfileError("known-site list needs a 'letters' mapping")
    letters = {str(k).upper(): (v or {}) for k, v in doc["letters"].items()}
    missing = _missing_letters(letters)
    if missing:
        raise ProfileError(f"known-site list has no entry for letter(s): {', '.join(missing)}")
    sites = {k: frozenset(str(s).lower() for s in letters[k].get("sites", ()) or ()) for k in LETTERS}
    hops = {k: frozenset(str(h) for h in letters[k].get("penultimate_hops", ()) or ()) for k in LETTERS}
    return KnownSiteList(str(doc.get("source_date", "")), sites, hops)


def _bundled(name: str) -> bytes:
    return resources.files("spoofwatch").joinpath("data", name).read_bytes()


def default_profile() -> PatternProfile:
    return load_pattern_profile(_bundled("server_id_profile.yaml"))


def default_known_sites() -> KnownSiteList:
    return load_known_sites(_bundled("known_sites.yaml"))
