"""Registrable-domain extraction from a public-suffix rule file."""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Union


class PublicSuffixList:
    def __init__(self, rules: Iterable[str]):
        self.exact: set[str] = set()
        self.wildcard: set[str] = set()
        self.exception: set[str] = set()
        for raw in rules:
            rule = raw.strip().lower()
            if not rule or rule.startswith("//"):
                continue
            rule = rule.split()[0]
            if rule.startswith("!"):
                self.exception.add(rule[1:])
            elif rule.startswith("*."):
                self.wildcard.add(rule[2:])
            else:
                self.exact.add(rule)

    @classmethod
    def load(cls, source: Union[str, Path, None] = None) -> "PublicSuffixList":
        if source is None:
            text = resources.files("spoofwatch").joinpath("data", "public_suffix.dat").read_text(encoding="utf-8")
        else:
            text = Path(source).read_text(encoding="utf-8")
        return cls(text.splitlines())

    def public_suffix(self, name: str) -> Optional[str]:
        """Longest listed suffix of ``name``; None when no rule applies.

        Unlike browsers, there is no implicit ``*`` rule: an unlisted TLD means
        the name is not treated as a DNS name at all.
        """
        labels = name.lower().rstrip(".").split(".")
        best: Optional[str] = None
        for i in range(len(labels)):
            cand = ".".join(labels[i:])
            if cand in self.exception:
                return ".".join(labels[i + 1 :])
            parent = ".".join(labels[i + 1 :])
            if cand in self.exact or (parent and parent in self.wildcard):
                best = cand
                break
        return best

    def registrable_domain(self, name: str) -> Optional[str]:
        labels = name.lower().rstrip(".").split(".")
        if len(labels) < 2 or any(not label for label in labels):
            return None
        suffix = self.public_suffix(name)
        if suffix is None:
            return None
        n = suffix.count(".") + 1
        if len(labels) <= n:
            return None
        return ".".join(labels[-(n + 1) :])
