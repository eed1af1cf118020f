"""Detect third-party answers to anycast DNS queries from distributed vantage points."""

from __future__ import annotations

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from .model import Classification, HourlyWindow, Mechanism, VantagePoint, Verdict

__all__ = ["Classification", "HourlyWindow", "Mechanism", "VantagePoint", "Verdict", "__version__"]
