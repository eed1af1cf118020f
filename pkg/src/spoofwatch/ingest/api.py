"""Client for a paged measurement-results API.

Each page is a JSON object ``{"results": [...], "count": n, "next": cursor}``;
the client walks ``next`` until it is null and re-emits results as
newline-delimited records the parsers accept.
"""

from __future__ import annotations

import json
import logging
import os
import time
from typing import Optional

import requests

log = logging.getLogger(__name__)

API_KEY_ENV = "SPOOFWATCH_API_KEY"
RETRY_STATUS = frozenset({429, 500, 502, 503, 504})


class FetchError(RuntimeError):
    """Fetching failed; ``cursor`` is where a retry can resume."""

    def __init__(self, message: str, cursor: Optional[str] = None):
        super().__init__(message)
        self.cursor = cursor


class TruncatedPageError(FetchError):
    pass


def _get_page(session, url, params, headers, timeout, max_retries, backoff, cursor):
    for attempt in range(max_retries + 1):
        try:
            resp = session.get(url, params=params, headers=headers, timeout=timeout)
        except requests.RequestException as exc:
            err: str = f"request failed: {exc}"
        else:
            if resp.status_code == 200:
                return resp
            if resp.status_code not in RETRY_STATUS:
                raise FetchError(f"HTTP {resp.status_code} from {url}", cursor)
            err = f"HTTP {resp.status_code} from {url}"
        if attempt == max_retries:
            raise FetchError(f"{err} (gave up after {max_retries + 1} attempts)", cursor)
        delay = backoff * 2**attempt
        log.warning("%s; retrying in %.2fs", err, delay)
        time.sleep(delay)
    raise AssertionError("unreachable")


def fetch_measurements(
    api_endpoint: str,
    measurement_id: int | str,
    time_range: tuple[int, int],
    *,
    cursor: Optional[str] = None,
    session: Optional[requests.Session] = None,
    max_retries: int = 4,
    backoff: float = 0.5,
    timeout: float = 30.0,
) -> bytes:
    start, stop = time_range
    if stop <= start:
        return b""
    session = session or requests.Session()
    url = f"{api_endpoint.rstrip('/')}/measurements/{measurement_id}/results/"
    headers = {}
    key = os.environ.get(API_KEY_ENV)
    if key:
        headers["Authorization"] = f"Key {key}"

    lines: list[str] = []
    while True:
        params = {"start": int(start), "stop": int(stop)}
        if cursor:
            params["cursor"] = cursor
        resp = _get_page(session, url, params, headers, timeout, max_retries, backoff, cursor)
        try:
            page = resp.json()
            results = page["results"]
            count = page["count"]
        except (ValueError, KeyError, TypeError) as exc:
            raise TruncatedPageError(f"malformed page at cursor {cursor!r}: {exc}", cursor) from exc
        if not isinstance(results, list) or len(results) != count:
            raise TruncatedPageError(
                f"page at cursor {cursor!r} declares {count} results but holds {len(results)}", cursor
            )
        lines.extend(json.dumps(r, sort_keys=True, separators=(",", ":")) for r in results)
        cursor = page.get("next")
        if not cursor:
            break
    return "".join(line + "\n" for line in lines).encode()
