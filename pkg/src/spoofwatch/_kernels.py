"""Hot numeric kernels: batched median/MAD, window-tolerance matching, covert-delay masks.

Every kernel has a pure-numpy implementation and, when numba is importable, an
``@njit`` twin. Set ``SPOOFWATCH_DISABLE_NUMBA=1`` to force the numpy path.
Both paths return bit-identical results; the tests hold them to that.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("SPOOFWATCH_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("numba disabled by SPOOFWATCH_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


# -- numpy implementations -------------------------------------------------


def _pick_median(sorted_rows: np.ndarray, counts: np.ndarray) -> np.ndarray:
    rows = np.arange(sorted_rows.shape[0])
    safe = np.maximum(counts, 1)
    lo = sorted_rows[rows, (safe - 1) // 2]
    hi = sorted_rows[rows, safe // 2]
    out = (lo + hi) / 2.0
    out[counts == 0] = np.nan
    return out


def segment_median_mad_numpy(values: np.ndarray, offsets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    values = np.asarray(values, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.int64)
    n_seg = offsets.shape[0] - 1
    if n_seg <= 0:
        return np.empty(0), np.empty(0)
    counts = np.diff(offsets)
    width = max(int(counts.max()), 1)
    padded = np.full((n_seg, width), np.inf)
    seg = np.repeat(np.arange(n_seg), counts)
    col = np.arange(values.shape[0]) - np.repeat(offsets[:-1], counts)
    padded[seg, col] = values
    padded.sort(axis=1)
    med = _pick_median(padded, counts)
    dev = np.full((n_seg, width), np.inf)
    dev[seg, col] = np.abs(values - med[seg])
    dev.sort(axis=1)
    mad = _pick_median(dev, counts)
    return med, mad


def match_within_numpy(query_ts: np.ndarray, log_ts: np.ndarray, tolerance: int) -> np.ndarray:
    query_ts = np.asarray(query_ts, dtype=np.int64)
    log_ts = np.asarray(log_ts, dtype=np.int64)
    if log_ts.shape[0] == 0:
        return np.zeros(query_ts.shape[0], dtype=np.bool_)
    lo = np.searchsorted(log_ts, query_ts - tolerance, side="left")
    hit = lo < log_ts.shape[0]
    out = np.zeros(query_ts.shape[0], dtype=np.bool_)
    out[hit] = log_ts[lo[hit]] <= query_ts[hit] + tolerance
    return out


def covert_mask_numpy(median_dns, median_ping, mad_dns, mad_ping, rel_factor, mad_factor, floor_ms):
    median_dns = np.asarray(median_dns, dtype=np.float64)
    median_ping = np.asarray(median_ping, dtype=np.float64)
    delta = np.abs(median_dns - median_ping)
    return (
        (delta > rel_factor * np.minimum(median_dns, median_ping))
        & (delta > mad_factor * np.maximum(mad_dns, mad_ping))
        & (delta > floor_ms)
    )


# -- numba implementations -------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _sorted_median(buf, n):
        # insertion sort in place; segments hold at most a few dozen samples
        for i in range(1, n):
            x = buf[i]
            j = i - 1
            while j >= 0 and buf[j] > x:
                buf[j + 1] = buf[j]
                j -= 1
            buf[j + 1] = x
        return (buf[(n - 1) // 2] + buf[n // 2]) / 2.0

    @njit(cache=True)
    def segment_median_mad_numba(values, offsets):
        n_seg = offsets.shape[0] - 1
        med = np.empty(max(n_seg, 0))
        mad = np.empty(max(n_seg, 0))
        width = 0
        for i in range(n_seg):
            width = max(width, offsets[i + 1] - offsets[i])
        buf = np.empty(width)
        for i in range(n_seg):
            a = offsets[i]
            n = offsets[i + 1] - a
            if n == 0:
                med[i] = np.nan
                mad[i] = np.nan
                continue
            for k in range(n):
                buf[k] = values[a + k]
            m = _sorted_median(buf, n)
            for k in range(n):
                buf[k] = abs(values[a + k] - m)
            med[i] = m
            mad[i] = _sorted_median(buf, n)
        return med, mad

    @njit(cache=True)
    def match_within_numba(query_ts, log_ts, tolerance):
        out = np.zeros(query_ts.shape[0], dtype=np.bool_)
        n = log_ts.shape[0]
        for i in range(query_ts.shape[0]):
            lo = np.searchsorted(log_ts, query_ts[i] - tolerance)
            if lo < n and log_ts[lo] <= query_ts[i] + tolerance:
                out[i] = True
        return out

    @njit(cache=True)
    def covert_mask_numba(median_dns, median_ping, mad_dns, mad_ping, rel_factor, mad_factor, floor_ms):
        out = np.zeros(median_dns.shape[0], dtype=np.bool_)
        for i in range(median_dns.shape[0]):
            d = abs(median_dns[i] - median_ping[i])
            out[i] = (
                d > rel_factor * min(median_dns[i], median_ping[i])
                and d > mad_factor * max(mad_dns[i], mad_ping[i])
                and d > floor_ms
            )
        return out


IMPLEMENTATIONS = {
    "numpy": {
        "segment_median_mad": segment_median_mad_numpy,
        "match_within": match_within_numpy,
        "covert_mask": covert_mask_numpy,
    }
}
if HAVE_NUMBA:
    IMPLEMENTATIONS["numba"] = {
        "segment_median_mad": segment_median_mad_numba,
        "match_within": match_within_numba,
        "covert_mask": covert_mask_numba,
    }

BACKEND = "numba" if HAVE_NUMBA else "numpy"
_active = IMPLEMENTATIONS[BACKEND]


def segment_median_mad(values, offsets):
    """Median and unscaled MAD of each CSR segment ``values[offsets[i]:offsets[i+1]]``.

    Empty segments yield NaN.
    """
    return _active["segment_median_mad"](
        np.ascontiguousarray(values, dtype=np.float64), np.ascontiguousarray(offsets, dtype=np.int64)
    )


def match_within(query_ts, log_ts, tolerance):
    """For each query time, whether the sorted ``log_ts`` has an entry within ``±tolerance``."""
    return _active["match_within"](
        np.ascontiguousarray(query_ts, dtype=np.int64),
        np.ascontiguousarray(log_ts, dtype=np.int64),
        int(tolerance),
    )


def covert_mask(median_dns, median_ping, mad_dns, mad_ping, rel_factor=0.2, mad_factor=3.0, floor_ms=10.0):
    return _active["covert_mask"](
        np.ascontiguousarray(median_dns, dtype=np.float64),
        np.ascontiguousarray(median_ping, dtype=np.float64),
        np.ascontiguousarray(mad_dns, dtype=np.float64),
        np.ascontiguousarray(mad_ping, dtype=np.float64),
        float(rel_factor),
        float(mad_factor),
        float(floor_ms),
    )
