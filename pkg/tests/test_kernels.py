from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spoofwatch import _kernels
from spoofwatch.covert import mad, median

needs_numba = pytest.mark.skipif("numba" not in _kernels.IMPLEMENTATIONS, reason="numba unavailable")


def _csr(groups):
    offsets = np.zeros(len(groups) + 1, dtype=np.int64)
    np.cumsum([len(g) for g in groups], out=offsets[1:])
    values = np.array([x for g in groups for x in g], dtype=np.float64)
    return values, offsets


_groups = st.lists(st.lists(st.floats(0.001, 1000, allow_nan=False), max_size=25), max_size=15)


@settings(max_examples=100, deadline=None)
@given(_groups)
def test_segment_median_mad_against_reference(groups):
    values, offsets = _csr(groups)
    med, dev = _kernels.segment_median_mad_numpy(values, offsets)
    for g, m, d in zip(groups, med, dev):
        if g:
            assert m == median(g) and d == mad(g)
        else:
            assert np.isnan(m) and np.isnan(d)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 10_000), max_size=40), st.lists(st.integers(0, 10_000), max_size=40), st.integers(0, 500))
def test_match_within_against_brute_force(queries, log, tol):
    log = sorted(log)
    got = _kernels.match_within_numpy(np.array(queries, dtype=np.int64), np.array(log, dtype=np.int64), tol)
    want = [any(abs(q - t) <= tol for t in log) for q in queries]
    assert got.tolist() == want


@needs_numba
@settings(max_examples=100, deadline=None)
@given(_groups)
def test_numba_median_parity(groups):
    values, offsets = _csr(groups)
    a = _kernels.segment_median_mad_numpy(values, offsets)
    b = _kernels.IMPLEMENTATIONS["numba"]["segment_median_mad"](values, offsets)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


@needs_numba
@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 10_000), max_size=40), st.lists(st.integers(0, 10_000), max_size=40), st.integers(0, 500))
def test_numba_match_parity(queries, log, tol):
    q = np.array(queries, dtype=np.int64)
    lg = np.array(sorted(log), dtype=np.int64)
    a = _kernels.match_within_numpy(q, lg, tol)
    b = _kernels.IMPLEMENTATIONS["numba"]["match_within"](q, lg, tol)
    assert a.tolist() == b.tolist()


@needs_numba
def test_numba_mask_parity():
    rng = np.random.default_rng(0)
    cols = [rng.uniform(1, 100, 5000), rng.uniform(1, 100, 5000), rng.uniform(0, 10, 5000), rng.uniform(0, 10, 5000)]
    cols[1][:50] = cols[0][:50] + 10  # exact floor boundary
    a = _kernels.covert_mask_numpy(*cols, 0.2, 3.0, 10.0)
    b = _kernels.IMPLEMENTATIONS["numba"]["covert_mask"](*cols, 0.2, 3.0, 10.0)
    assert a.tolist() == b.tolist()


def test_env_flag_forces_numpy():
    code = "from spoofwatch import _kernels; print(_kernels.BACKEND)"
    env = {**os.environ, "SPOOFWATCH_DISABLE_NUMBA": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
