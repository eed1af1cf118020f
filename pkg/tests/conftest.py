from __future__ import annotations

import functools
from pathlib import Path

import pytest

from spoofwatch import model, pipeline, simulate
from spoofwatch.ingest import default_known_sites, default_profile
from spoofwatch.model import DnsObservation, HourlyWindow, Outcome, PingObservation, TracerouteObservation

FIXTURES = Path(__file__).parent / "fixtures"
HOUR = 1588500000

_criteria: list[str] = []


def record_criterion(number: int, name: str, ok: bool, detail: str = "") -> None:
    _criteria.append(f"criterion {number} {name}: {'PASS' if ok else 'FAIL'}{' - ' + detail if detail else ''}")


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for line in _criteria:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def profile():
    return default_profile()


@pytest.fixture(scope="session")
def known_sites():
    return default_known_sites()


def make_window(
    letter="B",
    dns=(),
    ping=(),
    traces=(),
    vp="vp1",
    start=HOUR,
    timeouts=0,
) -> HourlyWindow:
    """Build a window from (server_id, rtt) answers, ping rtts and hop lists."""
    obs_dns = [
        DnsObservation(vp, letter, start + 150 * k, Outcome.ANSWERED, sid, rtt) for k, (sid, rtt) in enumerate(dns)
    ]
    obs_dns += [DnsObservation(vp, letter, start + 150 * (len(dns) + k), Outcome.TIMEOUT) for k in range(timeouts)]
    obs_ping = [PingObservation(vp, letter, start + 150 * k, rtt) for k, rtt in enumerate(ping)]
    obs_tr = [
        TracerouteObservation(vp, letter, start + 1800 * k, tuple(enumerate(hops, 1)), reached)
        for k, (hops, reached) in enumerate(traces)
    ]
    return HourlyWindow(vp, letter, start, tuple(obs_dns), tuple(obs_ping), tuple(obs_tr))


@functools.lru_cache(maxsize=None)
def run_preset(name: str):
    """Generate a preset and run detection once per test session."""
    cfg = simulate.load_preset(name)
    scenario = simulate.generate(cfg)
    windows = model.build_windows(scenario.observations, cfg.schedule)
    verdicts = pipeline.detect(windows, default_profile(), known_sites=default_known_sites())
    return cfg, scenario, windows, verdicts
