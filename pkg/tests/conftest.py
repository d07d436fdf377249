from __future__ import annotations

import os

import pytest
from hypothesis import HealthCheck, settings

from clickipi.encode import encode_session
from clickipi.ingest import ClickEvent, VideoMeta, build_sessions

settings.register_profile("ci", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


def ev(t, kind, pos_to=None, pos_from=None, rate=1.0, student="s1", video="v1"):
    return ClickEvent(student, video, float(t), kind, pos_from, pos_to, rate)


def seek(t, frm, to, rate=1.0, **kw):
    return ev(t, "seek", to, frm, rate, **kw)


def one_session(events, length=1000.0, tol=1.0):
    meta = [VideoMeta(events[0].video_id, length, 1, 1)]
    sessions = build_sessions(events, meta, end_tolerance=tol)
    assert len(sessions) == 1
    return sessions[0]


def encode(events, length=1000.0, **kw):
    return encode_session(one_session(events, length), **kw)


@pytest.fixture
def meta3():
    return [VideoMeta("v1", 100.0, 1, 1), VideoMeta("v2", 100.0, 2, 2), VideoMeta("v3", 100.0, 3, 3)]


# one line per acceptance criterion, printed in the terminal summary
CRITERIA: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    CRITERIA[number] = (bool(ok), detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        ok, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
