import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria = {}


def pytest_runtest_makereport(item, call):
    # a criterion fails if any phase raises; it passes once its call phase succeeds
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "ok": None, "detail": []})
    if call.when == "call":
        entry["detail"] += [v for k, v in item.user_properties if k == "detail"]
    if call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception):
        entry["ok"] = False
    elif call.when == "call" and call.excinfo is None and entry["ok"] is None:
        entry["ok"] = True


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        status = {True: "PASS", False: "FAIL", None: "NOT RUN"}[e["ok"]]
        line = f"criterion {number:2d} {status:7s} {e['title']}"
        if e["detail"]:
            line += " [" + "; ".join(e["detail"]) + "]"
        tr.write_line(line)
