import os

import pytest

os.environ.setdefault("GSHS_RISK_BACKEND", "auto")

_criteria: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        cid, title = marker.args
        entry = _criteria.setdefault(cid, {"title": title, "ok": True, "notes": []})
        if report.outcome != "passed":
            entry["ok"] = False
            msg = str(report.longrepr.reprcrash.message) if hasattr(report.longrepr, "reprcrash") else ""
            entry["notes"].append(f"{item.name}: {msg.splitlines()[0] if msg else report.outcome}")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_criteria, key=lambda c: (int("".join(ch for ch in c if ch.isdigit()) or 0), c)):
        e = _criteria[cid]
        line = f"{'PASS' if e['ok'] else 'FAIL'} criterion {cid}: {e['title']}"
        terminalreporter.write_line(line)
        for note in e["notes"]:
            terminalreporter.write_line(f"    {note}")
