import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from snapverify import invariants  # noqa: E402

# every invariant set certified anywhere in the session, deduplicated
CERTIFIED = {}
# (number, title, outcome) per acceptance criterion, in run order
ACCEPTANCE = []


def _record(net, P, t_max, inv_set):
    key = (id(net), P, t_max, inv_set)
    CERTIFIED.setdefault(key, (net, P, t_max, inv_set))


def pytest_configure(config):
    invariants.on_certified.append(_record)


def pytest_collection_modifyitems(session, config, items):
    last = [it for it in items if it.get_closest_marker("run_last")]
    items[:] = [it for it in items if not it.get_closest_marker("run_last")] + last


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when != "call" and not (rep.when == "setup" and rep.outcome != "passed"):
        return
    number, title = marker.args
    if hasattr(rep, "wasxfail"):
        status = "FAIL (expected, see ledger)"
    else:
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
    line = f"criterion {number:>2}: {status:<28} {title}"
    ACCEPTANCE.append(line)
    # shown live under -s and always in the terminal summary
    print("\n" + line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture
def certified_sets():
    return list(CERTIFIED.values())
