import pytest

from cmsf.fixtures import make_fixtures


@pytest.fixture(scope="session")
def fixture_paths(tmp_path_factory):
    """Seed-0 fixture tree shared by pipeline, CLI, and acceptance tests."""
    return make_fixtures(tmp_path_factory.mktemp("fixture"), seed=0)


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            lines.append((name, "PASS" if outcome == "passed" else "FAIL"))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, status in sorted(lines):
            terminalreporter.write_line(f"{status}  {name}")
