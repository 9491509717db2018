import pytest

from hybrid_rc.barkley import BarkleyParams, default_initial_condition, simulate


@pytest.fixture(scope="session")
def small_params():
    return BarkleyParams(nx=12, ny=12)


@pytest.fixture(scope="session")
def small_truth(small_params):
    """600 frames of a 12 x 12 run after a 300-step transient."""
    p = small_params
    traj = simulate(p, default_initial_condition(p.nx, p.ny, 5), 300 + 599)
    return traj[300:]


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def report(request):
    """Record a one-line verdict for the acceptance summary and echo it."""

    def emit(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        request.config.acceptance_lines.append(line)
        print(line)
        return ok

    return emit
