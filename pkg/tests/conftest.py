import pytest

from switchcert import causal, switch


@pytest.fixture(scope="session")
def alice():
    return switch.build_instruments("Alice")


@pytest.fixture(scope="session")
def instruments():
    return tuple(switch.build_instruments(p) for p in ("Alice", "Bob", "Charlie"))


@pytest.fixture(scope="session")
def ideal():
    return switch.ideal_table()


@pytest.fixture(scope="session")
def ideal_solved(alice, ideal):
    """Robustness SDP on the ideal switch table, solved once per session."""
    problem = causal.build_primal(ideal, alice)
    result = causal.solve_primal(problem)
    alpha = causal.extract_inequality(problem, result.solution)
    cert = causal.extract_certificate(problem, result.solution, alpha)
    return problem, result, alpha, cert


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
