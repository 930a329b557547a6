import numpy as np
import pytest

from d2dcast.experiments import scenario_a, scenario_b
from d2dcast.topology import ClassModel

# 10**4.6 and 10**2.3: the 46 dB and 23 dB gains of the single-class scenario.
G01 = 39810.71705534969
G11 = 199.52623149688787


@pytest.fixture
def model_a():
    return scenario_a()


@pytest.fixture
def model_b():
    return scenario_b()


@pytest.fixture
def split_model():
    """Two isolated classes; each reachable only through itself."""
    g = np.array([[0.0, 100.0, 5.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    return ClassModel(alpha=[0.5, 0.5], g=g)


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for the acceptance summary."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
