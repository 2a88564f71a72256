import shutil

import pytest

HAS_GCC = shutil.which("gcc") is not None

# filled by test_acceptance, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def tiny_synth():
    from vulcausal.synth import SynthSpec, gen_synthetic
    return gen_synthetic(SynthSpec(n_train=120, n_test=40, n_valid=30, rho=0.9, seed=3))
