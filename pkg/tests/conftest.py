import numpy as np
import pytest

ACCEPTANCE_RESULTS = []


def record_acceptance(name, passed, detail=""):
    line = f"ACCEPTANCE {name}: {'PASS' if passed else 'FAIL'}"
    if detail:
        line += f" ({detail})"
    ACCEPTANCE_RESULTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


def one_hot(labels, classes):
    labels = np.asarray(labels)
    t = np.zeros((labels.shape[0], classes))
    t[np.arange(labels.shape[0]), labels] = 1.0
    return t


def random_one_hot(rng, rows, classes):
    return one_hot(rng.integers(0, classes, rows), classes)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
