import numpy as np
import pytest

from rabicorr.operators import SpaceDims


def dense_ladder(n_max):
    """Independent dense construction of a (x) I2, sigma, sigma+ (photon-major)."""
    a = np.zeros((n_max + 1, n_max + 1))
    for k in range(1, n_max + 1):
        a[k - 1, k] = np.sqrt(k)
    s = np.array([[0.0, 1.0], [0.0, 0.0]])
    return np.kron(a, np.eye(2)), np.kron(np.eye(n_max + 1), s)


def random_density(dim, rng):
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = m @ m.conj().T
    return rho / np.trace(rho)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_dims():
    return SpaceDims(4)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance(capsys):
    """Record and print one PASS/FAIL line per acceptance criterion."""

    def report(criterion: int, title: str, passed: bool, detail: str) -> bool:
        line = f"criterion {criterion:2d} {'PASS' if passed else 'FAIL'}: {title} | {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
