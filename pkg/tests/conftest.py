import numpy as np
import pytest

from cubic_observer import PlantModel


def taylor_expm(M, terms=50):
    """Independent oracle: scale by 2^s until the norm is below 1/2, sum a Taylor series, square back."""
    M = np.asarray(M, dtype=float)
    norm = np.abs(M).sum(axis=1).max()
    s = max(0, int(np.ceil(np.log2(norm / 0.5)))) if norm > 0.5 else 0
    X = M / 2.0 ** s
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms + 1):
        term = term @ X / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def kron_lyap(G, Q):
    """Independent oracle: vec(G' P + P G) = (I kron G' + G' kron I) vec(P)."""
    n = G.shape[0]
    K = np.kron(np.eye(n), G.T) + np.kron(G.T, np.eye(n))
    return np.linalg.solve(K, -Q.reshape(-1, order="F")).reshape((n, n), order="F")


def random_stable_observable(rng, n, ny):
    """Random (A, C) with A Hurwitz (shifted spectrum) and the pair observable."""
    while True:
        A = rng.standard_normal((n, n))
        A -= (np.max(np.linalg.eigvals(A).real) + 0.5 + rng.random()) * np.eye(n)
        C = rng.standard_normal((ny, n))
        O = np.vstack([C @ np.linalg.matrix_power(A, k) for k in range(n)])
        if np.linalg.matrix_rank(O) == n and np.linalg.cond(O) < 1e6:
            return A, C


@pytest.fixture
def two_state():
    return PlantModel(A=[[0.0, 1.0], [-2.0, -3.0]], C=[[1.0, 0.0]])


ACCEPTANCE = {}


def record_acceptance(number, title, passed, evidence):
    ACCEPTANCE[number] = (title, passed, evidence)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, evidence = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {evidence}")
