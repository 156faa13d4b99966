import numpy as np
import pytest

from seqmix.generators import true_cdf


def naive_sequential(data, spec, centering, s_points, u_points):
    """Direct double loop over grid cells and observations."""
    n, d = data.shape
    mesh = np.stack(np.meshgrid(*u_points, indexing="ij"), axis=-1).reshape(-1, d)
    out = np.zeros((len(s_points), mesh.shape[0]))
    for q, u in enumerate(mesh):
        ind = np.all(data <= u, axis=1).astype(float)
        c = ind.mean() if centering == "empirical" else true_cdf(spec, u)
        running = [0.0]
        for i in range(n):
            running.append(running[-1] + ind[i] - c)
        for a, s in enumerate(s_points):
            k = int(np.floor(round(s * n, 9)))
            out[a, q] = running[k] / np.sqrt(n)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record_criterion(label: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
