import numpy as np
import pytest

from pupolicy.data import PUSplitSpec, gen_gaussians, prepare


def numeric_grad(f, params, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``params`` (mutated in place)."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = f()
            p[i] = old - h
            down = f()
            p[i] = old
            g[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def rel_error(a, b):
    a = np.concatenate([x.ravel() for x in a])
    b = np.concatenate([x.ravel() for x in b])
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / scale


@pytest.fixture(scope="session")
def gaussian_data():
    pool = gen_gaussians(600, d=4, separation=4.0, seed=11)
    test = gen_gaussians(300, d=4, separation=4.0, seed=12)
    return prepare(pool, test, PUSplitSpec(n_l=100, rho=0.3, seed=3))


# one PASS/FAIL line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
