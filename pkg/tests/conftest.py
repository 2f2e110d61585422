from collections import deque

import numpy as np
import pytest


def random_unit(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def central_diff(f, x, step=1e-5):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(x)
        flat[i] = orig - step
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return g


def rel_err(a, b, floor=1e-8):
    a = np.ravel(a)
    b = np.ravel(b)
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor)


def bfs_components(edges):
    """Flood-fill labels of a boolean adjacency matrix, numbered by first vertex."""
    n = edges.shape[0]
    labels = -np.ones(n, dtype=np.int64)
    nxt = 0
    for start in range(n):
        if labels[start] >= 0:
            continue
        labels[start] = nxt
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for w in np.flatnonzero(edges[u]):
                if labels[w] < 0:
                    labels[w] = nxt
                    queue.append(w)
        nxt += 1
    return labels


def same_partition(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return np.array_equal(a[:, None] == a[None, :], b[:, None] == b[None, :])


def random_symmetric_graph(rng, n, p):
    upper = np.triu(rng.random((n, n)) < p, k=1)
    return upper | upper.T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_acceptance: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        detail = ""
        if report.failed and report.longrepr is not None:
            detail = str(getattr(report.longrepr, "reprcrash", None) and report.longrepr.reprcrash.message or "")
        _acceptance[name] = ("PASS" if report.passed else "FAIL", detail.splitlines()[0] if detail else "")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance):
        status, detail = _acceptance[name]
        line = f"{status}  {name}"
        if detail:
            line += f"  ({detail[:120]})"
        terminalreporter.write_line(line)
