import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def gauss_elim_solve(a, b):
    """Textbook partial-pivot Gaussian elimination, kept independent of the package."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    n = len(b)
    for k in range(n):
        piv = k + int(np.argmax(np.abs(a[k:, k])))
        a[[k, piv]] = a[[piv, k]]
        b[[k, piv]] = b[[piv, k]]
        for i in range(k + 1, n):
            f = a[i, k] / a[k, k]
            a[i, k:] -= f * a[k, k:]
            b[i] -= f * b[k]
    z = np.zeros(n)
    for i in range(n - 1, -1, -1):
        z[i] = (b[i] - a[i, i + 1:] @ z[i + 1:]) / a[i, i]
    return z


def sort_oracle_rows(x, r):
    """Per column, the r largest |x| rows by stable sort (ties to the smaller row), ascending."""
    x = np.asarray(x)
    out = []
    for j in range(x.shape[1]):
        order = sorted(range(x.shape[0]), key=lambda i: (-abs(x[i, j]), i))
        out.append(sorted(order[:r]))
    return np.array(out)


def masked_dense(x, rows):
    s = np.zeros_like(x)
    for j, rj in enumerate(rows):
        s[rj, j] = x[rj, j]
    return s


def adversarial_o1(x, y, part, n_blocks, rng):
    """Overwrite one row in each of the first ``n_blocks`` blocks with an O1-style outlier."""
    xv = np.array(x, dtype=float)
    y = np.array(y, dtype=float)
    p = xv.shape[1]
    for l in range(n_blocks):
        i = part.blocks[l][0]
        xv[i] = -10.0 + rng.standard_normal(p)
        y[i] = 1000.0 + 10.0 * rng.standard_normal()
    return xv, y


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[num])
