import numpy as np
import pytest

from gridlink import _pykernels

try:
    from gridlink import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = [pytest.param(_pykernels, id="python")]
if _ckernels is not None:
    BACKENDS.append(pytest.param(_ckernels, id="cython"))

# criterion id -> (passed, detail); filled by test_acceptance, printed at the end of the run
ACCEPTANCE = {}


@pytest.fixture(params=BACKENDS)
def kern(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def prob_rows(rng, n, A, alpha=1.0):
    """Random posterior rows with a strict argmax."""
    while True:
        P = rng.dirichlet(np.full(A, alpha), n)
        s = np.sort(P, axis=1)
        if np.all(s[:, -1] - s[:, -2] > 1e-9):
            return P


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {key}: {detail}")
