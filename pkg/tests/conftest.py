import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_complex(rng, n, m=None):
    shape = (n, n) if m is None else (n, m)
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def random_metric(rng, n, spread=1.0):
    """Hermitian PD matrix with eigenvalues in [1, 1 + spread]."""
    q, _ = np.linalg.qr(random_complex(rng, n))
    lam = 1.0 + spread * rng.random(n)
    return (q * lam) @ q.conj().T


def random_hermitian(rng, n):
    a = random_complex(rng, n)
    return 0.5 * (a + a.conj().T)


def pt_symmetric(rng, w):
    """H with WH Hermitian, i.e. WH = H^dagger W."""
    k = random_hermitian(rng, w.shape[0])
    return np.linalg.solve(w, k)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, title, ok, detail, elapsed, limit):
        status = "PASS" if ok and elapsed < limit else "FAIL"
        line = f"[{status}] criterion {number:>2}: {title} | {detail} | {elapsed:.1f} s (limit {limit:g} s)"
        lines.append(line)
        print(line)
        return status == "PASS"

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
