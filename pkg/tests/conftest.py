import numpy as np
import pytest

from tfcodec.model import init_weights


@pytest.fixture(scope="session")
def weights():
    return init_weights(seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def speech_like(seconds, seed=0, sr=24000):
    """Harmonic voiced segments with pitch glides, separated by noise bursts."""
    rng = np.random.default_rng(seed)
    n = int(seconds * sr)
    t = np.arange(n) / sr
    out = np.zeros(n)
    seg = int(0.25 * sr)
    for start in range(0, n, seg):
        stop = min(start + seg, n)
        tt = t[start:stop] - t[start]
        if rng.random() < 0.7:
            f0 = rng.uniform(90, 220) * (1 + 0.1 * np.sin(2 * np.pi * rng.uniform(2, 6) * tt))
            phase = 2 * np.pi * np.cumsum(f0) / sr
            voiced = sum(np.sin(h * phase) / h for h in range(1, 12))
            out[start:stop] = 0.2 * voiced * np.hanning(stop - start)
        else:
            out[start:stop] = 0.03 * rng.standard_normal(stop - start)
    return out


ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, title, detail = ACCEPTANCE_RESULTS[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {title}: {detail}")
