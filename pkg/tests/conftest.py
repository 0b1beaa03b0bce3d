import numpy as np
import pytest

from vowelhd.synth import gen_cohort

FS = 44100


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def sine(freq_hz, duration_ms, fs=FS, amp=1.0, phase=0.0):
    n = int(round(duration_ms * fs / 1000.0))
    t = np.arange(n) / fs
    return amp * np.sin(2 * np.pi * freq_hz * t + phase)


@pytest.fixture(scope="session")
def small_cohort(tmp_path_factory):
    """Two subjects per class, default deltas."""
    out = tmp_path_factory.mktemp("cohort")
    manifest, segments = gen_cohort(out, 2, seed=3)
    return out, manifest, segments


ACCEPTANCE: list[tuple[int, bool, str]] = []


def record(criterion: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE.append((criterion, bool(ok), detail))
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
