import hashlib

import numpy as np
import pytest

from vowelhd.dataset import load_annotations, load_manifest
from vowelhd.emd import decompose
from vowelhd.errors import GeneratorError
from vowelhd.features import extract_vowel_features
from vowelhd.fluctuation import Detrend, fluctuation_curve, log_spaced_windows
from vowelhd.synth import (AmHarmonicSpec, CohortDeltas, fgn_autocovariance, gen_am_harmonic, gen_cohort,
                           gen_colored_noise, gen_fgn, gen_fgn_any)
from vowelhd.trends import additive_trend, multiplicative_trend


def test_fgn_white_at_half():
    x = gen_fgn(0.5, 2 ** 14, seed=1)
    r1 = np.corrcoef(x[:-1], x[1:])[0, 1]
    assert abs(r1) < 0.05


def test_fgn_lag_one_covariance_monte_carlo():
    h = 0.8
    expected = fgn_autocovariance(h, 2)[1]
    assert expected == pytest.approx(2 ** (2 * h - 1) - 1)
    est = np.mean([np.mean(x[:-1] * x[1:]) for x in (gen_fgn(h, 2 ** 12, s) for s in range(40))])
    assert est == pytest.approx(expected, abs=0.03)


def test_fgn_recovered_by_window_mean():
    w = log_spaced_windows(2, 10, 44100)
    assert fluctuation_curve(gen_fgn(0.7, 2 ** 16, 9), w, Detrend.WINDOW_MEAN).slope == pytest.approx(0.7, abs=0.1)


def test_fgn_determinism_and_errors():
    np.testing.assert_array_equal(gen_fgn(0.3, 1024, 5), gen_fgn(0.3, 1024, 5))
    assert not np.array_equal(gen_fgn(0.3, 1024, 5), gen_fgn(0.3, 1024, 6))
    for h, n in ((0.0, 1024), (1.0, 1024), (0.5, 1000), (0.5, 512)):
        with pytest.raises(GeneratorError):
            gen_fgn(h, n, 0)
    assert gen_fgn_any(0.6, 3000, 0).size == 3000


def test_colored_noise_slope():
    x = gen_colored_noise(1.0, 2 ** 14, seed=2)
    assert x.std() == pytest.approx(1.0)
    f = np.fft.rfftfreq(x.size)[1:]
    p = np.abs(np.fft.rfft(x))[1:] ** 2
    slope = np.polyfit(np.log(f), np.log(p), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.15)


def test_am_harmonic_spec_checks():
    with pytest.raises(GeneratorError):
        AmHarmonicSpec(f0_hz=90)
    with pytest.raises(GeneratorError):
        AmHarmonicSpec(noise_h=1.0)
    clip = gen_am_harmonic(AmHarmonicSpec(duration_ms=105), 0)
    assert len(clip) == 4630 and clip.sample_rate_hz == 44100
    np.testing.assert_array_equal(clip.samples, gen_am_harmonic(AmHarmonicSpec(duration_ms=105), 0).samples)


@pytest.mark.parametrize("f0", [
    100.0, 160.0, 200.0,
    pytest.param(150.0, marks=pytest.mark.xfail(strict=True, reason="3.75 periods per 25 ms frame; "
                                                "frame RMS ripples by about 0.12 dB")),
    pytest.param(220.0, marks=pytest.mark.xfail(strict=True, reason="5.5 periods per 25 ms frame; "
                                                "frame RMS ripples by about 0.14 dB")),
])
def test_clean_harmonic_has_flat_trends(f0):
    sds, adds = [], []
    for seed in range(10):
        x = gen_am_harmonic(AmHarmonicSpec(f0_hz=f0), seed).samples
        sds.append(multiplicative_trend(x, 44100)[0].sd_db)
        adds.append(additive_trend(decompose(x)).sd / x.std())
    assert max(sds) < 0.1
    # an occasional end effect leaves a slow residual, so the typical case is checked
    assert np.median(adds) < 0.05


@pytest.mark.xfail(strict=True, reason="with the default cutoff of 5 the trend either misses the drift "
                                       "(no noise floor) or absorbs the fundamental's IMF (with noise)")
@pytest.mark.parametrize("a", [0.2, 0.5])
def test_harmonic_drift_recovery(a):
    for seed in range(5):
        x = gen_am_harmonic(AmHarmonicSpec(duration_ms=200, drift_amplitude=a, noise_level=0.1), seed).samples
        assert additive_trend(decompose(x)).sd == pytest.approx(a / np.sqrt(2), rel=0.2)


@pytest.mark.xfail(strict=True, reason="first-IMF Hurst slope sits near 0.46 regardless of the noise H; "
                                       "ordering holds in about half of the seeds")
def test_noise_h_ordering():
    ok = 0
    for seed in range(100):
        lo = extract_vowel_features(gen_am_harmonic(AmHarmonicSpec(noise_h=0.3, noise_level=0.3), seed))
        hi = extract_vowel_features(gen_am_harmonic(AmHarmonicSpec(noise_h=0.8, noise_level=0.3), seed))
        ok += lo.hurst_slope < hi.hurst_slope
    assert ok >= 90


def test_deltas_parse():
    assert CohortDeltas.parse("default") == CohortDeltas()
    assert CohortDeltas.parse("zero") == CohortDeltas.zero()
    d = CohortDeltas.parse("envelope_db=2, noise_h=-0.1")
    assert d.envelope_db == 2 and d.noise_h == -0.1 and d.gfpv_length_ms == CohortDeltas().gfpv_length_ms
    with pytest.raises(ValueError):
        CohortDeltas.parse("bogus=1")


def _tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_cohort_byte_identical_and_loadable(tmp_path):
    gen_cohort(tmp_path / "a", 2, seed=11)
    gen_cohort(tmp_path / "b", 2, seed=11)
    gen_cohort(tmp_path / "c", 2, seed=12)
    assert _tree_digest(tmp_path / "a") == _tree_digest(tmp_path / "b") != _tree_digest(tmp_path / "c")
    recs = load_manifest(tmp_path / "a" / "manifest.csv")
    anns = load_annotations(tmp_path / "a" / "segments.csv")
    assert [r.label.manifest for r in recs] == [0, 1, 0, 1]
    assert all(10 <= sum(a.subject_id == r.subject_id for a in anns) <= 12 for r in recs)
    with pytest.raises(ValueError):
        gen_cohort(tmp_path / "d", 0)
