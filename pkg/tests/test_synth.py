import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import find_peaks

from mmr.errors import ConfigError
from mmr.synth import CohortSpec, SynthConfig, generate_cohort, generate_segment


def clean_cfg(**kw):
    base = dict(noise_std=0.0, wander_amp=0.0, dicrotic_amp=0.0,
                n_harmonics=1, hr_bpm=60.0, fs_hz=100.0, duration_s=10.0, seed=1)
    base.update(kw)
    return SynthConfig(**base)


def dominant_freq_hz(x, fs):
    # DFT magnitude argmax oracle, DC excluded
    spec = np.abs(np.fft.rfft(x))
    spec[0] = 0.0
    return np.fft.rfftfreq(len(x), d=1.0 / fs)[int(np.argmax(spec))]


def test_pure_single_harmonic_is_sinusoid():
    seg = generate_segment(clean_cfg())
    assert len(seg.samples) == 1000
    # a unit sinusoid: peak 1, RMS 1/sqrt(2) (up to spectral leakage ~0)
    assert np.max(np.abs(seg.samples)) == pytest.approx(1.0, abs=1e-3)
    assert np.std(seg.samples) == pytest.approx(1 / np.sqrt(2), abs=1e-3)
    assert dominant_freq_hz(seg.samples, 100.0) == pytest.approx(1.0, abs=0.05)


def test_determinism_same_seed_bitwise():
    a = generate_segment(clean_cfg(noise_std=0.1, seed=9), index=3)
    b = generate_segment(clean_cfg(noise_std=0.1, seed=9), index=3)
    assert np.array_equal(a.samples, b.samples)
    c = generate_segment(clean_cfg(noise_std=0.1, seed=10), index=3)
    assert not np.array_equal(a.samples, c.samples)


def test_dominant_bin_at_2hz_for_120bpm():
    seg = generate_segment(clean_cfg(hr_bpm=120.0))
    assert dominant_freq_hz(seg.samples, 100.0) == pytest.approx(2.0, abs=0.05)


def test_labels_attached():
    low = generate_segment(clean_cfg(hr_bpm=70.0))
    high = generate_segment(clean_cfg(hr_bpm=120.0))
    assert low.labels["class"] == 0.0 and low.labels["hr_bpm"] == 70.0
    assert high.labels["class"] == 1.0


def test_aliasing_precondition():
    with pytest.raises(ConfigError):
        generate_segment(clean_cfg(fs_hz=10.0, hr_bpm=120.0, n_harmonics=4))
    # dicrotic bump counts as a 2nd harmonic
    with pytest.raises(ConfigError):
        generate_segment(clean_cfg(fs_hz=11.0, hr_bpm=170.0, n_harmonics=1,
                                   dicrotic_amp=0.5))


def test_non_integer_sample_count_rejected():
    with pytest.raises(ConfigError):
        generate_segment(clean_cfg(duration_s=10.001))


def test_cohort_counts_and_user_ids():
    segs = generate_cohort(2, 3, CohortSpec(), seed=0)
    assert len(segs) == 6
    assert len({s.user_id for s in segs}) == 2
    assert len({s.segment_id for s in segs}) == 6


def test_cohort_hr_within_jitter_of_latent():
    spec = CohortSpec(hr_jitter_bpm=1.5)
    segs = generate_cohort(4, 5, spec, seed=3)
    for s in segs:
        assert abs(s.labels["hr_bpm"] - s.labels["hr_latent_bpm"]) <= 1.5 + 1e-9


def test_cohort_classes_separable_by_peak_intervals():
    # peak-detection oracle on clean signals: mean inter-peak interval
    spec = CohortSpec(base=SynthConfig(noise_std=0.0, wander_amp=0.0,
                                       dicrotic_amp=0.0, n_harmonics=1))
    segs = generate_cohort(8, 2, spec, seed=5)
    est, truth = [], []
    for s in segs:
        peaks, _ = find_peaks(s.samples, distance=int(0.25 * s.fs_hz))
        interval = np.mean(np.diff(peaks)) / s.fs_hz
        est.append(60.0 / interval)
        truth.append(s.labels["class"])
    est, truth = np.array(est), np.array(truth)
    thresh = 90.0
    assert np.array_equal(est > thresh, truth.astype(bool))


@settings(max_examples=20, deadline=None)
@given(st.floats(min_value=45.0, max_value=175.0),
       st.integers(min_value=0, max_value=10 ** 6))
def test_spectral_ground_truth_property(hr, seed):
    cfg = clean_cfg(hr_bpm=hr, n_harmonics=2, dicrotic_amp=0.0, seed=seed)
    seg = generate_segment(cfg)
    f0 = hr / 60.0
    freqs = np.fft.rfftfreq(len(seg.samples), d=0.01)
    power = np.abs(np.fft.rfft(seg.samples)) ** 2
    fund_band = np.abs(freqs - f0) < 0.15
    harmonic = (np.abs(freqs - f0) < 0.3) | (np.abs(freqs - 2 * f0) < 0.3)
    assert power[fund_band].max() > power[~harmonic][1:].max()
