import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmr import preprocess as pp
from mmr.errors import ConfigError, DegenerateSegment, ShapeError
from mmr.synth import Segment, SynthConfig, generate_segment

FS = 100.0


def test_dc_input_blocked():
    y = pp.bandpass_zero_phase(np.full(1000, 7.3), FS)
    core = y[100:-100]  # outside the edge transient window
    assert np.max(np.abs(core)) < 1e-6


def test_passband_tone_preserved_zero_phase():
    # sinusoid-fit oracle on the central window
    t = np.arange(2000) / FS
    x = np.sin(2 * np.pi * 5.0 * t)
    y = pp.bandpass_zero_phase(x, FS)
    mid = slice(500, 1500)
    basis = np.stack([np.sin(2 * np.pi * 5.0 * t[mid]),
                      np.cos(2 * np.pi * 5.0 * t[mid])], axis=1)
    coef, *_ = np.linalg.lstsq(basis, y[mid], rcond=None)
    amp = np.hypot(*coef)
    phase = np.arctan2(coef[1], coef[0])
    # two passes of a 0.5 dB-ripple design: gain in [10^-0.05, 1]
    assert 10 ** (-0.05) - 1e-3 <= amp <= 1.0 + 1e-3
    assert abs(phase) < 1e-3


def test_stopband_tone_attenuated_20db():
    oracle_db = pp.bandpass_gain_db(25.0, FS, pp.BandpassSpec(), passes=2)
    assert oracle_db <= -20.0
    t = np.arange(4000) / FS
    y = pp.bandpass_zero_phase(np.sin(2 * np.pi * 25.0 * t), FS)
    measured_db = 20 * np.log10(np.sqrt(np.mean(y[500:-500] ** 2)) /
                                np.sqrt(0.5) + 1e-300)
    assert measured_db <= -20.0


def test_zero_phase_symmetry_property():
    rng = np.random.default_rng(2)
    half = rng.standard_normal(500)
    x = np.concatenate([half, half[::-1]])
    y = pp.bandpass_zero_phase(x, FS)
    assert np.max(np.abs(y - y[::-1])) < 1e-6


def test_bandpass_config_errors():
    with pytest.raises(ConfigError):
        pp.bandpass_zero_phase(np.zeros(100), FS, pp.BandpassSpec(high_hz=60.0))
    with pytest.raises(ConfigError):
        pp.bandpass_zero_phase(np.zeros(100), FS, pp.BandpassSpec(order=3))
    with pytest.raises(ShapeError):
        pp.bandpass_zero_phase(np.zeros(10), FS)


def test_resample_identity_ratio():
    x = np.sin(np.arange(400) * 0.07)
    y = pp.resample_polyphase(x, 100.0, 100.0)
    assert np.array_equal(x, y)


def test_resample_length_arithmetic():
    assert len(pp.resample_polyphase(np.zeros(250), 25.0, 100.0)) == 1000
    assert len(pp.resample_polyphase(np.zeros(1000), 100.0, 25.0)) == 250


def test_resample_sinusoid_against_analytic_resynthesis():
    t_in = np.arange(250) / 25.0
    y = pp.resample_polyphase(np.sin(2 * np.pi * 1.0 * t_in), 25.0, 100.0)
    ideal = np.sin(2 * np.pi * 1.0 * np.arange(1000) / 100.0)
    core = slice(50, -50)
    corr = np.corrcoef(y[core], ideal[core])[0, 1]
    assert corr > 0.999
    # in-band energy preserved within 1%
    assert np.dot(y[core], y[core]) / len(y[core]) == pytest.approx(
        np.dot(ideal[core], ideal[core]) / len(ideal[core]), rel=0.01)


def test_resample_ratio_guard():
    with pytest.raises(ConfigError):
        pp.resample_polyphase(np.zeros(100), 999.0, 1001.0)
    with pytest.raises(ConfigError):
        pp.resample_polyphase(np.zeros(100), -5.0, 100.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(min_value=-3, max_value=3), st.floats(min_value=-3, max_value=3),
       st.integers(min_value=0, max_value=10 ** 6))
def test_resampler_linearity_property(a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, 200))
    lhs = pp.resample_polyphase(a * x + b * y, 25.0, 100.0)
    rhs = a * pp.resample_polyphase(x, 25.0, 100.0) + \
        b * pp.resample_polyphase(y, 25.0, 100.0)
    assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_zscore_definition():
    z = pp.zscore([1.0, 2.0, 3.0])
    root = np.sqrt(1.5)
    assert np.allclose(z, [-root, 0.0, root], atol=1e-12)
    assert abs(z.mean()) < 1e-9
    assert abs(np.std(z) - 1.0) < 1e-9


def test_zscore_idempotent():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(300) * 5 + 2
    z = pp.zscore(x)
    assert np.max(np.abs(pp.zscore(z) - z)) < 1e-9


def test_zscore_degenerate():
    with pytest.raises(DegenerateSegment):
        pp.zscore(np.full(100, 2.0))
    with pytest.raises(ShapeError):
        pp.zscore([1.0])


def test_sqi_white_noise_fails():
    rng = np.random.default_rng(8)
    x = pp.zscore(rng.standard_normal(1000))
    passed, entropy, peak = pp.sqi_pass(x, FS)
    assert entropy > 0.85
    assert peak < 0.3
    assert not passed


def test_sqi_clean_pulse_passes():
    seg = generate_segment(SynthConfig(noise_std=0.0, wander_amp=0.0, seed=2))
    passed, entropy, peak = pp.sqi_pass(pp.zscore(seg.samples), FS)
    assert entropy <= 0.85
    assert peak >= 0.3
    assert passed


def test_sqi_lag_window_excludes_zero():
    # peak search starts at the 180 bpm lag (~0.33 s), never lag 0
    spec = pp.SqiSpec()
    lo_s, hi_s = spec.lag_window_s()
    assert lo_s == pytest.approx(60.0 / 180.0)
    assert hi_s == pytest.approx(60.0 / 40.0)
    rng = np.random.default_rng(1)
    x = pp.zscore(rng.standard_normal(1000))
    peak = pp.autocorr_peak(x, FS, (lo_s, hi_s))
    assert peak < 0.99  # lag 0 would give exactly 1


def test_preprocess_segment_accepts_clean_25hz():
    cfg = SynthConfig(fs_hz=25.0, noise_std=0.0, wander_amp=0.0,
                      n_harmonics=2, hr_bpm=72.0, seed=3)
    out = pp.preprocess_segment(generate_segment(cfg), target_fs_hz=100.0)
    assert isinstance(out, Segment)
    assert len(out.samples) == 1000
    assert out.fs_hz == 100.0


def test_preprocess_segment_rejects_noise_on_sqi():
    rng = np.random.default_rng(12)
    seg = Segment("u0", "u0_noise", 100.0, rng.standard_normal(1000), {})
    out = pp.preprocess_segment(seg)
    assert isinstance(out, pp.Rejected)
    assert out.reason == "sqi"


def test_preprocess_segment_rejects_constant_as_degenerate():
    seg = Segment("u0", "u0_flat", 100.0, np.full(1000, 3.0), {})
    out = pp.preprocess_segment(seg)
    assert isinstance(out, pp.Rejected)
    assert out.reason == "degenerate"


def test_pipeline_output_shape_constant():
    lens = set()
    for i, fs in enumerate([25.0, 50.0, 100.0]):
        cfg = SynthConfig(fs_hz=fs, noise_std=0.02, wander_amp=0.1,
                          hr_bpm=70.0 + i, seed=i)
        out = pp.preprocess_segment(generate_segment(cfg))
        assert isinstance(out, Segment)
        lens.add(len(out.samples))
    assert lens == {1000}
