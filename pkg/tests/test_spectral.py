import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phasevib._util import DataError
from phasevib.spectral import (
    Spectrum,
    dominant_frequency,
    fft_spectrum,
    modes_to_json,
    nrmse,
    one_sided_energy,
    pick_modes,
    resample,
    tone_amplitude,
    write_spectrum_csv,
)

FPS = 60.0
T = np.arange(600) / FPS


def test_constant_signal_has_empty_spectrum():
    spec = fft_spectrum(np.full(100, 3.0), FPS)
    assert np.all(spec.mag == 0.0)
    assert pick_modes(spec) == []


def test_bins_span_zero_to_nyquist():
    spec = fft_spectrum(np.sin(T), FPS)
    assert spec.freqs_hz[0] == 0.0 and spec.freqs_hz[-1] == FPS / 2
    assert np.allclose(np.diff(spec.freqs_hz), FPS / 600) and spec.bin_hz == 0.1
    assert np.all(spec.mag >= 0)


def test_unit_sinusoid_peaks_at_nearest_bin():
    f, _ = dominant_frequency(fft_spectrum(np.sin(2 * np.pi * 2.67 * T), FPS))
    assert f == pytest.approx(2.7) and abs(f - 2.67) <= 0.1


def test_two_sinusoids_give_two_peaks():
    spec = fft_spectrum(np.sin(2 * np.pi * 2.0 * T) + np.sin(2 * np.pi * 7.3 * T), FPS)
    modes = pick_modes(spec)
    assert sorted(round(m.freq_hz, 6) for m in modes) == [2.0, 7.3]


@settings(max_examples=50, deadline=None)
@given(n=st.integers(64, 700), seed=st.integers(0, 2 ** 31 - 1))
def test_parseval(n, seed):
    x = np.random.default_rng(seed).normal(size=n) * 3 + 1
    spec = fft_spectrum(x, FPS)
    xd = x - x.mean()
    assert one_sided_energy(spec) == pytest.approx(np.sum(xd ** 2), rel=1e-9)


def test_short_signal_is_rejected():
    with pytest.raises(DataError):
        fft_spectrum(np.zeros(63), FPS)
    with pytest.raises(ValueError):
        fft_spectrum(np.zeros(64), FPS, window="kaiser")


def test_hann_window_available():
    spec = fft_spectrum(np.sin(2 * np.pi * 3.0 * T), FPS, window="hann")
    assert spec.window == "hann" and dominant_frequency(spec)[0] == pytest.approx(3.0)


def test_pure_sinusoid_gives_exactly_one_mode():
    modes = pick_modes(fft_spectrum(np.sin(2 * np.pi * 4.2 * T), FPS))
    assert len(modes) == 1 and modes[0].rank == 1 and modes[0].freq_hz == pytest.approx(4.2)


def test_close_tones_merge_under_min_separation():
    fps, n = 20.0, 2000  # 0.01 Hz bins resolve the pair
    t = np.arange(n) / fps
    x = np.sin(2 * np.pi * 2.0 * t) + 0.9 * np.sin(2 * np.pi * 2.05 * t)
    spec = fft_spectrum(x, fps)
    assert len(pick_modes(spec, min_sep_hz=0.01)) == 2
    merged = pick_modes(spec, min_sep_hz=0.2)
    assert len(merged) == 1 and merged[0].freq_hz == pytest.approx(2.0)


def test_four_tone_ranking():
    freqs, amps = [2.67, 3.69, 5.42, 6.71], [4, 3, 2, 1]
    x = sum(a * np.sin(2 * np.pi * f * T) for f, a in zip(freqs, amps))
    modes = pick_modes(fft_spectrum(x, FPS), max_modes=4)
    assert [m.rank for m in modes] == [1, 2, 3, 4]
    for m, f in zip(modes, freqs):
        assert abs(m.freq_hz - f) <= 0.1
    snrs = [m.snr for m in modes]
    assert snrs == sorted(snrs, reverse=True) and min(snrs) > 1


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(1e-3, 1e3), f_min=st.floats(0.0, 3.0))
def test_pick_modes_scale_invariance_and_range(seed, c, f_min):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=300) + sum(rng.uniform(0.5, 3) * np.sin(2 * np.pi * rng.uniform(0.5, 25) * T[:300])
                                   for _ in range(3))
    a = pick_modes(fft_spectrum(x, FPS), f_min=f_min)
    b = pick_modes(fft_spectrum(c * x, FPS), f_min=f_min)
    assert [(m.freq_hz, m.rank) for m in a] == [(m.freq_hz, m.rank) for m in b]
    assert np.allclose([m.snr for m in a], [m.snr for m in b], rtol=1e-9)
    for m in a:
        assert f_min < m.freq_hz < FPS / 2 and m.snr > 1


def test_ties_break_towards_lower_frequency():
    mag = np.full(301, 0.1)
    mag[[60, 30]] = 5.0
    spec = Spectrum(np.arange(301) * 0.1, mag, FPS, 600)
    modes = pick_modes(spec)
    assert [m.freq_hz for m in modes] == pytest.approx([3.0, 6.0])
    assert modes[0].snr == modes[1].snr


def test_nrmse():
    ref = np.sin(T)
    assert nrmse(ref, ref) == 0.0
    assert nrmse(ref + 0.01 * np.ptp(ref), ref) == pytest.approx(1.0)
    with pytest.raises(ValueError, match="flat"):
        nrmse(ref[:5], np.ones(5))
    with pytest.raises(ValueError, match="length"):
        nrmse(ref[:5], ref[:6])


def test_resample():
    x = np.sin(T)
    assert np.array_equal(resample(x, 60, 60), x)
    ramp = 0.3 * np.arange(100) + 2
    out = resample(ramp, 50.0, 17.0)
    assert np.allclose(out, 0.3 * 50.0 * np.arange(out.size) / 17.0 + 2, atol=1e-12)
    t = np.arange(2400) / 240.0
    down = resample(np.sin(2 * np.pi * 2.67 * t), 240.0, 60.0)
    assert down.size == 600
    assert abs(dominant_frequency(fft_spectrum(down, 60.0))[0] - 2.67) <= 0.1
    with pytest.raises(ValueError):
        resample(x, 0, 10)


def test_tone_amplitude():
    assert tone_amplitude(0.3 * np.sin(2 * np.pi * 3.0 * T), FPS, 3.0) == pytest.approx(0.3)


def test_exports(tmp_path):
    spec = fft_spectrum(np.sin(2 * np.pi * 3.0 * T), FPS)
    lines = write_spectrum_csv(spec, tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "freq_hz,magnitude" and len(lines) == 302
    doc = json.loads(modes_to_json(pick_modes(spec)))
    assert set(doc[0]) == {"rank", "freq_hz", "snr", "magnitude"}
