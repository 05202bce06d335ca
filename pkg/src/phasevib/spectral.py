"""Magnitude spectra, SNR-ranked mode picking, resampling and NRMSE."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import get_window

from ._util import DataError, fmt

MIN_SAMPLES = 64


@dataclass
class Spectrum:
    freqs_hz: np.ndarray
    mag: np.ndarray  # |DFT| of the detrended, windowed signal (unscaled)
    fps: float
    n_samples: int
    window: str = "rect"

    @property
    def bin_hz(self) -> float:
        return self.fps / self.n_samples


@dataclass(frozen=True)
class ModeEstimate:
    freq_hz: float
    magnitude: float
    snr: float
    rank: int


def fft_spectrum(sig, fps: float, window: str = "rect") -> Spectrum:
    """One-sided magnitude spectrum of the mean-detrended signal.

    No zero padding: bins are spaced exactly ``fps / N``.
    """
    x = np.asarray(sig, dtype=np.float64).ravel()
    if x.size < MIN_SAMPLES:
        raise DataError(f"signal has {x.size} samples; at least {MIN_SAMPLES} are needed")
    if not fps > 0:
        raise ValueError("fps must be > 0")
    x = x - x.mean()
    if window == "hann":
        x = x * get_window("hann", x.size)
    elif window != "rect":
        raise ValueError(f"window must be 'rect' or 'hann', got {window!r}")
    mag = np.abs(np.fft.rfft(x))
    freqs = np.fft.rfftfreq(x.size, d=1.0 / fps)
    return Spectrum(freqs_hz=freqs, mag=mag, fps=float(fps), n_samples=x.size, window=window)


def one_sided_energy(spec: Spectrum) -> float:
    """(1/N) sum |X_k|^2 over the full two-sided DFT, rebuilt from the one-sided half."""
    p = spec.mag ** 2
    doubled = p[1:-1] if spec.n_samples % 2 == 0 else p[1:]
    edge = p[0] + (p[-1] if spec.n_samples % 2 == 0 else 0.0)
    return float((edge + 2.0 * doubled.sum()) / spec.n_samples)


def tone_amplitude(sig, fps: float, freq_hz: float) -> float:
    """Amplitude of the sinusoidal component at ``freq_hz`` (single-bin DFT of the detrended signal)."""
    x = np.asarray(sig, dtype=np.float64).ravel()
    x = x - x.mean()
    t = np.arange(x.size)
    c = np.sum(x * np.exp(-2j * np.pi * freq_hz * t / fps))
    return float(2.0 * abs(c) / x.size)


def dominant_frequency(spec: Spectrum, f_min: float = 0.3) -> tuple[float, float]:
    """(frequency, magnitude) of the largest bin strictly above ``f_min``."""
    sel = np.flatnonzero(spec.freqs_hz > f_min)
    if sel.size == 0:
        raise DataError(f"no spectral bins above f_min={f_min} Hz")
    i = sel[np.argmax(spec.mag[sel])]
    return float(spec.freqs_hz[i]), float(spec.mag[i])


def pick_modes(spec: Spectrum, max_modes: int = 4, f_min: float = 0.3, min_sep_hz: float = 0.25,
               min_rel_height: float = 0.1) -> list[ModeEstimate]:
    """SNR-ranked spectral peaks.

    A peak is a local maximum strictly inside (f_min, fps/2) whose magnitude
    is at least ``min_rel_height`` of the tallest such maximum. SNR is peak
    magnitude over the median magnitude of the whole spectrum. Peaks are
    taken in decreasing SNR (ties to the lower frequency) and any peak
    closer than ``min_sep_hz`` to an accepted one is dropped.
    """
    mag, f = spec.mag, spec.freqs_hz
    if mag.size < 3:
        return []
    nyq = spec.fps / 2.0
    i = np.arange(1, mag.size - 1)
    is_peak = (mag[i] > mag[i - 1]) & (mag[i] >= mag[i + 1]) & (f[i] > f_min) & (f[i] < nyq)
    idx = i[is_peak]
    if idx.size == 0:
        return []
    noise = float(np.median(mag))
    top = mag[idx].max()
    if top <= 0:
        return []
    idx = idx[mag[idx] >= min_rel_height * top]
    snr = mag[idx] / noise if noise > 0 else np.full(idx.size, np.inf)
    order = sorted(range(idx.size), key=lambda j: (-snr[j], f[idx[j]]))
    modes: list[ModeEstimate] = []
    for j in order:
        if len(modes) >= max_modes:
            break
        fj = float(f[idx[j]])
        if snr[j] <= 1.0:
            continue
        if any(abs(fj - m.freq_hz) < min_sep_hz for m in modes):
            continue
        modes.append(ModeEstimate(freq_hz=fj, magnitude=float(mag[idx[j]]), snr=float(snr[j]), rank=len(modes) + 1))
    return modes


def nrmse(test, ref) -> float:
    """Root-mean-square error normalised by the reference's peak-to-peak range, in percent."""
    test = np.asarray(test, dtype=np.float64).ravel()
    ref = np.asarray(ref, dtype=np.float64).ravel()
    if test.shape != ref.shape:
        raise ValueError(f"length mismatch: {test.size} vs {ref.size}; resample first")
    span = float(ref.max() - ref.min()) if ref.size else 0.0
    if span == 0.0:
        raise ValueError("reference signal is flat; NRMSE is undefined")
    return 100.0 * float(np.sqrt(np.mean((test - ref) ** 2))) / span


def resample(sig, rate_in: float, rate_out: float) -> np.ndarray:
    """Linear interpolation onto a ``rate_out`` grid over the input's time span."""
    if not (rate_in > 0 and rate_out > 0):
        raise ValueError("sampling rates must be > 0")
    x = np.asarray(sig, dtype=np.float64).ravel()
    t_in = np.arange(x.size) / rate_in
    # tolerance keeps the last sample when the spans coincide up to rounding
    n_out = int(np.floor(t_in[-1] * rate_out + 1e-9)) + 1
    t_out = np.arange(n_out) / rate_out
    return np.interp(t_out, t_in, x)


def write_spectrum_csv(spec: Spectrum, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq_hz", "magnitude"])
        for f, m in zip(spec.freqs_hz, spec.mag):
            w.writerow([fmt(f), fmt(m)])
    return path


def modes_to_json(modes: list[ModeEstimate]) -> str:
    rows = [{"rank": m.rank, "freq_hz": float(fmt(m.freq_hz)), "snr": float(fmt(m.snr)),
             "magnitude": float(fmt(m.magnitude))} for m in modes]
    return json.dumps(rows, indent=2) + "\n"


def write_modes_json(modes: list[ModeEstimate], path: str | Path) -> Path:
    path = Path(path)
    path.write_text(modes_to_json(modes))
    return path
