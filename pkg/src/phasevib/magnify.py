"""Automatic band selection, phase-based motion magnification and ODS extraction.

Magnification is single-scale: for each orientation the quadrature response
``R = A exp(i phi)`` is phase-shifted by ``alpha`` times the temporally
band-passed phase, and the change in its real part is added back to the
frame, scaled by the inverse filter gain at the passband peak. For an
in-band grating this reproduces a translation of ``(1 + alpha)`` times the
original in-band motion.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ._util import DataError, fmt, ordered_map
from .displacement import DEFAULT_SLOPE_FLOOR, DisplacementSignal, Point, pixel_signals
from .features import Roi
from .frame_io import FrameSequence
from .multipoint import DEFAULT_F_MIN
from .spectral import MIN_SAMPLES, fft_spectrum
from .steerable import border_mask, default_amplitude_floor, filter_frame, make_filter_bank

DEFAULT_EPSILON = 2.0
# band amplitudes below this (signal units) are rounding noise, not motion
_MIN_ODS_AMPLITUDE = 1e-9
_CHUNK = 32
_ROW_BLOCK = 16


@dataclass(frozen=True)
class FrequencyBand:
    lo_hz: float
    hi_hz: float
    mu: float | None = None
    sigma: float | None = None
    epsilon: float | None = None

    def __post_init__(self):
        if not self.lo_hz < self.hi_hz:
            raise ValueError(f"band must satisfy lo < hi, got [{self.lo_hz}, {self.hi_hz}]")

    @property
    def center(self) -> float:
        return 0.5 * (self.lo_hz + self.hi_hz)

    def check(self, fps: float) -> None:
        if not (0.0 < self.lo_hz and self.hi_hz < fps / 2.0):
            raise ValueError(f"band [{self.lo_hz}, {self.hi_hz}] Hz must lie inside (0, {fps / 2.0}) Hz")


def select_band(freqs: Sequence[float], epsilon: float = DEFAULT_EPSILON, fps: float | None = None,
                n_samples: int | None = None, f_min: float = DEFAULT_F_MIN) -> FrequencyBand:
    """Band ``[mu - epsilon sigma, mu + epsilon sigma]`` from per-feature mode frequencies.

    ``sigma`` is the population standard deviation. With ``fps`` and
    ``n_samples`` given, a band narrower than two FFT bins is widened
    symmetrically to two bins, then the band is clamped to (f_min, fps/2).
    """
    f = np.asarray(freqs, dtype=np.float64).ravel()
    if f.size == 0:
        raise ValueError("no frequencies to select a band from")
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    if np.ptp(f) == 0.0:
        # exact, so identical inputs report sigma = 0 rather than rounding noise
        mu, sigma = float(f[0]), 0.0
    else:
        mu, sigma = float(f.mean()), float(f.std())
    lo, hi = mu - epsilon * sigma, mu + epsilon * sigma
    if fps is None:
        if not hi > lo:
            raise ValueError("degenerate band (sigma = 0); pass fps and n_samples to widen it")
        return FrequencyBand(lo, hi, mu, sigma, epsilon)
    if n_samples is None:
        raise ValueError("n_samples is required together with fps")
    bin_hz = fps / n_samples
    if hi - lo < 2.0 * bin_hz:
        lo, hi = mu - bin_hz, mu + bin_hz
    lo = max(lo, f_min)
    hi = min(hi, fps / 2.0 - 0.5 * bin_hz)
    return FrequencyBand(lo, hi, mu, sigma, epsilon)


def temporal_bandpass(series: np.ndarray, band: FrequencyBand | tuple[float, float], fps: float) -> np.ndarray:
    """Ideal zero-phase band-pass along axis 0.

    Bins with ``lo <= f <= hi`` are kept, everything else (including DC) is
    zeroed, so the output has zero mean.
    """
    if not isinstance(band, FrequencyBand):
        band = FrequencyBand(*band)
    band.check(fps)
    x = np.asarray(series, dtype=np.float64)
    if x.shape[0] < MIN_SAMPLES:
        raise DataError(f"series has {x.shape[0]} samples; at least {MIN_SAMPLES} are needed")
    spec = np.fft.rfft(x, axis=0)
    f = np.fft.rfftfreq(x.shape[0], d=1.0 / fps)
    drop = (f < band.lo_hz) | (f > band.hi_hz) | (f == 0.0)
    spec[drop] = 0.0
    return np.fft.irfft(spec, n=x.shape[0], axis=0)


def magnify(seq: FrameSequence, roi: Roi | None, band: FrequencyBand, alpha: float, sigma_px: float = 2.0,
            threads: int | None = None) -> FrameSequence:
    """Amplify in-band motion inside ``roi`` by ``alpha``.

    Pixels outside the ROI are copied unchanged; ``alpha = 0`` reproduces
    the input exactly. Output luminance is clamped to [0, 1].
    """
    if not alpha >= 0:
        raise ValueError("alpha must be >= 0")
    band.check(seq.fps)
    if roi is None:
        roi = Roi.full((seq.height, seq.width))
    roi.check((seq.height, seq.width))
    bank = make_filter_bank(sigma_px)
    gains = [1.0 / k.gain() for k in bank]
    rs, cs = roi.slices
    n_t = seq.n_frames
    masks = [border_mask((seq.height, seq.width), k.border)[rs, cs] for k in bank]

    def responses(frame):
        out = []
        for k, inside in zip(bank, masks):
            real, imag = filter_frame(frame, k)
            r = real[rs, cs] + 1j * imag[rs, cs]
            out.append((r, inside & (np.abs(r) > default_amplitude_floor(frame, k))))
        return out

    # pass 1: phase history of every ROI pixel
    phases = [np.empty((n_t, roi.height, roi.width)) for _ in bank]
    valid = [m.copy() for m in masks]
    for start in range(0, n_t, _CHUNK):
        for j, resp in enumerate(ordered_map(responses, seq.frames[start:start + _CHUNK], threads)):
            for o, (r, ok) in enumerate(resp):
                phases[o][start + j] = np.angle(r)
                valid[o] &= ok

    # temporal unwrap + band-pass, a block of rows at a time to bound FFT scratch
    for o in range(len(bank)):
        for r0 in range(0, roi.height, _ROW_BLOCK):
            block = np.unwrap(phases[o][:, r0:r0 + _ROW_BLOCK], axis=0)
            phases[o][:, r0:r0 + _ROW_BLOCK] = temporal_bandpass(block, band, seq.fps)
        phases[o][:, ~valid[o]] = 0.0

    # pass 2: reconstruct
    def rebuild(t):
        frame = seq.frames[t]
        out = frame.copy()
        delta = np.zeros((roi.height, roi.width))
        for o, (r, _) in enumerate(responses(frame)):
            delta += gains[o] * (r * (np.exp(1j * alpha * phases[o][t]) - 1.0)).real
        out[rs, cs] = np.clip(frame[rs, cs] + delta, 0.0, 1.0)
        return out

    frames = np.stack(ordered_map(rebuild, range(n_t), threads))
    return FrameSequence(frames, fps=seq.fps, scale=seq.scale)


# --- operating deflection shapes -------------------------------------------------

@dataclass
class OdsProfile:
    positions: list[Point]
    values: np.ndarray
    axis: str
    freq_hz: float


def _ordered(points: Sequence[Point]) -> bool:
    p = np.asarray(points, dtype=np.float64)
    d = p[-1] - p[0]
    if not np.any(d):
        return False
    proj = (p - p[0]) @ d
    return bool(np.all(np.diff(proj) > 0))


def band_component(sig: np.ndarray, fps: float, freq_hz: float) -> complex:
    x = np.asarray(sig, dtype=np.float64)
    x = x - x.mean()
    t = np.arange(x.size)
    return complex(np.sum(x * np.exp(-2j * np.pi * freq_hz * t / fps)))


def ods_from_signals(signals: Sequence[DisplacementSignal], positions: Sequence[Point], band: FrequencyBand,
                     axis: str | None = None) -> OdsProfile:
    """Signed, normalised band-centre amplitude per position.

    The sign is that of the phase relative to the point of largest
    amplitude, which therefore always has value +1.
    """
    fc = band.center
    comp = {a: np.array([band_component(getattr(s, "d" + a), s.fps, fc) for s in signals]) for a in ("x", "y")}
    if axis is None:
        axis = "x" if np.abs(comp["x"]).sum() >= np.abs(comp["y"]).sum() else "y"
    c = comp[axis]
    mags = np.abs(c)
    ref = int(np.argmax(mags))
    n = len(signals[ref].dx)
    if 2.0 * mags[ref] / n < _MIN_ODS_AMPLITUDE:
        raise DataError("no motion at the band centre at any ODS position")
    signs = np.where(np.cos(np.angle(c) - np.angle(c[ref])) >= 0, 1.0, -1.0)
    return OdsProfile(list(positions), signs * mags / mags[ref], axis, fc)


def extract_ods(seq: FrameSequence, line: Sequence[Point], band: FrequencyBand, sigma_px: float = 2.0,
                axis: str | None = None, slope_floor: float = DEFAULT_SLOPE_FLOOR,
                threads: int | None = None) -> OdsProfile:
    """Operating deflection shape along ``line`` (ordered pixel positions) at the band centre."""
    pts = [(int(x), int(y)) for x, y in line]
    if len(pts) < 3:
        raise ValueError("an ODS needs at least 3 positions")
    if len(set(pts)) != len(pts) or not _ordered(pts):
        raise ValueError("ODS positions must be distinct and strictly ordered along the line")
    band.check(seq.fps)
    sig = pixel_signals(seq, pts, sigma_px, slope_floor, threads)
    return ods_from_signals([sig[p] for p in pts], pts, band, axis)


def line_points(roi: Roi, n: int, margin: int) -> list[Point]:
    """``n`` evenly spaced points on the horizontal centre line of ``roi``,
    inset ``margin`` px from its left and right edges."""
    x0, x1 = roi.x0 + margin, roi.x1 - 1 - margin
    if n < 1 or x1 - x0 < n - 1:
        raise ValueError(f"ROI {roi} is too narrow for {n} ODS positions with a {margin} px inset")
    y = roi.y0 + roi.height // 2
    xs = np.rint(np.linspace(x0, x1, n)).astype(int)
    return [(int(x), y) for x in xs]


# --- multi-mode band statistics ---------------------------------------------------

def feature_mode_frequencies(signals: Mapping[Point, DisplacementSignal], ref_freqs: Sequence[float],
                             f_min: float = DEFAULT_F_MIN, max_half_width: float = 1.0) -> list[list[float]]:
    """Per reference mode, each feature's local spectral peak near that mode.

    The search window around a reference frequency reaches half way to its
    neighbouring references (at most ``max_half_width`` Hz). The axis used
    per feature is the one with more spectral energy above ``f_min``.
    """
    refs = sorted(float(f) for f in ref_freqs)
    halves = []
    for i, f in enumerate(refs):
        gaps = [abs(f - g) / 2.0 for j, g in enumerate(refs) if j != i]
        halves.append(min(gaps + [max_half_width]))
    out: list[list[float]] = [[] for _ in refs]
    for p in sorted(signals, key=lambda q: (q[1], q[0])):
        s = signals[p]
        sx, sy = fft_spectrum(s.dx, s.fps), fft_spectrum(s.dy, s.fps)
        above = sx.freqs_hz > f_min
        spec = sx if np.sum(sx.mag[above] ** 2) >= np.sum(sy.mag[above] ** 2) else sy
        for i, (f, hw) in enumerate(zip(refs, halves)):
            sel = np.flatnonzero((spec.freqs_hz >= f - hw) & (spec.freqs_hz <= f + hw) & above)
            if sel.size:
                out[i].append(float(spec.freqs_hz[sel[np.argmax(spec.mag[sel])]]))
    return out


def band_report_json(report: Mapping[str, Sequence[FrequencyBand]]) -> str:
    doc = {
        name: [{"mode_rank": i + 1, "mu_hz": float(fmt(b.mu)), "sigma_hz": float(fmt(b.sigma)),
                "lo_hz": float(fmt(b.lo_hz)), "hi_hz": float(fmt(b.hi_hz))} for i, b in enumerate(bands)]
        for name, bands in report.items()
    }
    return json.dumps(doc, indent=2) + "\n"


def write_ods_csv(profile: OdsProfile, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["position_index", "x", "y", "value"])
        for i, ((x, y), v) in enumerate(zip(profile.positions, profile.values)):
            w.writerow([i, x, y, fmt(v)])
    return path
