"""Multi-point measurement: per-feature signals, patch aggregation, frequency maps.

Patch aggregation replaces each feature's signal by a weighted sum over the
feature points inside an N x N patch around it. Weights come from a
symmetric kernel whose values do not increase away from the centre; they
are zeroed at non-feature pixels and renormalised over the feature pixels
present, so they always sum to one.
"""
from __future__ import annotations

import colorsys
import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from PIL import Image
from scipy.special import comb

from ._util import DataError, fmt
from .displacement import DEFAULT_SLOPE_FLOOR, DisplacementSignal, Point, pixel_signals
from .features import FeatureSet, Roi, harris_corners
from .frame_io import FrameSequence
from .spectral import dominant_frequency, fft_spectrum
from .steerable import kernel_taps

log = logging.getLogger(__name__)

DEFAULT_F_MIN = 0.3
LEGEND_ROWS = 12
_LUT_SIZE = 256


@dataclass(frozen=True)
class WeightKernel:
    k: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 == 0:
            raise ValueError(f"weight kernel must be square with odd side, got shape {k.shape}")
        if not np.all(np.isfinite(k)) or np.any(k < 0):
            raise ValueError("weight kernel entries must be finite and non-negative")
        c = k.shape[0] // 2
        if k[c, c] <= 0:
            raise ValueError("weight kernel centre must be positive")
        if not np.array_equal(k, k[::-1, ::-1]):
            raise ValueError("weight kernel must be symmetric about its centre")
        # every step towards the centre, along either axis, must not decrease the weight
        for i in range(k.shape[0]):
            for j in range(k.shape[1]):
                di, dj = i - c, j - c
                if di and k[i, j] > k[i - np.sign(di), j]:
                    raise ValueError("weight kernel values must not increase away from the centre")
                if dj and k[i, j] > k[i, j - np.sign(dj)]:
                    raise ValueError("weight kernel values must not increase away from the centre")
        object.__setattr__(self, "k", k)

    @property
    def size(self) -> int:
        return self.k.shape[0]


def binomial_kernel(n: int) -> WeightKernel:
    if n < 1 or n % 2 == 0:
        raise ValueError("kernel side must be a positive odd number")
    row = comb(n - 1, np.arange(n))
    return WeightKernel(np.outer(row, row))


def uniform_kernel(n: int) -> WeightKernel:
    if n < 1 or n % 2 == 0:
        raise ValueError("kernel side must be a positive odd number")
    return WeightKernel(np.ones((n, n)))


def parse_kernel(choice: str) -> WeightKernel:
    """``3x3`` / ``5x5`` (binomial), ``uniform-N``, or a path to a whitespace-separated matrix."""
    choice = choice.strip()
    if choice in ("3x3", "5x5"):
        return binomial_kernel(int(choice[0]))
    if choice.startswith("uniform-"):
        return uniform_kernel(int(choice.split("-", 1)[1]))
    path = Path(choice)
    if path.exists():
        return WeightKernel(np.loadtxt(path, ndmin=2))
    raise ValueError(f"unknown kernel {choice!r}: use 3x3, 5x5, uniform-N or a file path")


def patch_weights(center: Point, feature_points: set[Point], kernel: WeightKernel) -> list[tuple[Point, float]]:
    """Normalised weights of the feature points in the patch, in row-major order.

    Empty when no feature point falls inside the patch.
    """
    cx, cy = center
    r = kernel.size // 2
    picked = []
    for i in range(-r, r + 1):
        for j in range(-r, r + 1):
            p = (cx + j, cy + i)
            if p in feature_points:
                picked.append((p, kernel.k[i + r, j + r]))
    total = sum(w for _, w in picked)
    if total <= 0:
        return []
    return [(p, w / total) for p, w in picked]


def patch_signal(center: Point, signals: Mapping[Point, DisplacementSignal], features: FeatureSet | None,
                 kernel: WeightKernel) -> DisplacementSignal | None:
    """Weighted sum of the feature signals in the patch around ``center``.

    Returns None when the patch holds no feature point with a signal.
    """
    pts = set(signals) if features is None else {(x, y) for x, y, _ in features.points} & set(signals)
    return _patch(center, signals, pts, kernel)


def _patch(center, signals, pts, kernel):
    weights = patch_weights(center, pts, kernel)
    if not weights:
        return None
    first = signals[weights[0][0]]
    dx = np.zeros_like(first.dx)
    dy = np.zeros_like(first.dy)
    # fixed row-major accumulation order keeps results bit-stable
    for p, w in weights:
        dx += w * signals[p].dx
        dy += w * signals[p].dy
    return DisplacementSignal(point=center, dx=dx, dy=dy, fps=first.fps, units=first.units,
                              gaps=sum(signals[p].gaps for p, _ in weights))


def detect_features(seq: FrameSequence, roi: Roi | None = None, sigma_px: float = 2.0, **harris) -> FeatureSet:
    """Harris corners of the first frame, restricted to where the phase filters are valid."""
    taps = kernel_taps(sigma_px)
    if roi is None:
        roi = Roi.full((seq.height, seq.width))
    roi.check((seq.height, seq.width), min_size=taps)
    margin = taps // 2 + 1
    return harris_corners(seq.frames[0], roi, margin=margin, **harris)


def measure_points(seq: FrameSequence, roi: Roi | None = None, kernel: WeightKernel | None = None,
                   sigma_px: float = 2.0, slope_floor: float = DEFAULT_SLOPE_FLOOR,
                   features: FeatureSet | None = None, threads: int | None = None,
                   **harris) -> dict[Point, DisplacementSignal]:
    """Patch-processed displacement signal at every feature point of ``roi``.

    Features are detected on the first frame (unless given) and held fixed.
    Output does not depend on ``threads``.
    """
    if seq.n_frames < 2 * seq.fps:
        log.warning("sequence is %.2f s long; spectra below 2 s are unreliable", seq.n_frames / seq.fps)
    if features is None:
        features = detect_features(seq, roi, sigma_px, **harris)
    if len(features) == 0:
        raise DataError("no feature points found in the ROI")
    if kernel is None:
        kernel = binomial_kernel(3)
    raw = pixel_signals(seq, features.coords, sigma_px, slope_floor, threads)
    pts = set(raw)
    # every centre is itself a feature, so no patch is empty
    return {p: _patch(p, raw, pts, kernel) for p in raw}


def mean_signal(signals: Mapping[Point, DisplacementSignal]) -> DisplacementSignal:
    """Average of all signals, in sorted (y, x) order."""
    if not signals:
        raise DataError("no signals to average")
    keys = sorted(signals, key=lambda p: (p[1], p[0]))
    dx = np.mean([signals[p].dx for p in keys], axis=0)
    dy = np.mean([signals[p].dy for p in keys], axis=0)
    first = signals[keys[0]]
    return DisplacementSignal(point=None, dx=dx, dy=dy, fps=first.fps, units=first.units)


# --- dominant-frequency map ---------------------------------------------------------

@dataclass
class FrequencyMap:
    entries: list[tuple[int, int, float]]  # (x, y, dominant_freq_hz)
    roi: Roi | None
    fps: float
    f_min: float = DEFAULT_F_MIN

    @property
    def freqs(self) -> np.ndarray:
        return np.array([f for _, _, f in self.entries])


def dominant_axis_frequency(sig: DisplacementSignal, f_min: float = DEFAULT_F_MIN, window: str = "rect") -> tuple[float, str]:
    """Dominant frequency of whichever axis has the larger spectral peak."""
    fx, mx = dominant_frequency(fft_spectrum(sig.dx, sig.fps, window), f_min)
    fy, my = dominant_frequency(fft_spectrum(sig.dy, sig.fps, window), f_min)
    return (fx, "x") if mx >= my else (fy, "y")


def dominant_frequency_map(signals: Mapping[Point, DisplacementSignal], roi: Roi | None = None,
                           f_min: float = DEFAULT_F_MIN) -> FrequencyMap:
    if not signals:
        raise DataError("no signals to map")
    keys = sorted(signals, key=lambda p: (p[1], p[0]))
    entries = [(x, y, dominant_axis_frequency(signals[(x, y)], f_min)[0]) for x, y in keys]
    return FrequencyMap(entries, roi, fps=signals[keys[0]].fps, f_min=f_min)


def colormap_lut(n: int = _LUT_SIZE) -> np.ndarray:
    """(n, 3) uint8 colours running blue (low) to red (high) through the HSV hue circle."""
    hues = np.linspace(2.0 / 3.0, 0.0, n)
    return np.array([[round(255 * c) for c in colorsys.hsv_to_rgb(h, 1.0, 1.0)] for h in hues], dtype=np.uint8)


def frequency_to_index(freq: np.ndarray, f_min: float, f_max: float, n: int = _LUT_SIZE) -> np.ndarray:
    u = (np.asarray(freq, dtype=np.float64) - f_min) / (f_max - f_min)
    return np.clip(np.rint(u * (n - 1)), 0, n - 1).astype(np.intp)


def frequency_from_color(rgb, f_min: float, f_max: float) -> float:
    """Invert the colormap: nearest LUT colour back to its frequency."""
    lut = colormap_lut().astype(np.int64)
    d = np.sum((lut - np.asarray(rgb, dtype=np.int64)) ** 2, axis=1)
    i = int(np.argmin(d))
    return f_min + (f_max - f_min) * i / (_LUT_SIZE - 1)


def render_frequency_map(fmap: FrequencyMap, background: np.ndarray, f_max: float | None = None) -> np.ndarray:
    """RGB image: grayscale background, feature pixels coloured by frequency,
    and a legend strip appended below spanning ``f_min`` (left) to ``f_max`` (right).
    """
    if not fmap.entries:
        raise DataError("frequency map is empty")
    f_max = fmap.fps / 2.0 if f_max is None else f_max
    gray = np.rint(np.clip(background, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = gray.shape
    img = np.repeat(gray[:, :, None], 3, axis=2)
    lut = colormap_lut()
    xs = np.array([e[0] for e in fmap.entries])
    ys = np.array([e[1] for e in fmap.entries])
    img[ys, xs] = lut[frequency_to_index(fmap.freqs, fmap.f_min, f_max)]
    legend_idx = np.rint(np.linspace(0, _LUT_SIZE - 1, w)).astype(np.intp)
    legend = np.repeat(lut[legend_idx][None], LEGEND_ROWS, axis=0)
    return np.concatenate([img, legend], axis=0)


def write_frequency_map_csv(fmap: FrequencyMap, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "freq_hz"])
        for x, y, f in fmap.entries:
            w.writerow([x, y, fmt(f)])
    return path


def read_frequency_map_csv(path: str | Path, fps: float, f_min: float = DEFAULT_F_MIN) -> FrequencyMap:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    entries = [(int(r["x"]), int(r["y"]), float(r["freq_hz"])) for r in rows]
    return FrequencyMap(entries, None, fps=fps, f_min=f_min)


def write_png(rgb: np.ndarray, path: str | Path) -> Path:
    path = Path(path)
    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8)).save(path, format="PNG")
    return path
