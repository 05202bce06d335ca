"""Grayscale frame sequences: disk layout, colour conversion and analytic synthesis.

On disk a sequence is a directory of 8-bit binary PGM files named
``frame_%06d.pgm`` plus ``manifest.txt``::

    fps=60.0
    scale_mm_per_px=0.25
    count=2
    frame=frame_000000.pgm
    frame=frame_000001.pgm

``frame=`` lines are optional; without them the loader assumes the default
file names for ``0 .. count-1``.

Synthetic sequences are rendered by evaluating a continuous pattern at
shifted coordinates, so sub-pixel motion is exact and serves as ground
truth for every downstream measurement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from PIL import Image
from scipy.special import erf

from ._util import DataError, ordered_map

MANIFEST_NAME = "manifest.txt"
FRAME_TEMPLATE = "frame_{:06d}.pgm"

PATTERNS = ("checkerboard", "sinusoid-grating", "gaussian-blob")

Pattern = Callable[[np.ndarray, np.ndarray], np.ndarray]
# frame index -> (dx, dy), each a scalar or an (H, W) array
DisplacementFn = Callable[[int], tuple]


@dataclass
class FrameSequence:
    frames: np.ndarray  # (T, H, W) float64 luminance in [0, 1]
    fps: float
    scale: float | None = None  # mm per pixel

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim == 2:
            frames = frames[None]
        if frames.ndim != 3:
            raise DataError(f"frames must be (T, H, W), got shape {frames.shape}")
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise DataError(f"fps must be positive, got {self.fps}")
        if self.scale is not None and not self.scale > 0:
            raise DataError(f"scale must be positive, got {self.scale}")
        if not np.all(np.isfinite(frames)) or frames.min(initial=0.0) < 0.0 or frames.max(initial=0.0) > 1.0:
            raise DataError("luminance must be finite and within [0, 1]")
        self.frames = frames
        self.fps = float(self.fps)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    def __len__(self) -> int:
        return self.n_frames


@dataclass(frozen=True)
class SyntheticMotionSpec:
    pattern: str = "sinusoid-grating"
    amplitude_px: float = 0.3
    freq_hz: float = 2.67
    phase0: float = 0.0
    direction: tuple[float, float] = (1.0, 0.0)
    duration_s: float = 10.0
    noise_sigma: float = 0.0
    # grating wavelength; the default sits at the peak of the sigma=2 px filter
    wavelength_px: float = 2.0 * math.sqrt(2.0) * math.pi
    # checker square side / blob radius; None picks a size from the frame
    size_px: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}; expected one of {PATTERNS}")
        if self.amplitude_px < 0:
            raise ValueError("amplitude_px must be >= 0")
        if self.duration_s <= 0:
            raise ValueError("duration_s must be > 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        norm = math.hypot(*self.direction)
        if norm == 0:
            raise ValueError("direction must be non-zero")
        object.__setattr__(self, "direction", (self.direction[0] / norm, self.direction[1] / norm))


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """Luminosity-weighted grayscale (0.299 R + 0.587 G + 0.114 B) for converters."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim < 3 or rgb.shape[-1] not in (3, 4):
        raise ValueError("expected an (..., 3) or (..., 4) colour array")
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114


def quantize8(frames: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(frames, 0.0, 1.0) * 255.0).astype(np.uint8)


def _read_frame(path: Path) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"frame file not found: {path}")
    with Image.open(path) as im:
        if im.mode == "L":
            maxval = 255.0
        elif im.mode in ("I", "I;16", "I;16B"):
            maxval = 65535.0
        else:
            raise DataError(f"{path.name}: unsupported pixel format {im.mode!r} (need 8/16-bit grayscale)")
        return np.asarray(im, dtype=np.float64) / maxval


def _parse_manifest(path: Path) -> dict:
    info: dict = {"frame": []}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = key.strip(), value.strip()
        if key == "frame":
            info["frame"].append(value)
        else:
            info[key] = value
    return info


def load_sequence(manifest_path: str | Path) -> FrameSequence:
    """Read a sequence written by :func:`save_sequence` (or by hand).

    ``manifest_path`` may point at the manifest itself or at its directory.
    """
    path = Path(manifest_path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    info = _parse_manifest(path)
    try:
        fps = float(info["fps"])
    except (KeyError, ValueError):
        raise DataError(f"{path}: missing or invalid fps") from None
    if not fps > 0:
        raise DataError(f"{path}: fps must be > 0, got {fps}")
    scale_txt = info.get("scale_mm_per_px", "none")
    scale = None if scale_txt.lower() in ("", "none") else float(scale_txt)

    names = info["frame"]
    if not names:
        try:
            count = int(info["count"])
        except (KeyError, ValueError):
            raise DataError(f"{path}: needs count= or frame= entries") from None
        names = [FRAME_TEMPLATE.format(i) for i in range(count)]
    elif "count" in info and int(info["count"]) != len(names):
        raise DataError(f"{path}: count={info['count']} but {len(names)} frame entries")

    frames = [_read_frame(path.parent / name) for name in names]
    if not frames:
        raise DataError(f"{path}: empty sequence")
    shape = frames[0].shape
    for name, fr in zip(names, frames):
        if fr.shape != shape:
            raise DataError(f"{name}: dimensions {fr.shape[::-1]} differ from {shape[::-1]}")
    return FrameSequence(np.stack(frames), fps=fps, scale=scale)


def save_sequence(seq: FrameSequence, directory: str | Path, threads: int | None = None) -> Path:
    """Write 8-bit PGM frames and the manifest; returns the manifest path."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    q = quantize8(seq.frames)
    names = [FRAME_TEMPLATE.format(i) for i in range(seq.n_frames)]

    def write(i: int) -> None:
        Image.fromarray(q[i]).save(out / names[i], format="PPM")

    ordered_map(write, range(seq.n_frames), threads)
    lines = [
        f"fps={seq.fps!r}",
        f"scale_mm_per_px={'none' if seq.scale is None else repr(float(seq.scale))}",
        f"count={seq.n_frames}",
    ]
    lines += [f"frame={n}" for n in names]
    manifest = out / MANIFEST_NAME
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


# --- synthesis -----------------------------------------------------------------

def _smooth_box(u: np.ndarray, half: float, edge: float) -> np.ndarray:
    return 0.5 * (erf((u + half) / edge) - erf((u - half) / edge))


def make_pattern(name: str, width: int, height: int, wavelength_px: float = 2.0 * math.sqrt(2.0) * math.pi,
                 size_px: float | None = None) -> Pattern:
    """Continuous luminance pattern P(x, y) with values inside [0.1, 0.9].

    ``sinusoid-grating`` is a plaid (one grating along each axis) so it has
    texture in both directions and Harris corners at its extrema/saddles.
    ``checkerboard`` is a single erf-smoothed 2x2 marker centred in the
    frame; ``gaussian-blob`` a single blob centred in the frame.
    """
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    if name == "sinusoid-grating":
        k = 2.0 * math.pi / wavelength_px

        def grating(x, y):
            return 0.5 + 0.2 * np.sin(k * x) + 0.2 * np.sin(k * y)
        return grating
    if name == "checkerboard":
        half = size_px if size_px is not None else min(width, height) / 4.0
        edge = 1.0

        def checker(x, y):
            u, v = x - cx, y - cy
            return 0.5 + 0.4 * erf(u / edge) * erf(v / edge) * _smooth_box(u, half, edge) * _smooth_box(v, half, edge)
        return checker
    if name == "gaussian-blob":
        r = size_px if size_px is not None else min(width, height) / 8.0

        def blob(x, y):
            return 0.1 + 0.8 * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * r * r))
        return blob
    raise ValueError(f"unknown pattern {name!r}; expected one of {PATTERNS}")


def render_motion(pattern: Pattern, width: int, height: int, fps: float, n_frames: int,
                  displacement: DisplacementFn, noise_sigma: float = 0.0, seed: int = 0,
                  scale: float | None = None) -> FrameSequence:
    """Render frame t as ``pattern(x - dx(t), y - dy(t))`` on the pixel-centre grid.

    ``displacement(t)`` may return scalars (rigid motion) or (H, W) arrays for
    spatially varying motion such as mode shapes.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    rng = np.random.default_rng(seed)
    frames = np.empty((n_frames, height, width))
    for t in range(n_frames):
        dx, dy = displacement(t)
        frames[t] = pattern(x - dx, y - dy)
        if noise_sigma > 0:
            frames[t] += rng.normal(0.0, noise_sigma, size=(height, width))
    np.clip(frames, 0.0, 1.0, out=frames)
    return FrameSequence(frames, fps=fps, scale=scale)


def tone_displacement(amplitude_px: float, freq_hz: float, fps: float, phase0: float = 0.0,
                      direction: tuple[float, float] = (1.0, 0.0)) -> DisplacementFn:
    w = 2.0 * math.pi * freq_hz / fps

    def disp(t: int):
        s = amplitude_px * math.sin(w * t + phase0)
        return direction[0] * s, direction[1] * s
    return disp


def synthesize(spec: SyntheticMotionSpec, width: int, height: int, fps: float) -> FrameSequence:
    """Render ``spec`` with d(t) = direction * a * sin(2 pi f t / fps + phase0)."""
    if not fps > 0:
        raise ValueError("fps must be > 0")
    if spec.freq_hz >= fps / 2.0:
        raise ValueError(f"motion frequency {spec.freq_hz} Hz violates Nyquist for {fps} fps "
                         f"(must be < {fps / 2.0} Hz)")
    if spec.freq_hz < 0:
        raise ValueError("freq_hz must be >= 0")
    n_frames = int(round(spec.duration_s * fps))
    pattern = make_pattern(spec.pattern, width, height, spec.wavelength_px, spec.size_px)
    disp = tone_displacement(spec.amplitude_px, spec.freq_hz, fps, spec.phase0, spec.direction)
    return render_motion(pattern, width, height, fps, n_frames, disp, spec.noise_sigma, spec.seed)


def analytic_displacement(spec: SyntheticMotionSpec, fps: float, n_frames: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth (dx, dy) series for ``spec``, relative to frame 0."""
    if n_frames is None:
        n_frames = int(round(spec.duration_s * fps))
    t = np.arange(n_frames)
    s = spec.amplitude_px * np.sin(2.0 * np.pi * spec.freq_hz * t / fps + spec.phase0)
    s = s - s[0]
    return spec.direction[0] * s, spec.direction[1] * s
