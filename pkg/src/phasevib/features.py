"""Harris corner feature points inside a region of interest."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter, maximum_filter

from ._util import fmt


@dataclass(frozen=True)
class Roi:
    x0: int
    y0: int
    width: int
    height: int

    @classmethod
    def full(cls, shape: tuple[int, int]) -> "Roi":
        return cls(0, 0, shape[1], shape[0])

    @classmethod
    def parse(cls, text: str) -> "Roi":
        """From ``"x0,y0,w,h"``."""
        parts = [int(p) for p in text.replace(" ", "").split(",")]
        if len(parts) != 4:
            raise ValueError(f"ROI needs x0,y0,width,height, got {text!r}")
        return cls(*parts)

    @property
    def x1(self) -> int:
        return self.x0 + self.width

    @property
    def y1(self) -> int:
        return self.y0 + self.height

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y1), slice(self.x0, self.x1)

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1

    def check(self, shape: tuple[int, int], min_size: int = 1) -> None:
        if self.width < min_size or self.height < min_size:
            raise ValueError(f"degenerate ROI {self}: sides must be >= {min_size} px")
        if self.x0 < 0 or self.y0 < 0 or self.x1 > shape[1] or self.y1 > shape[0]:
            raise ValueError(f"ROI {self} is not inside the {shape[1]}x{shape[0]} frame")


@dataclass
class FeatureSet:
    points: list[tuple[int, int, float]]  # (x, y, score), sorted by (y, x)
    roi: Roi
    params: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def coords(self) -> np.ndarray:
        """(n, 2) integer array of (x, y)."""
        return np.array([(x, y) for x, y, _ in self.points], dtype=np.intp).reshape(-1, 2)


def harris_response(frame: np.ndarray, k: float = 0.04, window_sigma: float = 1.5) -> np.ndarray:
    """R = det(M) - k trace(M)^2 for the Gaussian-windowed structure tensor M."""
    frame = np.asarray(frame, dtype=np.float64)
    iy, ix = np.gradient(frame)
    sxx = gaussian_filter(ix * ix, window_sigma, mode="reflect")
    syy = gaussian_filter(iy * iy, window_sigma, mode="reflect")
    sxy = gaussian_filter(ix * iy, window_sigma, mode="reflect")
    tr = sxx + syy
    return sxx * syy - sxy * sxy - k * tr * tr


def _disk(radius: int) -> np.ndarray:
    r = int(radius)
    y, x = np.mgrid[-r:r + 1, -r:r + 1]
    return x * x + y * y <= radius * radius


def harris_corners(frame: np.ndarray, roi: Roi | None = None, k: float = 0.04, window_sigma: float = 1.5,
                   threshold_rel: float = 0.01, nms_radius: int = 3, margin: int = 0) -> FeatureSet:
    """Non-max-suppressed Harris corners of ``frame`` inside ``roi``.

    Points closer than ``margin`` px to the frame edge are dropped (the
    phase filters cannot measure there). A flat ROI yields an empty set.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 2 or not np.all(np.isfinite(frame)):
        raise ValueError("frame must be a finite 2D array")
    if roi is None:
        roi = Roi.full(frame.shape)
    roi.check(frame.shape, min_size=3)
    params = dict(k=k, window_sigma=window_sigma, threshold_rel=threshold_rel, nms_radius=nms_radius)

    resp = harris_response(frame, k, window_sigma)
    keep = np.zeros(frame.shape, dtype=bool)
    keep[roi.slices] = True
    h, w = frame.shape
    if margin > 0:
        keep[:margin] = keep[h - margin:] = False
        keep[:, :margin] = keep[:, w - margin:] = False
    inside = np.where(keep, resp, -np.inf)
    top = inside.max()
    if not np.isfinite(top) or top <= 0:
        return FeatureSet([], roi, params)

    footprint = _disk(nms_radius)
    local_max = resp >= maximum_filter(resp, footprint=footprint, mode="nearest")
    cand = keep & local_max & (resp > 0) & (resp > threshold_rel * top)
    ys, xs = np.nonzero(cand)
    scores = resp[ys, xs]
    # greedy suppression resolves plateaus: strongest first, ties by (y, x)
    order = np.lexsort((xs, ys, -scores))
    taken = np.zeros(frame.shape, dtype=bool)
    r = int(nms_radius)
    points = []
    for i in order:
        x, y = int(xs[i]), int(ys[i])
        ya, yb, xa, xb = max(y - r, 0), min(y + r + 1, h), max(x - r, 0), min(x + r + 1, w)
        fp = footprint[ya - y + r:yb - y + r, xa - x + r:xb - x + r]
        if np.any(taken[ya:yb, xa:xb] & fp):
            continue
        taken[y, x] = True
        points.append((x, y, float(scores[i])))
    points.sort(key=lambda p: (p[1], p[0]))
    return FeatureSet(points, roi, params)


def write_features_csv(features: FeatureSet, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "score"])
        for x, y, s in features.points:
            w.writerow([x, y, fmt(s)])
    return path


def overlay_features(frame: np.ndarray, features: FeatureSet) -> np.ndarray:
    """8-bit grayscale copy of ``frame`` with feature pixels set to white."""
    img = np.rint(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
    c = features.coords
    if c.size:
        img[c[:, 1], c[:, 0]] = 255
    return img


def write_overlay(frame: np.ndarray, features: FeatureSet, path: str | Path) -> Path:
    path = Path(path)
    Image.fromarray(overlay_features(frame, features)).save(path, format="PPM")
    return path
