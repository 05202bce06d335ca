"""Phase-based velocity, its time integral, and pixel-to-millimetre scaling.

Velocity along the steering direction ``s`` of a quadrature response is

    v = -(dphi/ds)^-1 (dphi/dt)

in pixels per frame, positive for motion towards increasing ``s``. Both
derivatives are evaluated from phase differences of complex products, so
neither needs an unwrapped phase:

* temporal: ``angle(R_curr * conj(R_prev))``
* spatial: half the angle of ``R[s+1] * conj(R[s-1])``, summed over the
  two frames so the slope is taken at the temporal midpoint.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._util import DataError, fmt, ordered_map
from .frame_io import FrameSequence
from .steerable import (
    KernelPair,
    QuadratureResponse,
    border_mask,
    default_amplitude_floor,
    filter_frame,
    make_filter_bank,
)

log = logging.getLogger(__name__)

DEFAULT_SLOPE_FLOOR = 0.02  # rad/px
_CHUNK = 32  # frames filtered per parallel batch

Point = tuple[int, int]  # (x, y)


@dataclass
class VelocityField:
    vx: np.ndarray
    vy: np.ndarray
    valid: np.ndarray


@dataclass
class DisplacementSignal:
    point: Point | None
    dx: np.ndarray
    dy: np.ndarray
    fps: float
    units: str = "px"
    gaps: int = 0

    def __post_init__(self):
        self.dx = np.asarray(self.dx, dtype=np.float64)
        self.dy = np.asarray(self.dy, dtype=np.float64)
        if self.dx.shape != self.dy.shape or self.dx.ndim != 1:
            raise ValueError("dx and dy must be 1D series of equal length")
        if self.units not in ("px", "mm"):
            raise ValueError(f"units must be 'px' or 'mm', got {self.units!r}")

    def __len__(self) -> int:
        return self.dx.size

    @property
    def t_s(self) -> np.ndarray:
        return np.arange(self.dx.size) / self.fps


def _velocity(c_prev, c_curr, plus_prev, minus_prev, plus_curr, minus_curr, slope_floor):
    dphi_dt = np.angle(c_curr * np.conj(c_prev))
    dphi_ds = 0.5 * np.angle(plus_prev * np.conj(minus_prev) + plus_curr * np.conj(minus_curr))
    ok = np.abs(dphi_ds) >= slope_floor
    v = np.zeros_like(dphi_dt)
    np.divide(-dphi_dt, dphi_ds, out=v, where=ok)
    return v, ok


def _neighbours(r: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    # plus[i] = r[i + 1], minus[i] = r[i - 1] along axis; wrapped edges lie in the invalid border
    return np.roll(r, -1, axis=axis), np.roll(r, 1, axis=axis)


def phase_velocity(resp_prev: QuadratureResponse, resp_curr: QuadratureResponse,
                   slope_floor: float = DEFAULT_SLOPE_FLOOR) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel velocity (px/frame) along the responses' orientation.

    Returns ``(v, valid)``; ``v`` is 0 wherever ``valid`` is False.
    """
    if resp_prev.theta != resp_curr.theta:
        raise ValueError("responses have different orientations")
    if resp_prev.real.shape != resp_curr.real.shape:
        raise ValueError("responses have different dimensions")
    axis = 1 if resp_prev.theta == 0.0 else 0
    rp, rc = resp_prev.complex, resp_curr.complex
    pp, mp = _neighbours(rp, axis)
    pc, mc = _neighbours(rc, axis)
    v, ok = _velocity(rp, rc, pp, mp, pc, mc, slope_floor)
    valid = ok & resp_prev.valid & resp_curr.valid
    v[~valid] = 0.0
    return v, valid


def velocity_field(prev: Sequence[QuadratureResponse], curr: Sequence[QuadratureResponse],
                   slope_floor: float = DEFAULT_SLOPE_FLOOR) -> VelocityField:
    """Combine the 0 and pi/2 responses of two frames into (vx, vy)."""
    vx, okx = phase_velocity(prev[0], curr[0], slope_floor)
    vy, oky = phase_velocity(prev[1], curr[1], slope_floor)
    return VelocityField(vx=vx, vy=vy, valid=okx & oky)


def integrate_velocity(v: Iterable[float], valid: Iterable[bool] | None = None) -> tuple[np.ndarray, int]:
    """Cumulative displacement from per-frame velocities.

    ``v[k]`` is the motion from frame k to k+1, so n velocities give n+1
    displacement samples with ``d[0] = 0``. Invalid or non-finite samples
    are replaced by 0; the number replaced is returned alongside.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    bad = ~np.isfinite(v)
    if valid is not None:
        bad |= ~np.asarray(valid, dtype=bool).ravel()
    v = np.where(bad, 0.0, v)
    d = np.empty(v.size + 1)
    d[0] = 0.0
    np.cumsum(v, out=d[1:])
    return d, int(bad.sum())


def scale_from_marker(width_px: float, width_mm: float) -> float:
    """mm-per-pixel factor from a marker of known physical width."""
    if not (width_px > 0 and width_mm > 0):
        raise ValueError("marker widths must be positive")
    return width_mm / width_px


def to_units(sig: DisplacementSignal, scale: float) -> DisplacementSignal:
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    if sig.units != "px":
        raise ValueError("signal is already in mm")
    return replace(sig, dx=sig.dx * scale, dy=sig.dy * scale, units="mm")


# --- per-point measurement --------------------------------------------------------

class _PointSampler:
    """Filters whole frames and keeps the complex response at each point and its two neighbours along s."""

    def __init__(self, bank: Sequence[KernelPair], points: np.ndarray, shape: tuple[int, int]):
        self.bank = bank
        self.xs = points[:, 0]
        self.ys = points[:, 1]
        self.inside = [border_mask(shape, k.border)[self.ys, self.xs] for k in bank]

    def __call__(self, frame: np.ndarray):
        out = []
        for k, inside in zip(self.bank, self.inside):
            real, imag = filter_frame(frame, k)
            floor = default_amplitude_floor(frame, k)
            xs, ys = self.xs, self.ys
            if k.axis == 1:
                idx = [(ys, xs), (ys, xs + 1), (ys, xs - 1)]
            else:
                idx = [(ys, xs), (ys + 1, xs), (ys - 1, xs)]
            c, plus, minus = (real[i] + 1j * imag[i] for i in idx)
            out.append((c, plus, minus, inside & (np.abs(c) > floor)))
        return out


def pixel_velocities(seq: FrameSequence, points: np.ndarray, sigma_px: float = 2.0,
                     slope_floor: float = DEFAULT_SLOPE_FLOOR, threads: int | None = None):
    """Velocity series at integer pixel ``points`` (n, 2) as (x, y).

    Returns ``(vx, vy, okx, oky)``, each shaped (T-1, n).
    """
    points = np.asarray(points, dtype=np.intp).reshape(-1, 2)
    if seq.n_frames < 2:
        raise DataError("need at least 2 frames for motion analysis")
    h, w = seq.height, seq.width
    if points.size and (points[:, 0].min() < 1 or points[:, 1].min() < 1
                        or points[:, 0].max() > w - 2 or points[:, 1].max() > h - 2):
        raise ValueError("points must lie at least 1 px inside the frame")
    bank = make_filter_bank(sigma_px)
    sampler = _PointSampler(bank, points, (h, w))
    n_t, n = seq.n_frames, len(points)
    vel = np.zeros((2, n_t - 1, n))
    ok = np.zeros((2, n_t - 1, n), dtype=bool)

    prev = None
    for start in range(0, n_t, _CHUNK):
        batch = ordered_map(sampler, seq.frames[start:start + _CHUNK], threads)
        for j, curr in enumerate(batch):
            t = start + j
            if prev is not None:
                for o in range(2):
                    cp, pp, mp, vp = prev[o]
                    cc, pc, mc, vc = curr[o]
                    v, good = _velocity(cp, cc, pp, mp, pc, mc, slope_floor)
                    good &= vp & vc
                    vel[o, t - 1] = np.where(good, v, 0.0)
                    ok[o, t - 1] = good
            prev = curr
    return vel[0], vel[1], ok[0], ok[1]


def pixel_signals(seq: FrameSequence, points: Iterable[Point], sigma_px: float = 2.0,
                  slope_floor: float = DEFAULT_SLOPE_FLOOR, threads: int | None = None) -> dict[Point, DisplacementSignal]:
    """Integrated displacement signal (in px) at every requested pixel."""
    pts = [(int(x), int(y)) for x, y in points]
    if not pts:
        return {}
    vx, vy, okx, oky = pixel_velocities(seq, np.array(pts), sigma_px, slope_floor, threads)
    out = {}
    for i, p in enumerate(pts):
        dx, gx = integrate_velocity(vx[:, i], okx[:, i])
        dy, gy = integrate_velocity(vy[:, i], oky[:, i])
        out[p] = DisplacementSignal(point=p, dx=dx, dy=dy, fps=seq.fps, gaps=gx + gy)
    gaps = sum(s.gaps for s in out.values())
    if gaps:
        log.info("%d invalid velocity samples zeroed across %d points", gaps, len(out))
    return out


# --- CSV ---------------------------------------------------------------------------

def write_signal_csv(sig: DisplacementSignal, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "dx", "dy", "units"])
        for t, a, b in zip(sig.t_s, sig.dx, sig.dy):
            w.writerow([fmt(t), fmt(a), fmt(b), sig.units])
    return path


def read_signal_csv(path: str | Path, fps: float | None = None) -> DisplacementSignal:
    """Load a ``t_s,dx,dy,units`` CSV; fps is inferred from the time column if not given."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"signal file not found: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"t_s", "dx", "dy"} <= set(rows[0]):
        raise DataError(f"{path}: expected header t_s,dx,dy,units")
    t = np.array([float(r["t_s"]) for r in rows])
    units = rows[0].get("units") or "px"
    if fps is None:
        if t.size < 2:
            raise DataError(f"{path}: cannot infer sampling rate from one row")
        fps = float(fmt((t.size - 1) / (t[-1] - t[0])))
    return DisplacementSignal(point=None, dx=[float(r["dx"]) for r in rows],
                              dy=[float(r["dy"]) for r in rows], fps=fps, units=units)
