import math

import numpy as np
import pytest

from phasevib.frame_io import FrameSequence, make_pattern, render_motion

OMEGA0 = math.sqrt(2.0) / 2.0  # filter peak (rad/px) at the default sigma of 2 px
WAVELENGTH = 2.0 * math.pi / OMEGA0

_RESULTS_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = config.stash.get(_RESULTS_KEY, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(rows, key=lambda r: r[0]):
        terminalreporter.write_line(line[1])


@pytest.fixture
def record(request, capsys):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def _record(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        request.config.stash[_RESULTS_KEY].append((number, line))
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line

    return _record


def grating(x, y, wavelength=WAVELENGTH):
    """Horizontal-only sinusoid, for filter tests that need texture along x alone."""
    return 0.5 + 0.4 * np.sin(2.0 * math.pi * x / wavelength)


def tone_sequence(amp, freq, fps=60.0, n_frames=600, size=(64, 64), direction=(1.0, 0.0),
                  pattern="sinusoid-grating", noise=0.0, seed=0) -> FrameSequence:
    w, h = size
    pat = make_pattern(pattern, w, h)
    amps = np.atleast_1d(amp)
    freqs = np.atleast_1d(freq)

    def disp(t):
        s = float(np.sum(amps * np.sin(2.0 * np.pi * freqs * t / fps)))
        return direction[0] * s, direction[1] * s

    return render_motion(pat, w, h, fps, n_frames, disp, noise, seed)


def static_sequence(n_frames=80, size=(48, 48), fps=30.0) -> FrameSequence:
    return tone_sequence(0.0, 1.0, fps=fps, n_frames=n_frames, size=size)


def half_sine_sequence(amp=0.05, freq=2.0, fps=60.0, n_frames=600, size=(160, 64), x0=24, length=112):
    """Vertical vibration whose amplitude follows sin(pi (x - x0) / L) between two fixed ends."""
    w, h = size
    x = np.arange(w, dtype=np.float64)
    shape = np.where((x >= x0) & (x <= x0 + length), np.sin(np.pi * (x - x0) / length), 0.0)
    shape = np.broadcast_to(shape, (h, w))
    pat = make_pattern("sinusoid-grating", w, h)

    def disp(t):
        return 0.0, amp * math.sin(2.0 * math.pi * freq * t / fps) * shape

    return render_motion(pat, w, h, fps, n_frames, disp)


def half_sine_line(x0=24, length=112, n=9, y=32):
    xs = [int(round(x0 + length * i / (n - 1))) for i in range(n)]
    return [(x, y) for x in xs], np.sin(np.pi * (np.array(xs) - x0) / length)
