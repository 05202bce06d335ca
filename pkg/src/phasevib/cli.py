"""Command-line front end.

Every subcommand accepts ``--config FILE`` with ``key=value`` lines named
after the long options (``alpha=10``, ``roi=S1:0,0,64,64;S2:64,0,64,64``);
options given on the command line override the file.

Exit codes: 0 success, 2 invalid configuration, 3 data error, 4 internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from ._util import DataError, fmt
from .displacement import DisplacementSignal, read_signal_csv, to_units, write_signal_csv
from .features import Roi, write_features_csv, write_overlay
from .frame_io import (
    PATTERNS,
    SyntheticMotionSpec,
    load_sequence,
    make_pattern,
    render_motion,
    save_sequence,
    synthesize,
)
from .magnify import (
    FrequencyBand,
    band_report_json,
    extract_ods,
    feature_mode_frequencies,
    line_points,
    magnify,
    select_band,
    write_ods_csv,
)
from .multipoint import (
    DEFAULT_F_MIN,
    detect_features,
    dominant_frequency_map,
    mean_signal,
    measure_points,
    parse_kernel,
    read_frequency_map_csv,
    render_frequency_map,
    write_frequency_map_csv,
    write_png,
)
from .spectral import dominant_frequency, fft_spectrum, modes_to_json, nrmse, pick_modes, resample, write_spectrum_csv
from .steerable import kernel_taps

log = logging.getLogger("phasevib")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4

_PATTERN_ALIASES = {"grating": "sinusoid-grating", "checker": "checkerboard", "blob": "gaussian-blob"}
_BOOL_KEYS = {"auto", "point_signals", "verbose"}


class ConfigError(ValueError):
    pass


# --- argument helpers --------------------------------------------------------------

def _floats(text: str) -> list[float]:
    return [float(v) for v in str(text).replace(" ", "").split(",") if v]


def _pair(text: str) -> tuple[float, float]:
    vals = _floats(text)
    if len(vals) != 2:
        raise ConfigError(f"expected two comma-separated numbers, got {text!r}")
    return vals[0], vals[1]


def _named_rois(values) -> list[tuple[str, Roi]]:
    if values is None:
        return []
    if isinstance(values, str):
        values = [v for v in values.split(";") if v.strip()]
    out = []
    for i, v in enumerate(values):
        name, sep, rect = v.partition(":")
        if not sep:
            name, rect = f"roi{i + 1}", v
        out.append((name.strip(), Roi.parse(rect)))
    return out


def _line(text: str | None) -> list[tuple[int, int]] | None:
    if not text:
        return None
    pts = []
    for item in text.split(";"):
        x, y = _pair(item)
        pts.append((int(x), int(y)))
    return pts


def _read_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    values = {}
    for lineno, raw in enumerate(p.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{p}:{lineno}: expected key=value")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key in _BOOL_KEYS:
            values[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            values[key] = value
    return values


def _axis_of(sig: DisplacementSignal, axis: str, f_min: float) -> np.ndarray:
    if axis == "x":
        return sig.dx
    if axis == "y":
        return sig.dy
    mx = dominant_frequency(fft_spectrum(sig.dx, sig.fps), f_min)[1]
    my = dominant_frequency(fft_spectrum(sig.dy, sig.fps), f_min)[1]
    return sig.dx if mx >= my else sig.dy


def _out_dir(args) -> Path:
    if not args.out:
        raise ConfigError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(args, *names):
    for n in names:
        if getattr(args, n, None) in (None, ""):
            raise ConfigError(f"--{n.replace('_', '-')} is required")


def _harris(args) -> dict:
    return dict(k=args.harris_k, window_sigma=args.window_sigma, threshold_rel=args.threshold_rel,
                nms_radius=args.nms_radius)


# --- commands ------------------------------------------------------------------------

def cmd_synth(args) -> int:
    _require(args, "out")
    pattern = _PATTERN_ALIASES.get(args.pattern, args.pattern)
    amps, freqs = _floats(args.amp), _floats(args.freq)
    if len(amps) != len(freqs):
        raise ConfigError("--amp and --freq need the same number of comma-separated values")
    if args.fps <= 0 or args.dur <= 0:
        raise ConfigError("--fps and --dur must be > 0")
    direction = _pair(args.direction)
    for f in freqs:
        if f >= args.fps / 2.0:
            raise ConfigError(f"motion frequency {f} Hz violates Nyquist for {args.fps} fps")
    if len(amps) == 1 and args.shape == "rigid":
        spec = SyntheticMotionSpec(pattern=pattern, amplitude_px=amps[0], freq_hz=freqs[0], phase0=args.phase0,
                                   direction=direction, duration_s=args.dur, noise_sigma=args.noise,
                                   wavelength_px=args.wavelength, seed=args.seed)
        seq = synthesize(spec, args.width, args.height, args.fps)
    else:
        if any(a < 0 for a in amps):
            raise ConfigError("amplitudes must be >= 0")
        norm = math.hypot(*direction)
        ux, uy = direction[0] / norm, direction[1] / norm
        n_frames = int(round(args.dur * args.fps))
        pat = make_pattern(pattern, args.width, args.height, args.wavelength)
        if args.shape == "half-sine":
            x = np.arange(args.width, dtype=np.float64)
            margin = kernel_taps(2.0)
            span = max(args.width - 1 - 2 * margin, 1)
            profile = np.clip(np.sin(np.pi * (x - margin) / span), 0.0, None)
            profile[(x < margin) | (x > margin + span)] = 0.0
            profile = np.broadcast_to(profile, (args.height, args.width))
        else:
            profile = 1.0

        def disp(t):
            s = sum(a * math.sin(2 * math.pi * f * t / args.fps + args.phase0) for a, f in zip(amps, freqs))
            return ux * s * profile, uy * s * profile
        seq = render_motion(pat, args.width, args.height, args.fps, n_frames, disp, args.noise, args.seed)
    seq.scale = args.scale
    manifest = save_sequence(seq, args.out, threads=args.threads)
    print(f"wrote {seq.n_frames} frames to {manifest}")
    return EXIT_OK


def cmd_features(args) -> int:
    _require(args, "input")
    out = _out_dir(args)
    seq = load_sequence(args.input)
    roi = Roi.parse(args.roi) if args.roi else None
    feats = detect_features(seq, roi, args.sigma, **_harris(args))
    write_features_csv(feats, out / "features.csv")
    write_overlay(seq.frames[0], feats, out / "features_overlay.pgm")
    print(f"{len(feats)} feature points")
    return EXIT_OK


def cmd_measure(args) -> int:
    _require(args, "input")
    out = _out_dir(args)
    seq = load_sequence(args.input)
    if seq.n_frames < 64:
        raise DataError(f"sequence has {seq.n_frames} frames; spectra need at least 64")
    roi = Roi.parse(args.roi) if args.roi else None
    feats = detect_features(seq, roi, args.sigma, **_harris(args))
    signals = measure_points(seq, roi, parse_kernel(args.kernel), args.sigma, args.slope_floor,
                             features=feats, threads=args.threads)
    write_features_csv(feats, out / "features.csv")

    avg = mean_signal(signals)
    scale = args.scale if args.scale is not None else seq.scale
    write_signal_csv(to_units(avg, scale) if scale else avg, out / "signals.csv")
    if args.point_signals:
        _write_point_signals(signals, out / "point_signals.csv")

    series = _axis_of(avg, args.axis, args.f_min)
    spec = fft_spectrum(series, seq.fps, args.window)
    write_spectrum_csv(spec, out / "spectrum.csv")
    modes = pick_modes(spec, args.max_modes, args.f_min, args.min_sep)
    (out / "modes.json").write_text(modes_to_json(modes))

    fmap = dominant_frequency_map(signals, roi, args.f_min)
    write_frequency_map_csv(fmap, out / "freqmap.csv")
    write_png(render_frequency_map(fmap, seq.frames[0]), out / "freqmap.png")
    top = f"{modes[0].freq_hz:.6g} Hz" if modes else "none"
    print(f"{len(signals)} feature signals; top mode {top}")
    return EXIT_OK


def _write_point_signals(signals, path: Path) -> None:
    with path.open("w") as fh:
        fh.write("x,y,t_s,dx,dy,units\n")
        for (x, y) in sorted(signals, key=lambda p: (p[1], p[0])):
            s = signals[(x, y)]
            for t, a, b in zip(s.t_s, s.dx, s.dy):
                fh.write(f"{x},{y},{fmt(t)},{fmt(a)},{fmt(b)},{s.units}\n")


def cmd_spectrum(args) -> int:
    _require(args, "signal")
    out = _out_dir(args)
    sig = read_signal_csv(args.signal)
    spec = fft_spectrum(_axis_of(sig, args.axis, args.f_min), sig.fps, args.window)
    write_spectrum_csv(spec, out / "spectrum.csv")
    modes = pick_modes(spec, args.max_modes, args.f_min, args.min_sep)
    (out / "modes.json").write_text(modes_to_json(modes))
    print(modes_to_json(modes), end="")
    return EXIT_OK


def cmd_map(args) -> int:
    _require(args, "input", "freqmap")
    seq = load_sequence(args.input)
    fmap = read_frequency_map_csv(args.freqmap, seq.fps, args.f_min)
    out = Path(args.out or "freqmap.png")
    write_png(render_frequency_map(fmap, seq.frames[0], args.f_max), out)
    print(f"wrote {out}")
    return EXIT_OK


def _roi_bands(seq, roi, args) -> list[FrequencyBand]:
    signals = measure_points(seq, roi, parse_kernel(args.kernel), args.sigma, args.slope_floor,
                             threads=args.threads, **_harris(args))
    if args.modes <= 1:
        freqs = [f for _, _, f in dominant_frequency_map(signals, roi, args.f_min).entries]
        return [select_band(freqs, args.epsilon, seq.fps, seq.n_frames, args.f_min)]
    avg = mean_signal(signals)
    ref_modes = pick_modes(fft_spectrum(_axis_of(avg, "auto", args.f_min), seq.fps), args.modes, args.f_min,
                           args.min_sep)
    if not ref_modes:
        raise DataError(f"no spectral modes found in ROI {roi}")
    per_mode = feature_mode_frequencies(signals, [m.freq_hz for m in ref_modes], args.f_min)
    return [select_band(f, args.epsilon, seq.fps, seq.n_frames, args.f_min) for f in per_mode if f]


def cmd_bands(args) -> int:
    _require(args, "input")
    seq = load_sequence(args.input)
    rois = _named_rois(args.roi) or [("full", None)]
    report = {name: _roi_bands(seq, roi, args) for name, roi in rois}
    text = band_report_json(report)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_magnify(args) -> int:
    _require(args, "input", "alpha")
    out = _out_dir(args)
    seq = load_sequence(args.input)
    roi = Roi.parse(args.roi) if args.roi else None
    if args.auto:
        band = _roi_bands(seq, roi, argparse.Namespace(**{**vars(args), "modes": 1}))[0]
    elif args.band:
        band = FrequencyBand(*_pair(args.band))
    else:
        raise ConfigError("give --band LO,HI or --auto")
    band.check(seq.fps)
    magnified = magnify(seq, roi, band, args.alpha, args.sigma, threads=args.threads)
    save_sequence(magnified, out / "magnified", threads=args.threads)
    (out / "band.json").write_text(band_report_json({"roi": [band]}) if band.mu is not None else
                                   json.dumps({"lo_hz": float(fmt(band.lo_hz)), "hi_hz": float(fmt(band.hi_hz))},
                                              indent=2) + "\n")
    line = _line(args.line)
    if line is None:
        # one full kernel width in from the ROI edge, clear of the unprocessed border ring
        line = line_points(roi or Roi.full((seq.height, seq.width)), args.ods_points, kernel_taps(args.sigma))
    profile = extract_ods(magnified, line, band, args.sigma, threads=args.threads)
    write_ods_csv(profile, out / "ods.csv")
    print(f"magnified [{band.lo_hz:.6g}, {band.hi_hz:.6g}] Hz by {args.alpha:g}; ODS along {profile.axis}")
    return EXIT_OK


def cmd_compare(args) -> int:
    _require(args, "a", "b")
    a, b = read_signal_csv(args.a), read_signal_csv(args.b)
    if a.units != b.units:
        raise DataError(f"unit mismatch: {a.units} vs {b.units}")
    xa = _axis_of(a, args.axis, args.f_min)
    xb = _axis_of(b, args.axis, args.f_min)
    if not math.isclose(a.fps, b.fps, rel_tol=1e-9):
        xb = resample(xb, b.fps, a.fps)
    n = min(xa.size, xb.size)
    xa, xb = xa[:n], xb[:n]
    result = {"nrmse_percent": float(fmt(nrmse(xa, xb)))}
    ma = pick_modes(fft_spectrum(xa, a.fps), args.max_modes, args.f_min, args.min_sep)
    mb = pick_modes(fft_spectrum(xb, a.fps), args.max_modes, args.f_min, args.min_sep)
    result["modes"] = [
        {"rank": p.rank, "freq_a_hz": float(fmt(p.freq_hz)), "freq_b_hz": float(fmt(q.freq_hz)),
         "diff_percent": float(fmt(100.0 * abs(p.freq_hz - q.freq_hz) / q.freq_hz))}
        for p, q in zip(ma, mb)
    ]
    text = json.dumps(result, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_OK


# --- parser ----------------------------------------------------------------------------

def _add_filter_opts(p):
    p.add_argument("--sigma", type=float, default=2.0, help="quadrature filter scale in px")
    p.add_argument("--slope-floor", type=float, default=0.02, help="min |dphi/ds| in rad/px")


def _add_harris_opts(p):
    p.add_argument("--harris-k", type=float, default=0.04)
    p.add_argument("--window-sigma", type=float, default=1.5)
    p.add_argument("--threshold-rel", type=float, default=0.01)
    p.add_argument("--nms-radius", type=int, default=3)


def _add_spectral_opts(p):
    p.add_argument("--f-min", type=float, default=DEFAULT_F_MIN, help="ignore bins at or below this (Hz)")
    p.add_argument("--max-modes", type=int, default=4)
    p.add_argument("--min-sep", type=float, default=0.25, help="minimum mode separation (Hz)")
    p.add_argument("--window", choices=("rect", "hann"), default="rect")
    p.add_argument("--axis", choices=("auto", "x", "y"), default="auto")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="phasevib", description="Video-based multi-point vibration measurement.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; command-line options override it")
    common.add_argument("--threads", type=int, default=1, help="worker threads (outputs do not depend on it)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("synth", parents=[common], help="render a synthetic vibrating sequence")
    p.add_argument("--pattern", default="grating", choices=sorted(set(PATTERNS) | set(_PATTERN_ALIASES)))
    p.add_argument("--amp", default="0.3", help="amplitude(s) in px, comma-separated for multi-tone")
    p.add_argument("--freq", default="2.67", help="frequency(ies) in Hz, matching --amp")
    p.add_argument("--phase0", type=float, default=0.0)
    p.add_argument("--direction", default="1,0", help="motion direction dx,dy")
    p.add_argument("--shape", choices=("rigid", "half-sine"), default="rigid",
                   help="spatial amplitude profile along x")
    p.add_argument("--fps", type=float, default=60.0)
    p.add_argument("--dur", type=float, default=10.0, help="duration in seconds")
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian luminance noise sigma")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--wavelength", type=float, default=SyntheticMotionSpec.wavelength_px)
    p.add_argument("--scale", type=float, default=None, help="mm per px recorded in the manifest")
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)
    subs["synth"] = p

    p = sub.add_parser("features", parents=[common], help="detect Harris feature points")
    p.add_argument("--input")
    p.add_argument("--roi", help="x0,y0,w,h (default: whole frame)")
    _add_filter_opts(p)
    _add_harris_opts(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_features)
    subs["features"] = p

    p = sub.add_parser("measure", parents=[common], help="multi-point displacement, modes and frequency map")
    p.add_argument("--input")
    p.add_argument("--roi", help="x0,y0,w,h (default: whole frame)")
    p.add_argument("--kernel", default="3x3", help="3x3 | 5x5 | uniform-N | path")
    p.add_argument("--scale", type=float, default=None, help="mm per px (default: manifest value)")
    p.add_argument("--point-signals", action="store_true", help="also write every feature's signal")
    _add_filter_opts(p)
    _add_harris_opts(p)
    _add_spectral_opts(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_measure)
    subs["measure"] = p

    p = sub.add_parser("spectrum", parents=[common], help="spectrum and modes of a signal CSV")
    p.add_argument("--signal")
    _add_spectral_opts(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_spectrum)
    subs["spectrum"] = p

    p = sub.add_parser("map", parents=[common], help="render a frequency map CSV over the first frame")
    p.add_argument("--input")
    p.add_argument("--freqmap")
    p.add_argument("--f-min", type=float, default=DEFAULT_F_MIN)
    p.add_argument("--f-max", type=float, default=None, help="top of the colour scale (default fps/2)")
    p.add_argument("--out", help="output PNG path")
    p.set_defaults(func=cmd_map)
    subs["map"] = p

    p = sub.add_parser("bands", parents=[common], help="automatic magnification bands per ROI")
    p.add_argument("--input")
    p.add_argument("--roi", action="append", help="NAME:x0,y0,w,h (repeatable; default: whole frame)")
    p.add_argument("--epsilon", type=float, default=2.0)
    p.add_argument("--modes", type=int, default=1, help="modes per ROI")
    p.add_argument("--kernel", default="3x3")
    p.add_argument("--f-min", type=float, default=DEFAULT_F_MIN)
    p.add_argument("--min-sep", type=float, default=0.25)
    _add_filter_opts(p)
    _add_harris_opts(p)
    p.add_argument("--out", help="band report JSON path")
    p.set_defaults(func=cmd_bands)
    subs["bands"] = p

    p = sub.add_parser("magnify", parents=[common], help="magnify motion in a band and extract the ODS")
    p.add_argument("--input")
    p.add_argument("--roi", help="x0,y0,w,h (default: whole frame)")
    p.add_argument("--band", help="LO,HI in Hz")
    p.add_argument("--auto", action="store_true", help="select the band from the ROI's feature frequencies")
    p.add_argument("--alpha", type=float, default=None, help="magnification factor (required)")
    p.add_argument("--epsilon", type=float, default=2.0)
    p.add_argument("--kernel", default="3x3")
    p.add_argument("--f-min", type=float, default=DEFAULT_F_MIN)
    p.add_argument("--line", help="ODS positions 'x,y;x,y;...' (default: ROI centre line)")
    p.add_argument("--ods-points", type=int, default=9)
    _add_filter_opts(p)
    _add_harris_opts(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_magnify)
    subs["magnify"] = p

    p = sub.add_parser("compare", parents=[common], help="NRMSE and mode differences of two signal CSVs")
    p.add_argument("--a", help="test signal CSV")
    p.add_argument("--b", help="reference signal CSV")
    _add_spectral_opts(p)
    p.add_argument("--out", help="result JSON path")
    p.set_defaults(func=cmd_compare)
    subs["compare"] = p
    return parser, subs


def parse_args(argv=None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        values = _read_config(args.config)
        sub = subs[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys for {args.command}: {', '.join(sorted(unknown))}")
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except ConfigError as exc:
        print(f"phasevib: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DataError as exc:
        print(f"phasevib: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FileNotFoundError, OSError) as exc:
        print(f"phasevib: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"phasevib: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the documented exit code
        log.exception("internal error")
        print(f"phasevib: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
