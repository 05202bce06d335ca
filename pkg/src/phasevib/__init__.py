"""Phase-based multi-point vibration measurement and motion magnification from video."""
from ._util import DataError
from .displacement import (
    DisplacementSignal,
    VelocityField,
    integrate_velocity,
    phase_velocity,
    pixel_signals,
    read_signal_csv,
    scale_from_marker,
    to_units,
    velocity_field,
    write_signal_csv,
)
from .features import FeatureSet, Roi, harris_corners, harris_response, write_features_csv
from .frame_io import (
    FrameSequence,
    SyntheticMotionSpec,
    analytic_displacement,
    load_sequence,
    make_pattern,
    render_motion,
    save_sequence,
    synthesize,
    to_grayscale,
)
from .magnify import (
    FrequencyBand,
    OdsProfile,
    extract_ods,
    magnify,
    ods_from_signals,
    select_band,
    temporal_bandpass,
)
from .multipoint import (
    FrequencyMap,
    WeightKernel,
    binomial_kernel,
    dominant_frequency_map,
    measure_points,
    patch_signal,
    patch_weights,
    render_frequency_map,
    uniform_kernel,
)
from .spectral import ModeEstimate, Spectrum, fft_spectrum, nrmse, pick_modes, resample
from .steerable import KernelPair, QuadratureResponse, analyze_frame, make_quadrature_kernels

__version__ = "0.1.0"

__all__ = [
    "DataError", "DisplacementSignal", "VelocityField", "integrate_velocity", "phase_velocity", "pixel_signals",
    "read_signal_csv", "scale_from_marker", "to_units", "velocity_field", "write_signal_csv",
    "FeatureSet", "Roi", "harris_corners", "harris_response", "write_features_csv",
    "FrameSequence", "SyntheticMotionSpec", "analytic_displacement", "load_sequence", "make_pattern",
    "render_motion", "save_sequence", "synthesize", "to_grayscale",
    "FrequencyBand", "OdsProfile", "extract_ods", "magnify", "ods_from_signals", "select_band",
    "temporal_bandpass",
    "FrequencyMap", "WeightKernel", "binomial_kernel", "dominant_frequency_map", "measure_points",
    "patch_signal", "patch_weights", "render_frequency_map", "uniform_kernel",
    "ModeEstimate", "Spectrum", "fft_spectrum", "nrmse", "pick_modes", "resample",
    "KernelPair", "QuadratureResponse", "analyze_frame", "make_quadrature_kernels",
]
