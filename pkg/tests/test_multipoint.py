import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image
from scipy.special import erf

from conftest import static_sequence, tone_sequence
from phasevib._util import DataError
from phasevib.displacement import DisplacementSignal
from phasevib.features import FeatureSet, Roi
from phasevib.frame_io import FrameSequence, make_pattern, render_motion
from phasevib.multipoint import (
    LEGEND_ROWS,
    FrequencyMap,
    WeightKernel,
    binomial_kernel,
    colormap_lut,
    dominant_frequency_map,
    frequency_from_color,
    frequency_to_index,
    mean_signal,
    measure_points,
    parse_kernel,
    patch_signal,
    patch_weights,
    read_frequency_map_csv,
    render_frequency_map,
    uniform_kernel,
    write_frequency_map_csv,
    write_png,
)


def _sig(p, dx, fps=30.0):
    dx = np.asarray(dx, dtype=np.float64)
    return DisplacementSignal(p, dx=dx, dy=np.zeros_like(dx), fps=fps)


def test_binomial_kernels():
    assert np.array_equal(binomial_kernel(3).k, [[1, 2, 1], [2, 4, 2], [1, 2, 1]])
    assert binomial_kernel(5).k[2, 2] == 36 and binomial_kernel(5).k.sum() == 256
    assert parse_kernel("5x5").size == 5 and parse_kernel("uniform-3").k.sum() == 9


@pytest.mark.parametrize("bad", [
    np.ones((2, 2)),
    np.ones((3, 4)),
    [[0, 0, 0], [0, 0, 0], [0, 0, 0]],
    [[1, 1, 1], [1, 1, 2], [1, 1, 1]],       # asymmetric
    [[2, 2, 2], [2, 1, 2], [2, 2, 2]],       # grows away from the centre
    [[1, -1, 1], [1, 4, 1], [1, -1, 1]],
])
def test_invalid_kernels_are_rejected(bad):
    with pytest.raises(ValueError):
        WeightKernel(np.asarray(bad, dtype=float))


def test_parse_kernel_from_file(tmp_path):
    path = tmp_path / "k.txt"
    path.write_text("1 2 1\n2 5 2\n1 2 1\n")
    assert parse_kernel(str(path)).k[1, 1] == 5
    with pytest.raises(ValueError):
        parse_kernel("7x7x7")


def test_lone_feature_keeps_its_own_signal():
    s = _sig((5, 5), np.sin(np.arange(70)))
    out = patch_signal((5, 5), {(5, 5): s, (20, 20): _sig((20, 20), np.ones(70))}, None, binomial_kernel(5))
    assert np.array_equal(out.dx, s.dx)


def test_equal_weights_give_the_average():
    rng = np.random.default_rng(0)
    a, b = _sig((5, 5), rng.normal(size=70)), _sig((6, 5), rng.normal(size=70))
    out = patch_signal((5, 5), {(5, 5): a, (6, 5): b}, None, uniform_kernel(3))
    assert np.allclose(out.dx, (a.dx + b.dx) / 2, rtol=0, atol=1e-15)


def test_patch_respects_feature_set_and_reports_empty():
    a, b = _sig((5, 5), np.ones(70)), _sig((6, 5), np.zeros(70))
    roi = Roi(0, 0, 20, 20)
    only_a = FeatureSet([(5, 5, 1.0)], roi)
    assert np.array_equal(patch_signal((5, 5), {(5, 5): a, (6, 5): b}, only_a, binomial_kernel(3)).dx, a.dx)
    assert patch_signal((15, 15), {(5, 5): a}, None, binomial_kernel(3)) is None


@pytest.mark.parametrize("m", [25, 9, 4])
def test_monte_carlo_variance_matches_sum_of_squared_weights(m):
    rng = np.random.default_rng(m)
    kernel = binomial_kernel(5)
    cells = [(x, y) for y in range(8, 13) for x in range(8, 13)]
    chosen = [cells[i] for i in sorted(rng.choice(25, size=m, replace=False))]
    if (10, 10) not in chosen:
        chosen[0] = (10, 10)
    n = 20_000
    sigs = {p: _sig(p, rng.normal(size=n)) for p in chosen}
    w = np.array([wt for _, wt in patch_weights((10, 10), set(chosen), kernel)])
    out = patch_signal((10, 10), sigs, None, kernel)
    expected = float(np.sum(w ** 2))
    assert out.dx.var() == pytest.approx(expected, rel=0.1)
    assert expected < 1


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), side=st.sampled_from([3, 5, 7]), density=st.floats(0.05, 1.0))
def test_weights_normalise_and_patch_is_convex(seed, side, density):
    rng = np.random.default_rng(seed)
    kernel = binomial_kernel(side) if seed % 2 else uniform_kernel(side)
    pts = {(x, y) for x in range(12) for y in range(12) if rng.random() < density} | {(6, 6)}
    weights = patch_weights((6, 6), pts, kernel)
    assert abs(sum(w for _, w in weights) - 1.0) <= 4 * np.finfo(float).eps
    sigs = {p: _sig(p, rng.normal(size=16)) for p in pts}
    out = patch_signal((6, 6), sigs, None, kernel).dx
    stack = np.array([sigs[p].dx for p, _ in weights])
    assert np.all(out >= stack.min(axis=0) - 1e-12) and np.all(out <= stack.max(axis=0) + 1e-12)


def test_measure_static_sequence_is_zero():
    sigs = measure_points(static_sequence(n_frames=70))
    assert sigs
    assert all(np.max(np.abs(s.dx)) < 1e-6 and np.max(np.abs(s.dy)) < 1e-6 for s in sigs.values())


def test_measure_tone_every_feature_at_the_tone():
    seq = tone_sequence(0.3, 2.67, size=(64, 64))
    sigs = measure_points(seq)
    fmap = dominant_frequency_map(sigs)
    assert len(fmap.entries) == len(sigs) > 10
    assert np.all(np.abs(fmap.freqs - 2.67) <= 0.1)


def test_measure_is_independent_of_threads():
    seq = tone_sequence(0.2, 2.0, n_frames=80, size=(48, 48))
    a, b = measure_points(seq, threads=1), measure_points(seq, threads=3)
    assert list(a) == list(b)
    assert all(np.array_equal(a[p].dx, b[p].dx) and np.array_equal(a[p].dy, b[p].dy) for p in a)


def test_measure_errors():
    flat = FrameSequence(np.full((70, 40, 40), 0.5), fps=30.0)
    with pytest.raises(DataError):
        measure_points(flat)
    with pytest.raises(ValueError):
        measure_points(static_sequence(n_frames=70), Roi(0, 0, 10, 10))


def _two_region_sequence(fps=60.0, n_frames=600, size=(128, 64)):
    """Left textured block moves at 1 Hz, right block at 3 Hz, flat band between them."""
    w, h = size
    plaid = make_pattern("sinusoid-grating", w, h)

    def window(x, lo, hi):
        return 0.25 * (1 + erf((x - lo) / 2.0)) * (1 - erf((x - hi) / 2.0))

    left = lambda x, y: 0.5 + (plaid(x, y) - 0.5) * window(x, -50, 48)
    right = lambda x, y: 0.5 + (plaid(x, y) - 0.5) * window(x, 80, w + 50)
    a = render_motion(left, w, h, fps, n_frames, lambda t: (0.3 * np.sin(2 * np.pi * 1.0 * t / fps), 0.0))
    b = render_motion(right, w, h, fps, n_frames, lambda t: (0.3 * np.sin(2 * np.pi * 3.0 * t / fps), 0.0))
    return FrameSequence(np.clip(a.frames + b.frames - 0.5, 0, 1), fps=fps)


def test_two_region_scene_reports_each_region_frequency():
    seq = _two_region_sequence()
    sigs = measure_points(seq)
    fmap = dominant_frequency_map(sigs)
    bin_hz = seq.fps / seq.n_frames
    left = [f for x, _, f in fmap.entries if x < 64]
    right = [f for x, _, f in fmap.entries if x >= 64]
    assert len(left) > 5 and len(right) > 5
    assert all(abs(f - 1.0) <= bin_hz for f in left)
    assert all(abs(f - 3.0) <= bin_hz for f in right)
    off = [f for f in fmap.freqs if min(abs(f - 1.0), abs(f - 3.0)) > bin_hz]
    assert off == []


def test_identical_signals_give_constant_map():
    t = np.arange(128)
    s = {(x, 4): _sig((x, 4), np.sin(2 * np.pi * 2.5 * t / 30.0)) for x in range(3, 9)}
    assert len(set(dominant_frequency_map(s).freqs)) == 1


def test_mean_signal_is_ordered_average():
    s = {(1, 2): _sig((1, 2), [0.0, 1.0]), (0, 3): _sig((0, 3), [0.0, 3.0])}
    assert np.array_equal(mean_signal(s).dx, [0.0, 2.0])
    with pytest.raises(DataError):
        mean_signal({})


def _fmap(freqs, fps=30.0, f_min=0.3):
    return FrequencyMap([(2 + i, 3, f) for i, f in enumerate(freqs)], None, fps=fps, f_min=f_min)


def test_render_single_frequency_single_hue():
    img = render_frequency_map(_fmap([2.0, 2.0, 2.0]), np.full((10, 12), 0.5))
    colours = {tuple(img[3, x]) for x in (2, 3, 4)}
    assert len(colours) == 1
    assert img.shape == (10 + LEGEND_ROWS, 12, 3)
    assert tuple(img[0, 0]) == (128, 128, 128)


def test_render_endpoints_get_endpoint_hues():
    lut = colormap_lut()
    img = render_frequency_map(_fmap([0.3, 15.0]), np.zeros((8, 8)))
    assert tuple(img[3, 2]) == tuple(lut[0]) and tuple(img[3, 3]) == tuple(lut[-1])
    assert tuple(lut[0]) == (0, 0, 255) and tuple(lut[-1]) == (255, 0, 0)
    # the legend strip runs from the low colour on the left to the high colour on the right
    assert tuple(img[-1, 0]) == tuple(lut[0]) and tuple(img[-1, -1]) == tuple(lut[-1])


@settings(max_examples=60, deadline=None)
@given(f=st.floats(0.3, 15.0))
def test_colour_round_trip_within_one_step(f):
    lut = colormap_lut()
    colour = lut[frequency_to_index(f, 0.3, 15.0)]
    assert abs(frequency_from_color(colour, 0.3, 15.0) - f) <= (15.0 - 0.3) / 255


def test_frequency_map_csv_and_png(tmp_path):
    fmap = _fmap([1.0, 2.5])
    path = write_frequency_map_csv(fmap, tmp_path / "m.csv")
    assert path.read_text().splitlines() == ["x,y,freq_hz", "2,3,1", "3,3,2.5"]
    back = read_frequency_map_csv(path, fps=30.0)
    assert back.entries == fmap.entries
    img = render_frequency_map(fmap, np.zeros((6, 6)))
    assert np.array_equal(np.asarray(Image.open(write_png(img, tmp_path / "m.png"))), img)
