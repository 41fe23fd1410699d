"""Filter, envelope, STFT, and alignment checks."""

import numpy as np
import pytest

from nonce_lab.dsp import (
    FilterSpec,
    align_swaps,
    bandpass,
    detect_schedule,
    rectified_envelope,
    rectify_median,
    step_peak_groups,
    stft,
    write_windows_csv,
)
from nonce_lab.errors import AlignmentError, ConfigError
from nonce_lab.events import EventRecorder
from nonce_lab.ff_curve import (
    ProjectivePoint,
    Scalar,
    ladder_step,
    montgomery_ladder,
    double_and_always_add,
    point_double,
)
from nonce_lab.swap_impls import SwapKind, SwapVariant
from nonce_lab.tracesim import (
    LeakageTrace,
    MarkerTable,
    SimConfig,
    swap_windows,
    synthesize,
)

CENTER = SimConfig().f_mod


def tone_trace(freq, n=16384, fs=2.5e6, amplitude=1.0):
    t = np.arange(n) / fs
    return LeakageTrace(
        samples=amplitude * np.cos(2.0 * np.pi * freq * t),
        sample_rate=fs,
        markers=MarkerTable.empty(),
        meta={},
    )


def array_trace(samples, fs=2.5e6):
    return LeakageTrace(
        samples=np.asarray(samples, dtype=np.float64),
        sample_rate=fs,
        markers=MarkerTable.empty(),
        meta={},
    )


def scalar_mult_trace(curve, k, cfg, multiplier="ladder", variant=SwapKind.PLAIN):
    recorder = EventRecorder()
    scalar = Scalar.for_curve(k, curve)
    if multiplier == "ladder":
        montgomery_ladder(
            scalar, curve.generator, curve, SwapVariant(variant), recorder
        )
    else:
        base = ProjectivePoint.from_affine(*curve.generator, curve.field)
        double_and_always_add(
            scalar, base, curve, SwapVariant(variant), recorder
        )
    return synthesize(recorder, cfg, meta={"multiplier": multiplier})


def central_rms(x, fraction=0.5):
    n = x.size
    lo = int(n * (1 - fraction) / 2)
    return float(np.sqrt(np.mean(x[lo : n - lo] ** 2)))


def test_filter_spec_validation():
    with pytest.raises(ConfigError):
        FilterSpec(center=1e5, bandwidth=1e4, kind="lowpass")
    with pytest.raises(ConfigError):
        FilterSpec(center=1e4, bandwidth=3e4)
    with pytest.raises(ConfigError):
        bandpass(tone_trace(1e5), FilterSpec(center=1.2e6, bandwidth=2e5))


def test_bandpass_preserves_center_tone():
    spec = FilterSpec(center=CENTER, bandwidth=0.5 * CENTER)
    trace = tone_trace(CENTER)
    out = bandpass(trace, spec)
    ratio = central_rms(out.samples) / central_rms(trace.samples)
    assert 10 ** (-1 / 20) < ratio < 10 ** (1 / 20)


def test_bandpass_rejects_out_of_band_tone():
    spec = FilterSpec(center=CENTER, bandwidth=0.5 * CENTER)
    trace = tone_trace(2.0 * CENTER)
    out = bandpass(trace, spec)
    assert central_rms(out.samples) < 0.01 * central_rms(trace.samples)


def test_bandpass_of_silence_is_silence():
    spec = FilterSpec(center=CENTER, bandwidth=0.5 * CENTER)
    out = bandpass(array_trace(np.zeros(4096)), spec)
    assert np.all(out.samples == 0.0)


def test_rectify_median_keeps_constants():
    trace = array_trace(np.full(500, 2.5))
    out = rectify_median(trace, 15 / 2.5e6)
    assert np.array_equal(out.samples, trace.samples)


def test_rectify_median_removes_spikes_and_is_idempotent():
    x = np.ones(200)
    x[50] = 25.0
    assert np.array_equal(rectified_envelope(x, 15), np.ones(200))
    step = np.concatenate((np.ones(100), np.full(100, 5.0)))
    once = rectified_envelope(step, 15)
    assert np.array_equal(once, step)
    assert np.array_equal(rectified_envelope(once, 15), once)


def test_rectify_median_window_bounds():
    trace = array_trace(np.ones(100))
    with pytest.raises(ConfigError):
        rectify_median(trace, 2 / 2.5e6)
    with pytest.raises(ConfigError):
        rectify_median(trace, 101 / 2.5e6)


def test_stft_shape_and_parseval():
    rng = np.random.default_rng(3)
    x = rng.normal(0.0, 1.0, 1000)
    window, hop = 64, 9
    grid = stft(array_trace(x), window, hop)
    rows = (1000 - window) // hop + 1
    assert grid.shape == (rows, window // 2 + 1)
    frames = np.lib.stride_tricks.sliding_window_view(x, window)[::hop]
    for frame, row in zip(frames, grid):
        time_energy = np.sum(frame**2)
        freq_energy = (
            row[0] ** 2 + 2.0 * np.sum(row[1:-1] ** 2) + row[-1] ** 2
        ) / window
        assert abs(time_energy - freq_energy) <= 1e-6 * time_energy


def test_stft_tone_concentrates_in_one_bin():
    fs = 2.5e6
    window = 64
    tone_bin = 4
    trace = tone_trace(tone_bin * fs / window, n=2048, fs=fs)
    grid = stft(trace, window, 16)
    assert (np.argmax(grid, axis=1) == tone_bin).all()


def test_stft_validation_and_zero_input():
    trace = array_trace(np.zeros(256))
    assert np.all(stft(trace, 32, 4) == 0.0)
    with pytest.raises(ConfigError):
        stft(trace, 4, 4)
    with pytest.raises(ConfigError):
        stft(trace, 32, 0)
    with pytest.raises(ConfigError):
        stft(trace, 512, 4)


def test_stft_shows_step_block_structure(toy):
    recorder = EventRecorder()
    s = ProjectivePoint.from_affine(*toy.generator, toy.field)
    ladder_step(s, point_double(s, toy), toy.generator, toy, recorder)
    cfg = SimConfig(noise_sigma=0.0)
    trace = synthesize(recorder, cfg)
    # 16-sample frames resolve the add/sub gaps between peak groups
    grid = stft(trace, 16, 4)
    carrier_bin = round(cfg.f_mod * 16 / cfg.sample_rate)
    band = grid[:, carrier_bin]
    assert step_peak_groups(band, cfg.samples_per_event // 4) == [5, 2, 1, 2, 3, 1, 3, 3]


def test_align_clean_ladder_matches_ground_truth(toy):
    cfg = SimConfig(noise_sigma=0.0)
    trace = scalar_mult_trace(toy, 0x51F3, cfg)
    aligned = align_swaps(trace, toy, cfg)
    truth = swap_windows(trace)
    assert len(aligned) == toy.n.bit_length() == len(truth)
    for (start, end), window in zip(aligned.spans, truth):
        assert abs(start - window.start) <= 16
        assert abs(end - window.end) <= 16
    assert min(aligned.confidence) > 0.8


def test_align_clean_daa_matches_ground_truth(toy):
    cfg = SimConfig(noise_sigma=0.0)
    trace = scalar_mult_trace(toy, 0x9C31, cfg, multiplier="daa")
    aligned = align_swaps(trace, toy, cfg)
    truth = swap_windows(trace)
    assert len(aligned) == toy.n.bit_length() == len(truth)
    for (start, end), window in zip(aligned.spans, truth):
        assert abs(start - window.start) <= 16
        assert abs(end - window.end) <= 16


def test_align_wide_curve_ladder(p128):
    cfg = SimConfig(noise_sigma=0.0)
    trace = scalar_mult_trace(p128, 0xDEADBEEF12345678ABCDEF99, cfg)
    aligned = align_swaps(trace, p128, cfg)
    truth = swap_windows(trace)
    assert len(aligned) == p128.n.bit_length()
    for (start, end), window in zip(aligned.spans, truth):
        assert abs(start - window.start) <= 16
        assert abs(end - window.end) <= 16


def test_align_survives_default_noise(toy):
    cfg = SimConfig(seed=21)
    trace = scalar_mult_trace(toy, 0x51F3, cfg)
    aligned = align_swaps(trace, toy, cfg)
    truth = swap_windows(trace)
    assert len(aligned) == len(truth)
    for (start, end), window in zip(aligned.spans, truth):
        assert abs(start - window.start) <= 24
        assert abs(end - window.end) <= 24


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_align_tolerates_interruption(toy, seed):
    cfg = SimConfig(noise_sigma=0.0, interruption_prob=1.0, seed=seed)
    trace = scalar_mult_trace(toy, 0x51F3, cfg)
    aligned = align_swaps(trace, toy, cfg)
    assert len(aligned) == toy.n.bit_length()


def test_align_rejects_pure_noise(toy):
    rng = np.random.default_rng(8)
    trace = array_trace(rng.normal(0.0, 2.0, 40000))
    with pytest.raises(AlignmentError):
        align_swaps(trace, toy, SimConfig())


def test_align_single_step_and_peak_groups(toy):
    recorder = EventRecorder()
    s = ProjectivePoint.from_affine(*toy.generator, toy.field)
    ladder_step(s, point_double(s, toy), toy.generator, toy, recorder)
    cfg = SimConfig(noise_sigma=0.0)
    trace = synthesize(recorder, cfg)
    aligned = align_swaps(trace, toy, cfg)
    assert len(aligned.detected_pattern_positions) == 1
    envelope = rectified_envelope(trace.samples, 16)
    assert step_peak_groups(envelope, cfg.samples_per_event) == [5, 2, 1, 2, 3, 1, 3, 3]


def test_detect_schedule_roundtrip(toy):
    candidates = [1.8e6, 2.7e6]
    for f_cpu in candidates:
        cfg = SimConfig(f_cpu=f_cpu, noise_sigma=0.0)
        trace = scalar_mult_trace(toy, 0x51F3, cfg)
        found, match = detect_schedule(trace, candidates, SimConfig(), curve=toy)
        assert match
        assert found == f_cpu


def test_detect_schedule_rejects_noise(toy):
    rng = np.random.default_rng(5)
    trace = array_trace(rng.normal(0.0, 2.0, 40000))
    _, match = detect_schedule(trace, [1.8e6, 2.7e6], SimConfig(), curve=toy)
    assert not match


def test_windows_csv_is_deterministic(tmp_path, toy):
    cfg = SimConfig(noise_sigma=0.0)
    trace = scalar_mult_trace(toy, 0x51F3, cfg)
    aligned = align_swaps(trace, toy, cfg)
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    write_windows_csv(aligned, first)
    write_windows_csv(aligned, second)
    assert first.read_bytes() == second.read_bytes()
    header = first.read_text().splitlines()[0]
    assert header == "window_index,start,end,confidence"
