"""Signal chain for turning raw waveforms into per-swap sample spans.

The stages mirror a capture workflow: bandpass around the activity
carrier, rectify and median-smooth into an envelope, optionally inspect
with an STFT, then matched-filter the envelope against the ladder-step
fingerprint to locate every scalar-multiplication iteration.  The gaps
between consecutive iterations are exactly the conditional swaps.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage, signal

from .errors import AlignmentError, ConfigError, DomainError
from .events import EventRecorder, OpKind, WORD_OP_KINDS
from .ff_curve import (
    CurveParams,
    ProjectivePoint,
    Scalar,
    double_and_always_add,
    montgomery_ladder,
)
from .swap_impls import SwapKind, SwapVariant
from .tracesim import LeakageTrace, SimConfig, synthesize

_STOPBAND_DB = 48.0
_HOLE_CONFIDENCE_FLOOR = 0.25
_SEED_CORR_FLOOR = 0.35


@dataclass(frozen=True, slots=True)
class FilterSpec:
    """Passband description for the carrier isolation stage."""

    center: float
    bandwidth: float
    kind: str = "bandpass"

    def __post_init__(self) -> None:
        if self.kind != "bandpass":
            raise ConfigError(f"unsupported filter kind {self.kind!r}")
        if self.center <= 0.0 or self.bandwidth <= 0.0:
            raise ConfigError("center and bandwidth must be positive")
        if self.center - self.bandwidth / 2.0 <= 0.0:
            raise ConfigError("passband extends to or below zero frequency")

    def validate_for(self, sample_rate: float) -> None:
        if self.center + self.bandwidth / 2.0 >= sample_rate / 2.0:
            raise ConfigError(
                f"passband top {self.center + self.bandwidth / 2.0:g} Hz "
                f"reaches the Nyquist limit of {sample_rate / 2.0:g} Hz"
            )


@dataclass(frozen=True, slots=True)
class AlignedSwapWindows:
    """Per-swap spans recovered from a trace, with match confidence."""

    spans: tuple[tuple[int, int], ...]
    confidence: tuple[float, ...]
    detected_pattern_positions: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.spans) != len(self.confidence):
            raise DomainError("one confidence value per span required")
        previous_end = 0
        for start, end in self.spans:
            if start < previous_end or end < start:
                raise DomainError("spans must be ordered and non-overlapping")
            previous_end = end

    def __len__(self) -> int:
        return len(self.spans)


def bandpass(trace: LeakageTrace, spec: FilterSpec) -> LeakageTrace:
    """Linear-phase FIR bandpass with the group delay compensated.

    The stopband begins one full bandwidth away from the center and is
    attenuated by at least 40 dB there.  Because the kernel is symmetric
    and applied centered, the output is not delayed: marker spans remain
    valid without any shift.
    """
    spec.validate_for(trace.sample_rate)
    nyquist = trace.sample_rate / 2.0
    transition = (spec.bandwidth / 2.0) / nyquist
    numtaps, beta = signal.kaiserord(_STOPBAND_DB, transition)
    numtaps |= 1
    if numtaps > trace.samples.size:
        raise ConfigError(
            f"trace of {trace.samples.size} samples is too short for a "
            f"{numtaps}-tap filter at this bandwidth"
        )
    taps = signal.firwin(
        numtaps,
        (spec.center - spec.bandwidth / 2.0, spec.center + spec.bandwidth / 2.0),
        window=("kaiser", beta),
        pass_zero=False,
        fs=trace.sample_rate,
    )
    filtered = signal.fftconvolve(trace.samples, taps, mode="same")
    return LeakageTrace(
        samples=filtered,
        sample_rate=trace.sample_rate,
        markers=trace.markers,
        meta=dict(trace.meta),
    )


def rectified_envelope(samples: np.ndarray, window_samples: int) -> np.ndarray:
    """Absolute value followed by a reflect-padded sliding median."""
    samples = np.asarray(samples, dtype=np.float64)
    if window_samples < 3:
        raise ConfigError("median window must cover at least 3 samples")
    if window_samples > samples.size:
        raise ConfigError(
            f"median window of {window_samples} samples exceeds the "
            f"{samples.size}-sample input"
        )
    return ndimage.median_filter(
        np.abs(samples), size=window_samples, mode="reflect"
    )


def rectify_median(trace: LeakageTrace, window_seconds: float) -> LeakageTrace:
    """Envelope of a trace: pointwise magnitude, then sliding median."""
    window_samples = int(round(window_seconds * trace.sample_rate))
    return LeakageTrace(
        samples=rectified_envelope(trace.samples, window_samples),
        sample_rate=trace.sample_rate,
        markers=trace.markers,
        meta=dict(trace.meta),
    )


def stft(
    trace: LeakageTrace | np.ndarray, window_samples: int, hop: int
) -> np.ndarray:
    """Rectangular-window short-time Fourier magnitude grid.

    Rows are frames, columns the one-sided frequency bins; the grid has
    ``floor((N - window) / hop) + 1`` rows and ``window // 2 + 1``
    columns.
    """
    x = trace.samples if isinstance(trace, LeakageTrace) else np.asarray(trace)
    x = x.astype(np.float64)
    if window_samples < 8:
        raise ConfigError("stft window must cover at least 8 samples")
    if hop < 1:
        raise ConfigError("stft hop must be at least 1")
    if window_samples > x.size:
        raise ConfigError("stft window exceeds the input length")
    frames = np.lib.stride_tricks.sliding_window_view(x, window_samples)[::hop]
    return np.abs(np.fft.rfft(frames, axis=1))


def _pattern_template(
    curve: CurveParams,
    cfg: SimConfig,
    multiplier: str,
    band: FilterSpec | None = None,
) -> np.ndarray:
    """Noiseless envelope of one scalar-multiplication iteration.

    Runs a one-bit scalar through the requested multiplier and keeps the
    field-arithmetic events, which form the machine-readable fingerprint
    of a single iteration (the swap burst is excluded: its length varies
    with the countermeasure in use).  When a band is given the template
    passes through the same filter the trace will, so both sides of the
    correlation carry identical smoothing.
    """
    recorder = EventRecorder()
    k = Scalar(1, 1)
    # The fingerprint is a fixed reference, so the variant rng is pinned;
    # register randomization must not vary the template across runs.
    if multiplier == "ladder":
        montgomery_ladder(
            k, curve.generator, curve, SwapVariant(SwapKind.PLAIN, rng_seed=0), recorder
        )
    elif multiplier == "daa":
        base = ProjectivePoint.from_affine(*curve.generator, curve.field)
        double_and_always_add(
            k, base, curve, SwapVariant(SwapKind.PLAIN, rng_seed=0), recorder
        )
    else:
        raise ConfigError(f"unknown multiplier {multiplier!r}")
    step_events = [e for e in recorder if e.op_kind not in WORD_OP_KINDS]
    if not step_events:
        raise AlignmentError("multiplier produced no arithmetic events")
    quiet = dataclasses.replace(
        cfg, noise_sigma=0.0, interruption_prob=0.0, interference=()
    )
    trace = synthesize(step_events, quiet)
    if band is not None:
        trace = bandpass(trace, band)
    return rectified_envelope(trace.samples, max(3, cfg.samples_per_event // 4))


def _normalized_xcorr(envelope: np.ndarray, template: np.ndarray) -> np.ndarray:
    """Cross-correlation normalized per window to [-1, 1]."""
    t = template - template.mean()
    t_norm = float(np.linalg.norm(t))
    if t_norm == 0.0:
        raise AlignmentError("pattern template is constant")
    width = template.size
    numerator = signal.fftconvolve(envelope, t[::-1], mode="valid")
    cumulative = np.concatenate(([0.0], np.cumsum(envelope)))
    cumulative_sq = np.concatenate(([0.0], np.cumsum(envelope**2)))
    window_sum = cumulative[width:] - cumulative[:-width]
    window_sq = cumulative_sq[width:] - cumulative_sq[:-width]
    variance = np.maximum(window_sq - window_sum**2 / width, 0.0)
    denominator = np.sqrt(variance) * t_norm
    return numerator / np.maximum(denominator, 1e-12)


def _peak_positions(
    corr: np.ndarray, threshold: float, min_distance: int
) -> list[int]:
    """Greedy non-maximum suppression over the correlation track."""
    candidates = np.flatnonzero(corr >= threshold)
    if candidates.size == 0:
        return []
    order = candidates[np.argsort(corr[candidates])[::-1]]
    taken: list[int] = []
    for position in order:
        if all(abs(position - p) >= min_distance for p in taken):
            taken.append(int(position))
    return sorted(taken)


def _coherent_spacing(positions: Sequence[int]) -> bool:
    """Whether matches repeat at a stable spacing.

    Genuine iterations sit one period apart, with dropouts showing up as
    small integer multiples; the sparse maxima of a structureless track
    land at incoherent offsets instead.  Too few matches to judge pass
    by default, the match-count requirement governs there.
    """
    if len(positions) < 5:
        return True
    gaps = np.diff(positions)
    period = float(np.median(gaps))
    if period <= 0.0:
        return False
    multiples = np.round(gaps / period)
    regular = (multiples >= 1) & (np.abs(gaps - multiples * period) <= 0.2 * period)
    return float(np.mean(regular)) >= 0.6


def _grid_positions(
    seeds: list[int], corr: np.ndarray, width: int, bits: int, spe: int
) -> list[int] | None:
    """Rebuild the full iteration grid from the threshold matches.

    The multiplier is constant time, so the matches of one trace lie on
    an exact arithmetic progression; a pairwise-median fit of its period
    and phase shrugs off jittered or spurious matches, and every slot
    with room in the trace is snapped to the strongest correlation
    nearby.  Returns None when the matches do not sit on one coherent
    grid (a scheduler interruption splits the progression, for
    example); gap-based filling handles those traces instead.
    """
    if len(seeds) < 3:
        return None
    kept = sorted(seeds)
    rough = float(np.median(np.diff(kept)))
    if rough <= 0.0:
        return None
    # A spurious match squeezed between two genuine ones would shift
    # every later slot number by one, so short spacings are resolved
    # first by dropping the weaker match of the pair.
    changed = True
    while changed and len(kept) > 2:
        changed = False
        for i in range(len(kept) - 1):
            if kept[i + 1] - kept[i] < 0.8 * rough:
                weaker = i if corr[kept[i]] <= corr[kept[i + 1]] else i + 1
                del kept[weaker]
                changed = True
                break
    if len(kept) < 3:
        return None
    pos = np.asarray(kept, dtype=np.float64)
    diffs = np.diff(pos)
    steps = np.maximum(1, np.rint(diffs / rough).astype(np.int64))
    slots = np.concatenate(([0], np.cumsum(steps)))

    # Quantized single spacings bias a plain median period by whole
    # samples, which drifts to hundreds across the trace, and a least
    # squares fit has no outlier resistance; median slopes over long
    # baselines give a sub-sample period either way.
    baseline = max(1, len(pos) // 2)
    slopes = (pos[baseline:] - pos[:-baseline]) / (
        slots[baseline:] - slots[:-baseline]
    )
    period = float(np.median(slopes))
    if period <= 0.0:
        return None
    anchor = float(np.median(pos - slots * period))
    tolerance = max(2.0 * spe, 0.15 * period)
    for _ in range(2):
        coherent = np.abs(pos - (anchor + slots * period)) <= tolerance
        if float(np.mean(coherent)) < 0.8:
            return None
        period, anchor = np.polyfit(slots[coherent], pos[coherent], 1)
        period, anchor = float(period), float(anchor)
    if period <= width:
        return None
    centered = pos - (anchor + slots * period)
    for i in range(5, len(centered) - 4):
        step = abs(
            float(np.median(centered[i:])) - float(np.median(centered[:i]))
        )
        if step > 0.75 * spe:
            return None

    snap = int(min(spe, max(0.0, (period - width) / 2.0 - 1.0)))
    first = math.ceil((-anchor - snap) / period)
    last = math.floor((corr.size - 1 - anchor + snap) / period)
    if last < first:
        return None
    grid = [
        min(max(int(round(anchor + j * period)), 0), corr.size - 1)
        for j in range(first, last + 1)
    ]
    while len(grid) > bits:
        if corr[grid[0]] <= corr[grid[-1]]:
            grid.pop(0)
        else:
            grid.pop()
    snapped: list[int] = []
    for g in grid:
        lo = max(0, g - snap)
        hi = min(corr.size, g + snap + 1)
        snapped.append(lo + int(np.argmax(corr[lo:hi])))
    return snapped


def _fill_holes(
    positions: list[int], corr: np.ndarray, width: int, target: int
) -> list[int]:
    """Insert plausible matches into oversized gaps.

    An interruption splicing silence into one iteration can push that
    iteration's correlation below the threshold; its neighbours then sit
    two spacings apart.  The best remaining correlation inside each such
    hole is accepted (down to a documented floor) until the expected
    count is reached or nothing credible remains.  Insertions keep a
    full template width away from both neighbours so the recovered
    matches always segment into disjoint windows.
    """
    positions = sorted(positions)
    while len(positions) < target and len(positions) >= 2:
        spacing = float(np.median(np.diff(positions)))
        margin = max(int(0.6 * spacing), width)
        holes: list[tuple[int, int]] = []
        if positions[0] >= 1.5 * spacing:
            holes.append((0, positions[0] - width))
        for a, b in zip(positions, positions[1:]):
            if b - a >= 1.6 * spacing:
                holes.append((a + margin, b - margin))
        tail_room = corr.size - 1 - positions[-1]
        if tail_room >= 0.8 * spacing:
            holes.append((positions[-1] + margin, corr.size))
        best_position = None
        best_value = _HOLE_CONFIDENCE_FLOOR
        for lo, hi in holes:
            lo, hi = max(0, lo), min(corr.size, hi)
            if hi <= lo:
                continue
            j = lo + int(np.argmax(corr[lo:hi]))
            if corr[j] > best_value:
                best_position, best_value = j, float(corr[j])
        if best_position is None:
            break
        positions = sorted(positions + [best_position])
    return positions


def align_swaps(
    trace: LeakageTrace,
    curve: CurveParams,
    cfg: SimConfig,
    *,
    multiplier: str | None = None,
    ncc_threshold: float = 0.6,
) -> AlignedSwapWindows:
    """Locate every conditional swap by finding the iterations around it.

    The trace is bandpassed around the leak carrier and its
    rectified-median envelope matched against the single-iteration
    arithmetic fingerprint passed through the same filter; on the ladder
    each swap precedes its iteration, with double-and-add it follows, so
    the inter-match gaps are the swap spans.  Confidence is the
    normalized correlation of the adjacent match.

    ``ncc_threshold`` is a ceiling: noise lowers every correlation peak
    roughly uniformly, so the effective threshold follows the strongest
    match down to an absolute floor.  Matches must also be numerous
    enough for the room the trace has and repeat at a stable spacing;
    sparse or incoherent maxima are rejected as structureless.
    """
    if multiplier is None:
        multiplier = trace.meta.get("multiplier", "ladder")
    spec = FilterSpec(center=cfg.f_mod, bandwidth=0.5 * cfg.f_mod)
    template = _pattern_template(curve, cfg, multiplier, spec)
    if template.size > trace.samples.size:
        raise AlignmentError("trace is shorter than one iteration")
    filtered = bandpass(trace, spec)
    envelope = rectified_envelope(
        filtered.samples, max(3, cfg.samples_per_event // 4)
    )
    corr = _normalized_xcorr(envelope, template)
    width = template.size
    best = float(corr.max(initial=0.0))
    threshold = max(_SEED_CORR_FLOOR, min(ncc_threshold, 0.6 * best))
    positions = _peak_positions(corr, threshold, width)
    bits = curve.n.bit_length()
    capacity = min(bits, trace.samples.size // width)
    if len(positions) < max(1, capacity // 4):
        raise AlignmentError("no iteration pattern found in the trace")
    if not _coherent_spacing(positions):
        raise AlignmentError("correlation maxima lack a stable spacing")
    grid = _grid_positions(positions, corr, width, bits, cfg.samples_per_event)
    if grid is not None:
        positions = grid
    else:
        positions = _fill_holes(positions, corr, width, bits)
    if len(positions) > bits:
        raise AlignmentError(
            f"found {len(positions)} iteration patterns, expected at most {bits}"
        )
    if any(b - a < width for a, b in zip(positions, positions[1:])):
        raise AlignmentError("matched iterations overlap; segmentation failed")

    gaps = [b - (a + width) for a, b in zip(positions, positions[1:])]
    typical_gap = int(np.median(gaps)) if gaps else positions[0]
    spans: list[tuple[int, int]] = []
    if multiplier == "ladder":
        for i, position in enumerate(positions):
            start = positions[i - 1] + width if i else position - typical_gap
            spans.append((max(0, start), position))
    else:
        total = trace.samples.size
        for i, position in enumerate(positions):
            end = positions[i + 1] if i + 1 < len(positions) else min(
                total, position + width + typical_gap
            )
            spans.append((position + width, end))
    return AlignedSwapWindows(
        spans=tuple(spans),
        confidence=tuple(float(corr[p]) for p in positions),
        detected_pattern_positions=tuple(positions),
    )


def step_peak_groups(
    envelope: np.ndarray, samples_per_event: int
) -> list[int]:
    """Multiplicities of the arithmetic peak groups in a step envelope.

    Thresholds the envelope halfway between its extremes and sizes each
    above-threshold run in units of one full event, so a clean ladder
    step decodes to its characteristic group pattern.
    """
    envelope = np.asarray(envelope, dtype=np.float64)
    if envelope.size == 0:
        raise DomainError("empty envelope")
    threshold = (envelope.max() + envelope.min()) / 2.0
    above = np.concatenate(
        ([0], (envelope > threshold).astype(np.int8), [0])
    )
    edges = np.flatnonzero(np.diff(above))
    return [
        round((b - a) / samples_per_event + 0.25)
        for a, b in zip(edges[::2], edges[1::2])
    ]


def detect_schedule(
    trace: LeakageTrace,
    known_frequencies: Sequence[float],
    cfg: SimConfig | None = None,
    *,
    curve: CurveParams | None = None,
    multiplier: str = "ladder",
    threshold: float = 0.6,
) -> tuple[float, bool]:
    """Identify which candidate clock produced a trace.

    For each candidate the trace is bandpassed around the corresponding
    carrier and the envelope is matched against the iteration
    fingerprint; the candidate with the strongest match wins, and
    ``match`` reports whether it clears the confidence threshold.
    """
    if not known_frequencies:
        raise ConfigError("known_frequencies must not be empty")
    if cfg is None:
        cfg = SimConfig()
    if curve is None:
        from .ff_curve import get_curve

        curve = get_curve("toy16")
    ratio = cfg.mod_ratio.numerator / cfg.mod_ratio.denominator
    best_frequency = float(known_frequencies[0])
    best_score = -np.inf
    for f_cpu in known_frequencies:
        f_mod = f_cpu * ratio
        # Narrow enough that neighbouring candidates' carriers fall in
        # the stopband (candidates closer than a 1.4 ratio are not
        # distinguishable this way).
        spec = FilterSpec(center=f_mod, bandwidth=0.5 * f_mod)
        try:
            candidate_cfg = dataclasses.replace(cfg, f_cpu=float(f_cpu))
            filtered = bandpass(trace, spec)
            template = _pattern_template(curve, candidate_cfg, multiplier, spec)
        except ConfigError:
            continue
        envelope = rectified_envelope(
            filtered.samples, max(3, cfg.samples_per_event // 4)
        )
        if template.size > envelope.size:
            continue
        score = float(_normalized_xcorr(envelope, template).max())
        if score > best_score:
            best_frequency, best_score = float(f_cpu), score
    return best_frequency, bool(best_score >= threshold)


def export_csv(grid: np.ndarray, path: Path | str) -> None:
    """Write an envelope or STFT grid as CSV for external plotting."""
    np.savetxt(path, np.atleast_2d(np.asarray(grid)), delimiter=",", fmt="%.9g")


def write_windows_csv(aligned: AlignedSwapWindows, path: Path | str) -> None:
    """Dump aligned windows, one row per swap, for manual review."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("window_index", "start", "end", "confidence"))
        for i, ((start, end), conf) in enumerate(
            zip(aligned.spans, aligned.confidence)
        ):
            writer.writerow((i, start, end, f"{conf:.6f}"))
