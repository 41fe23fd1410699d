"""Event streams rendered as EM-style amplitude-modulated waveforms.

The model is deliberately coarse: every recorded operation occupies a
fixed number of samples, its amplitude tracks the operand-dependent
leak value, and the whole activity envelope rides on a carrier at a
fixed fraction of the simulated clock.  Gaussian sensor noise, bursty
interference, and scheduler interruptions are layered on top.  Nothing
here models physics; the point is a waveform with the same structure
the analysis pipeline has to cope with on real captures.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence
import struct

import numpy as np

from .errors import ConfigError, DomainError
from .events import WORD_OP_KINDS, OpKind, SwapTraceEvent
from .ff_curve import (
    CurveParams,
    ProjectivePoint,
    Scalar,
    double_and_always_add,
    montgomery_ladder,
    reference_multiply,
)
from .swap_impls import SwapKind, SwapVariant, WordArrayPair, ct_swap
from .events import EventRecorder

TRACE_MAGIC = b"SCTR"
TRACE_VERSION = 1

_KIND_ORDER: tuple[OpKind, ...] = tuple(OpKind)
_KIND_INDEX: dict[OpKind, int] = {kind: i for i, kind in enumerate(_KIND_ORDER)}
_WORD_KIND_IDS = np.array(
    sorted(_KIND_INDEX[kind] for kind in WORD_OP_KINDS), dtype=np.uint8
)

# Fraction of samples_per_event each operation occupies.  Multiplies and
# squarings form the visible blocks; add/sub/shift are the short gaps
# between them; word-level swap steps are shorter still.
_DURATION_DIVISOR: dict[OpKind, int] = {
    OpKind.FIELD_MUL: 1,
    OpKind.FIELD_SQUARE: 1,
    OpKind.RERANDOMIZE: 1,
    OpKind.FIELD_ADD_SUB: 4,
    OpKind.MASK_COMPUTE: 8,
    OpKind.INV_MASK_COMPUTE: 8,
    OpKind.DELTA_COMPUTE: 8,
    OpKind.STORE_A: 8,
    OpKind.STORE_B: 8,
}

# Kinds that stay visible regardless of operand values, so alignment can
# find the arithmetic blocks even when every leak value happens to be 0.
_FLOOR_KINDS = frozenset(
    (OpKind.FIELD_MUL, OpKind.FIELD_SQUARE, OpKind.RERANDOMIZE)
)

# A word-level event exposes one word's weight at full gain.  A
# multi-word arithmetic block amortizes its result weight over many
# internal cycles, so its data dependence enters only as a weak wobble;
# without the damping, 521-bit operands (weight ~260) would make the
# add/sub gaps as bright as the multiply blocks and erase the structure
# alignment keys on.
_ARITH_LEAK_DAMPING = 1.0 / 32.0


@dataclass(frozen=True, slots=True)
class SimConfig:
    """Synthesizer knobs.

    Defaults are a desk-scale surrogate of the hardware target: all
    frequencies are divided by 1000, which preserves every ratio the
    pipeline depends on while keeping a full-scalar trace near 10^6
    samples.  ``hardware_scale`` returns the unscaled figures; actually
    simulating at that rate is impractical and unnecessary.
    """

    f_cpu: float = 1.8e6
    mod_ratio: Fraction = Fraction(1, 14)
    sample_rate: float = 2.5e6
    samples_per_event: int = 64
    noise_sigma: float = 2.0
    snr_scale: float = 0.25
    baseline: float = 1.0
    activity_floor: float = 4.0
    interference: tuple[tuple[float, float, float], ...] = ()
    interruption_prob: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "mod_ratio", Fraction(self.mod_ratio))
        bursts = []
        for burst in self.interference:
            try:
                start, length, amplitude = (float(v) for v in burst)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"malformed interference burst {burst!r}") from exc
            if not (0.0 <= start <= 1.0 and 0.0 <= length <= 1.0):
                raise ConfigError("interference fractions must lie in [0, 1]")
            if amplitude < 0.0:
                raise ConfigError("interference amplitude must be non-negative")
            bursts.append((start, length, amplitude))
        object.__setattr__(self, "interference", tuple(bursts))
        if self.f_cpu <= 0.0 or self.sample_rate <= 0.0:
            raise ConfigError("f_cpu and sample_rate must be positive")
        if self.mod_ratio <= 0:
            raise ConfigError("mod_ratio must be positive")
        if not isinstance(self.samples_per_event, int) or self.samples_per_event < 8:
            raise ConfigError("samples_per_event must be an integer of at least 8")
        if self.samples_per_event % 8:
            raise ConfigError(
                "samples_per_event must be a multiple of 8 so word-level "
                "events keep an integral duration"
            )
        if self.noise_sigma < 0.0:
            raise ConfigError("noise_sigma must be non-negative")
        if self.snr_scale <= 0.0:
            raise ConfigError("snr_scale must be positive")
        if self.baseline < 0.0 or self.activity_floor < 0.0:
            raise ConfigError("baseline and activity_floor must be non-negative")
        if not 0.0 <= self.interruption_prob <= 1.0:
            raise ConfigError("interruption_prob must lie in [0, 1]")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an integer fitting in 64 bits")
        if self.sample_rate < 4.0 * self.f_mod:
            raise ConfigError(
                f"sample_rate {self.sample_rate:g} is below the Nyquist "
                f"margin 4*f_mod = {4.0 * self.f_mod:g}"
            )

    @property
    def f_mod(self) -> float:
        """Carrier frequency the activity envelope is modulated onto."""
        return self.f_cpu * self.mod_ratio.numerator / self.mod_ratio.denominator

    @classmethod
    def hardware_scale(cls, **overrides) -> "SimConfig":
        """Unscaled hardware-rate figures, kept for documentation."""
        overrides.setdefault("f_cpu", 1.8e9)
        overrides.setdefault("sample_rate", 2.5e9)
        return cls(**overrides)


class Marker(NamedTuple):
    """Ground-truth annotation for one synthesized event."""

    start: int
    end: int
    op_kind: OpKind
    cond: int | None
    interfered: bool


class MarkerTable(Sequence):
    """Column-oriented store of per-event markers.

    A full scalar multiplication produces tens of thousands of events;
    keeping one Python object per marker would dwarf the sample data, so
    the columns live in flat arrays and ``Marker`` rows are materialized
    on access.
    """

    __slots__ = ("starts", "ends", "kinds", "conds", "interfered")

    def __init__(
        self,
        starts: np.ndarray,
        ends: np.ndarray,
        kinds: np.ndarray,
        conds: np.ndarray,
        interfered: np.ndarray | None = None,
    ) -> None:
        self.starts = np.asarray(starts, dtype=np.int64)
        self.ends = np.asarray(ends, dtype=np.int64)
        self.kinds = np.asarray(kinds, dtype=np.uint8)
        # -1 encodes "no condition attached".
        self.conds = np.asarray(conds, dtype=np.int8)
        if interfered is None:
            interfered = np.zeros(self.starts.size, dtype=bool)
        self.interfered = np.asarray(interfered, dtype=bool)
        n = self.starts.size
        if not (self.ends.size == self.kinds.size == self.conds.size == n
                and self.interfered.size == n):
            raise DomainError("marker columns must have equal length")
        if n:
            if (self.ends < self.starts).any():
                raise DomainError("marker span ends before it starts")
            if (self.starts[1:] < self.ends[:-1]).any():
                raise DomainError("markers must be sorted and non-overlapping")

    @classmethod
    def empty(cls) -> "MarkerTable":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, z)

    @classmethod
    def from_events(
        cls,
        events: Sequence[SwapTraceEvent],
        starts: np.ndarray,
        durations: np.ndarray,
    ) -> "MarkerTable":
        kinds = np.fromiter(
            (_KIND_INDEX[e.op_kind] for e in events), np.uint8, len(events)
        )
        conds = np.fromiter(
            (-1 if e.ground_truth_cond is None else e.ground_truth_cond
             for e in events),
            np.int8,
            len(events),
        )
        return cls(starts, starts + durations, kinds, conds)

    def __len__(self) -> int:
        return self.starts.size

    def __getitem__(self, i: int) -> Marker:
        if not isinstance(i, int):
            raise TypeError("marker indices must be integers")
        cond = int(self.conds[i])
        return Marker(
            int(self.starts[i]),
            int(self.ends[i]),
            _KIND_ORDER[self.kinds[i]],
            None if cond < 0 else cond,
            bool(self.interfered[i]),
        )

    def __iter__(self) -> Iterator[Marker]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MarkerTable):
            return NotImplemented
        return (
            np.array_equal(self.starts, other.starts)
            and np.array_equal(self.ends, other.ends)
            and np.array_equal(self.kinds, other.kinds)
            and np.array_equal(self.conds, other.conds)
            and np.array_equal(self.interfered, other.interfered)
        )

    __hash__ = None

    def with_interference(self, flagged: np.ndarray) -> "MarkerTable":
        return MarkerTable(
            self.starts, self.ends, self.kinds, self.conds,
            self.interfered | np.asarray(flagged, dtype=bool),
        )


@dataclass(frozen=True, eq=False, slots=True)
class LeakageTrace:
    """One synthesized waveform with its ground-truth annotations."""

    samples: np.ndarray
    sample_rate: float
    markers: MarkerTable
    meta: dict[str, str]

    def __post_init__(self) -> None:
        if self.samples.ndim != 1:
            raise DomainError("trace samples must form a one-dimensional array")
        if self.sample_rate <= 0.0:
            raise DomainError("sample_rate must be positive")
        if len(self.markers) and int(self.markers.ends[-1]) > self.samples.size:
            raise DomainError("marker spans run past the end of the trace")

    def __len__(self) -> int:
        return self.samples.size


class SwapWindow(NamedTuple):
    """Span of one conditional-swap execution inside a trace."""

    start: int
    end: int
    cond: int
    interfered: bool


def swap_windows(trace: LeakageTrace) -> list[SwapWindow]:
    """Extract the spans of the condition-bearing word-event runs.

    Each conditional swap emits a contiguous burst of word-level events
    carrying the same ground-truth condition, always separated from the
    next burst by field arithmetic, so maximal runs of word events are
    exactly the swap executions.
    """
    mt = trace.markers
    in_swap = np.isin(mt.kinds, _WORD_KIND_IDS) & (mt.conds >= 0)
    edges = np.flatnonzero(np.diff(np.concatenate(([0], in_swap.astype(np.int8), [0]))))
    windows = []
    for a, b in zip(edges[::2], edges[1::2]):
        conds = np.unique(mt.conds[a:b])
        if conds.size != 1:
            raise DomainError("swap window mixes ground-truth conditions")
        windows.append(
            SwapWindow(
                int(mt.starts[a]),
                int(mt.ends[b - 1]),
                int(conds[0]),
                bool(mt.interfered[a:b].any()),
            )
        )
    return windows


def event_duration(kind: OpKind, samples_per_event: int) -> int:
    """Samples one event of the given kind occupies."""
    return samples_per_event // _DURATION_DIVISOR[kind]


def synthesize(
    events: Iterable[SwapTraceEvent],
    cfg: SimConfig,
    rng: np.random.Generator | None = None,
    *,
    meta: dict[str, str] | None = None,
) -> LeakageTrace:
    """Render an event stream into a noisy amplitude-modulated waveform.

    The activity envelope is piecewise constant per event: baseline,
    plus a fixed floor for arithmetic blocks, plus the recorded leak
    value scaled by ``snr_scale``.  The envelope multiplies a carrier at
    ``cfg.f_mod`` and Gaussian noise is added on top.  With probability
    ``interruption_prob`` a silent gap of random length is spliced in at
    a random event boundary.
    """
    evs = list(events)
    if not evs:
        raise DomainError("cannot synthesize an empty event stream")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    spe = cfg.samples_per_event

    durations = np.fromiter(
        (spe // _DURATION_DIVISOR[e.op_kind] for e in evs), np.int64, len(evs)
    )
    floors = np.fromiter(
        (cfg.activity_floor if e.op_kind in _FLOOR_KINDS else 0.0 for e in evs),
        np.float64,
        len(evs),
    )
    leaks = np.fromiter(
        (
            e.leak_value
            if e.op_kind in WORD_OP_KINDS
            else e.leak_value * _ARITH_LEAK_DAMPING
            for e in evs
        ),
        np.float64,
        len(evs),
    )
    amplitudes = cfg.baseline + floors + leaks * cfg.snr_scale

    gap_index = gap_len = 0
    if cfg.interruption_prob > 0.0 and rng.random() < cfg.interruption_prob:
        gap_index = int(rng.integers(1, len(evs)))
        gap_len = int(rng.integers(spe, 8 * spe + 1))

    envelope = np.repeat(amplitudes, durations)
    starts = np.concatenate(([0], np.cumsum(durations)[:-1]))
    if gap_len:
        cut = int(starts[gap_index])
        envelope = np.concatenate(
            (envelope[:cut], np.zeros(gap_len), envelope[cut:])
        )
        starts[gap_index:] += gap_len

    n = envelope.size
    t = np.arange(n, dtype=np.float64) / cfg.sample_rate
    samples = envelope * np.cos(2.0 * np.pi * cfg.f_mod * t)
    if cfg.noise_sigma > 0.0:
        samples = samples + rng.normal(0.0, cfg.noise_sigma, n)

    trace_meta = {
        "f_cpu": str(cfg.f_cpu),
        "mod_ratio": str(cfg.mod_ratio),
    }
    if meta:
        trace_meta.update(meta)
    return LeakageTrace(
        samples=samples,
        sample_rate=cfg.sample_rate,
        markers=MarkerTable.from_events(evs, starts, durations),
        meta=trace_meta,
    )


def inject_interference(
    trace: LeakageTrace,
    cfg: SimConfig,
    rng: np.random.Generator | None = None,
) -> LeakageTrace:
    """Overlay band-limited noise bursts on the configured spans.

    Each burst is white noise smoothed to the signal band and modulated
    onto the same carrier as the trace, so it cannot be removed by the
    bandpass stage.  Markers whose span overlaps a burst are flagged.
    ``amplitude`` is the approximate RMS of the burst envelope.
    """
    if not cfg.interference:
        return trace
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n = trace.samples.size
    smoothing = max(1, cfg.samples_per_event // 2)
    kernel = np.ones(smoothing) / smoothing
    out = trace.samples.astype(np.float64, copy=True)
    flagged = np.zeros(len(trace.markers), dtype=bool)
    for start_frac, len_frac, amplitude in cfg.interference:
        start = int(round(start_frac * n))
        stop = min(n, start + int(round(len_frac * n)))
        if stop <= start:
            continue
        envelope = np.convolve(rng.normal(0.0, 1.0, stop - start), kernel, "same")
        envelope *= np.sqrt(smoothing)
        t = np.arange(start, stop, dtype=np.float64) / trace.sample_rate
        out[start:stop] += amplitude * envelope * np.cos(2.0 * np.pi * cfg.f_mod * t)
        flagged |= (trace.markers.starts < stop) & (trace.markers.ends > start)
    return LeakageTrace(
        samples=out,
        sample_rate=trace.sample_rate,
        markers=trace.markers.with_interference(flagged),
        meta=dict(trace.meta),
    )


@dataclass(eq=False)
class TraceSet:
    """Traces plus the per-swap condition matrix describing them."""

    traces: list[LeakageTrace]
    labels: np.ndarray
    interfered: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.labels.ndim != 2 or self.labels.shape[0] != len(self.traces):
            raise DomainError("label matrix must have one row per trace")
        if self.interfered is not None:
            self.interfered = np.asarray(self.interfered, dtype=bool)
            if self.interfered.shape != self.labels.shape:
                raise DomainError("interference matrix must match label shape")
        for trace in self.traces:
            if len(trace.markers) == 0:
                continue
            if len(swap_windows(trace)) != self.labels.shape[1]:
                raise DomainError(
                    "trace swap-window count disagrees with label matrix"
                )


def _variant_kind(variant: SwapVariant | SwapKind | str) -> SwapKind:
    if isinstance(variant, SwapVariant):
        return variant.kind
    if isinstance(variant, SwapKind):
        return variant
    try:
        return SwapKind(variant)
    except ValueError as exc:
        raise ConfigError(f"unknown swap variant {variant!r}") from exc


def _random_below(rng: np.random.Generator, bound: int) -> int:
    """Uniform integer in [0, bound) for bounds wider than 64 bits."""
    nbytes = (bound.bit_length() + 7) // 8 + 8
    return int.from_bytes(rng.bytes(nbytes), "big") % bound


def training_nonces(
    curve: CurveParams, multiplier: str = "ladder"
) -> tuple[Scalar, Scalar]:
    """Scalars whose swap schedule is (almost) all-swap / all-hold.

    The ladder swaps on consecutive-bit differences, so alternating bits
    swap on every iteration and a run of ones never swaps after the
    first.  Double-and-add swaps directly on the bits.  When the natural
    full-width pattern meets or exceeds the group order, the same
    pattern one bit narrower is used; only the leading window's label
    changes, and labels are taken from ground truth anyway.
    """
    bits = curve.n.bit_length()
    ones_wide = (1 << bits) - 1
    ones_narrow = (1 << (bits - 1)) - 1
    if multiplier == "ladder":
        alternating = sum(1 << i for i in range((bits - 1) % 2, bits, 2))
        if alternating >= curve.n:
            alternating = sum(1 << i for i in range(bits % 2, bits - 1, 2))
        mostly_swap = alternating
        mostly_hold = ones_wide if ones_wide < curve.n else ones_narrow
    elif multiplier == "daa":
        mostly_swap = ones_wide if ones_wide < curve.n else ones_narrow
        mostly_hold = 1
    else:
        raise ConfigError(f"unknown multiplier {multiplier!r}")
    return (
        Scalar.for_curve(mostly_swap, curve),
        Scalar.for_curve(mostly_hold, curve),
    )


def generate_training_set(
    curve: CurveParams,
    variant: SwapVariant | SwapKind | str,
    count: int,
    cfg: SimConfig,
    rng: np.random.Generator | None = None,
    *,
    multiplier: str = "ladder",
) -> TraceSet:
    """Full scalar multiplications with known per-swap conditions.

    Each trace randomly picks the mostly-swap or mostly-hold nonce and a
    random base point, runs the multiplier with a freshly seeded swap
    variant, and labels every swap window from ground truth.
    """
    if count < 1:
        raise DomainError("count must be at least 1")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    kind = _variant_kind(variant)
    swap_nonce, hold_nonce = training_nonces(curve, multiplier)
    width = curve.n.bit_length()
    traces: list[LeakageTrace] = []
    labels = np.empty((count, width), dtype=np.int8)
    for i in range(count):
        chosen_class = int(rng.integers(0, 2))
        nonce = swap_nonce if chosen_class else hold_nonce
        base_exp = 1 + _random_below(rng, curve.n - 1)
        generator = ProjectivePoint.from_affine(*curve.generator, curve.field)
        base = reference_multiply(base_exp, generator, curve)
        variant_inst = SwapVariant(kind, rng_seed=int(rng.integers(0, 2**63)))
        recorder = EventRecorder()
        if multiplier == "ladder":
            affine = base.to_affine()
            montgomery_ladder(nonce, affine, curve, variant_inst, recorder)
        else:
            double_and_always_add(nonce, base, curve, variant_inst, recorder)
        trace = synthesize(
            recorder,
            cfg,
            rng,
            meta={
                "curve": curve.name,
                "variant": kind.value,
                "multiplier": multiplier,
            },
        )
        windows = swap_windows(trace)
        if len(windows) != width:
            raise DomainError("scalar multiplication recorded a short schedule")
        labels[i] = [w.cond for w in windows]
        traces.append(trace)
    return TraceSet(traces, labels)


def generate_swap_windows(
    variant: SwapVariant | SwapKind | str,
    word_count: int,
    conds: Sequence[int],
    cfg: SimConfig,
    rng: np.random.Generator | None = None,
) -> TraceSet:
    """Isolated conditional-swap executions over random operands.

    This is the capture campaign shape used for leakage assessment and
    profiling: many short traces, each covering a single swap with a
    known condition and fresh random register contents.
    """
    if word_count < 1:
        raise DomainError("word_count must be at least 1")
    if len(conds) == 0:
        raise DomainError("conds must not be empty")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    kind = _variant_kind(variant)
    traces: list[LeakageTrace] = []
    labels = np.empty((len(conds), 1), dtype=np.int8)
    for i, cond in enumerate(conds):
        words = rng.integers(0, 2**64, 2 * word_count, dtype=np.uint64)
        pair = WordArrayPair(
            tuple(int(w) for w in words[:word_count]),
            tuple(int(w) for w in words[word_count:]),
        )
        variant_inst = SwapVariant(kind, rng_seed=int(rng.integers(0, 2**63)))
        recorder = EventRecorder()
        ct_swap(variant_inst, pair, int(cond), recorder)
        traces.append(
            synthesize(
                recorder,
                cfg,
                rng,
                meta={"variant": kind.value, "word_count": str(word_count)},
            )
        )
        labels[i, 0] = int(cond)
    return TraceSet(traces, labels)


def labels_path(path: Path | str) -> Path:
    """Sidecar CSV path paired with a trace file."""
    return Path(path).with_suffix(".labels.csv")


def write_trace_set(trace_set: TraceSet, path: Path | str) -> None:
    """Serialize traces and the label sidecar.

    Traces are padded with zeros to a common width; true lengths go into
    the shared meta block when they differ.  Meta keys whose values vary
    across traces are dropped (the sidecar carries per-trace truth).
    """
    path = Path(path)
    traces = trace_set.traces
    if not traces:
        raise DomainError("refusing to write an empty trace set")
    rate = traces[0].sample_rate
    if any(t.sample_rate != rate for t in traces):
        raise DomainError("traces in one file must share a sample rate")

    meta = dict(traces[0].meta)
    for trace in traces[1:]:
        for key in list(meta):
            if trace.meta.get(key) != meta[key]:
                del meta[key]
    lengths = [t.samples.size for t in traces]
    width = max(lengths)
    if any(n != width for n in lengths):
        meta["trace_lengths"] = ",".join(str(n) for n in lengths)
    meta_blob = "".join(f"{k}={v}\n" for k, v in sorted(meta.items())).encode()

    with open(path, "wb") as fh:
        fh.write(
            struct.pack(
                "<4sIdIII",
                TRACE_MAGIC,
                TRACE_VERSION,
                rate,
                len(traces),
                width,
                len(meta_blob),
            )
        )
        fh.write(meta_blob)
        for trace in traces:
            row = np.zeros(width, dtype="<f4")
            row[: trace.samples.size] = trace.samples.astype(np.float32)
            fh.write(row.tobytes())

    with open(labels_path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("trace_index", "swap_index", "cond", "interfered"))
        interfered = trace_set.interfered
        for i in range(trace_set.labels.shape[0]):
            for j in range(trace_set.labels.shape[1]):
                flag = int(interfered[i, j]) if interfered is not None else 0
                writer.writerow((i, j, int(trace_set.labels[i, j]), flag))


def read_trace_set(path: Path | str) -> TraceSet:
    """Load a trace file and its label sidecar.

    Markers do not survive serialization; loaded traces carry an empty
    marker table and ground truth comes from the label matrix.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.read(struct.calcsize("<4sIdIII"))
        if len(header) != struct.calcsize("<4sIdIII"):
            raise DomainError(f"{path} is truncated")
        magic, version, rate, count, width, meta_len = struct.unpack(
            "<4sIdIII", header
        )
        if magic != TRACE_MAGIC:
            raise DomainError(f"{path} is not a trace file (bad magic)")
        if version != TRACE_VERSION:
            raise DomainError(f"unsupported trace file version {version}")
        meta: dict[str, str] = {}
        if meta_len:
            for line in fh.read(meta_len).decode().splitlines():
                if line:
                    key, _, value = line.partition("=")
                    meta[key] = value
        payload = np.frombuffer(fh.read(4 * count * width), dtype="<f4")
        if payload.size != count * width:
            raise DomainError(f"{path} is truncated")
    rows = payload.reshape(count, width).astype(np.float64)

    lengths = [width] * count
    if "trace_lengths" in meta:
        lengths = [int(v) for v in meta["trace_lengths"].split(",")]
        if len(lengths) != count or any(not 0 < n <= width for n in lengths):
            raise DomainError("trace_lengths meta disagrees with the payload")
    traces = [
        LeakageTrace(
            samples=rows[i, : lengths[i]].copy(),
            sample_rate=rate,
            markers=MarkerTable.empty(),
            meta=dict(meta),
        )
        for i in range(count)
    ]

    sidecar = labels_path(path)
    if not sidecar.exists():
        return TraceSet(traces, np.zeros((count, 0), dtype=np.int8))
    cells: dict[tuple[int, int], tuple[int, int]] = {}
    with open(sidecar, newline="") as fh:
        reader = csv.reader(fh)
        header_row = next(reader, None)
        if header_row != ["trace_index", "swap_index", "cond", "interfered"]:
            raise DomainError(f"{sidecar} has an unexpected header")
        for row in reader:
            if len(row) != 4:
                raise DomainError(f"{sidecar} has a malformed row: {row!r}")
            i, j, cond, flag = (int(v) for v in row)
            cells[(i, j)] = (cond, flag)
    if not cells:
        return TraceSet(traces, np.zeros((count, 0), dtype=np.int8))
    swaps = max(j for _, j in cells) + 1
    labels = np.empty((count, swaps), dtype=np.int8)
    interfered = np.zeros((count, swaps), dtype=bool)
    for i in range(count):
        for j in range(swaps):
            if (i, j) not in cells:
                raise DomainError(f"{sidecar} is missing trace {i} swap {j}")
            labels[i, j], interfered[i, j] = cells[(i, j)]
    return TraceSet(traces, labels, interfered)
