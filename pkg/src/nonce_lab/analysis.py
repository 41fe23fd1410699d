"""Leakage assessment and profiled classification of swap conditions.

Two consumers share this module: the assessment path runs Welch's
t-test over labelled capture campaigns and flags sample points beyond
the |t| > 4.5 threshold, and the attack path fits per-class Gaussian
templates at the strongest points and turns aligned swap windows into
nonce bits.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg

from .dsp import AlignedSwapWindows, rectified_envelope
from .errors import AlignmentError, ConfigError, DomainError, StatError
from .tracesim import (
    LeakageTrace,
    MarkerTable,
    SimConfig,
    TraceSet,
    swap_windows,
)

MODEL_MAGIC = b"SCTM"
MODEL_VERSION = 1
LEAK_THRESHOLD = 4.5

# Keeps t finite when both classes have zero variance at a sample;
# equal means then give t = 0 instead of 0/0.
_VARIANCE_FLOOR = 1e-30


@dataclass(frozen=True, eq=False, slots=True)
class TTestResult:
    """Per-sample Welch statistics for a two-class campaign."""

    t_values: np.ndarray
    n0: int
    n1: int

    @property
    def max_abs_t(self) -> float:
        return float(np.max(np.abs(self.t_values)))

    def leaking_points(self, threshold: float = LEAK_THRESHOLD) -> np.ndarray:
        return np.flatnonzero(np.abs(self.t_values) > threshold)


@dataclass(frozen=True, slots=True)
class BitPrediction:
    """Classifier output for one swap window."""

    cond_guess: int
    probability: float

    def __post_init__(self) -> None:
        if self.cond_guess not in (0, 1):
            raise DomainError("cond_guess must be 0 or 1")
        if not 0.0 <= self.probability <= 1.0:
            raise DomainError("probability must lie in [0, 1]")


@dataclass(frozen=True, eq=False, slots=True)
class NonceEstimate:
    """Recovered nonce bits with the window-level evidence behind them."""

    bits: tuple[int, ...]
    conds: tuple[int, ...]
    predictions: tuple[BitPrediction, ...]

    @property
    def value(self) -> int:
        out = 0
        for bit in self.bits:
            out = (out << 1) | bit
        return out


def _as_matrix(data: TraceSet | np.ndarray | Sequence) -> np.ndarray:
    if isinstance(data, TraceSet):
        sizes = {t.samples.size for t in data.traces}
        if len(sizes) != 1:
            raise DomainError("traces must share one length to form a matrix")
        return np.stack([t.samples for t in data.traces]).astype(np.float64)
    try:
        matrix = np.asarray(data, dtype=np.float64)
    except ValueError as exc:
        raise DomainError("traces must share one length to form a matrix") from exc
    if matrix.ndim != 2:
        raise DomainError("expected a 2-D trace matrix")
    return matrix


def _class_split(
    matrix: np.ndarray, labels: Sequence
) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(labels).ravel()
    if y.size != matrix.shape[0]:
        raise DomainError("one label per trace required")
    if not np.isin(y, (0, 1)).all():
        raise DomainError("labels must be 0 or 1")
    return matrix[y == 0], matrix[y == 1]


def feature_matrix(
    data: TraceSet | np.ndarray, median_samples: int
) -> np.ndarray:
    """Rectified-median envelope of every trace, one row each.

    Classification features must not depend on the carrier phase at the
    window position, so windows are always reduced to envelopes before
    fitting or scoring.
    """
    matrix = _as_matrix(data)
    return np.stack(
        [rectified_envelope(row, median_samples) for row in matrix]
    )


def harvest_swap_windows(trace_set: TraceSet) -> TraceSet:
    """Cut the swap windows out of full traces into a window-level set.

    Profiling operates on isolated windows; this turns a set of whole
    scalar multiplications into one, keeping each window's condition as
    its label and skipping windows flagged as interfered.
    """
    windows: list[LeakageTrace] = []
    labels: list[int] = []
    for row, trace in enumerate(trace_set.traces):
        for col, window in enumerate(swap_windows(trace)):
            if trace_set.interfered is not None and trace_set.interfered[row, col]:
                continue
            windows.append(
                LeakageTrace(
                    samples=trace.samples[window.start : window.end].copy(),
                    sample_rate=trace.sample_rate,
                    markers=MarkerTable.empty(),
                    meta=dict(trace.meta),
                )
            )
            labels.append(window.cond)
    if not windows:
        raise DomainError("no usable swap windows to harvest")
    return TraceSet(windows, np.asarray(labels, dtype=np.int8).reshape(-1, 1))


def welch_t(data: TraceSet | np.ndarray, labels: Sequence) -> TTestResult:
    """Two-class Welch t statistic at every sample point."""
    matrix = _as_matrix(data)
    class0, class1 = _class_split(matrix, labels)
    n0, n1 = class0.shape[0], class1.shape[0]
    if n0 < 2 or n1 < 2:
        raise StatError("each class needs at least 2 traces")
    delta = class0.mean(axis=0) - class1.mean(axis=0)
    spread = class0.var(axis=0, ddof=1) / n0 + class1.var(axis=0, ddof=1) / n1
    t = delta / np.sqrt(np.maximum(spread, _VARIANCE_FLOOR))
    return TTestResult(t_values=t, n0=n0, n1=n1)


def select_poi(result: TTestResult, count: int) -> np.ndarray:
    """Indices of the strongest |t| values, ties won by the lower index."""
    magnitude = np.abs(result.t_values)
    if not 1 <= count <= magnitude.size:
        raise ConfigError(
            f"poi count must lie in [1, {magnitude.size}], got {count}"
        )
    order = np.lexsort((np.arange(magnitude.size), -magnitude))
    return order[:count].astype(np.int64)


@dataclass(eq=False)
class TemplateModel:
    """Per-class Gaussian profile over selected points of interest."""

    poi: np.ndarray
    mean0: np.ndarray
    mean1: np.ndarray
    cov: np.ndarray
    mode: str
    trained_on: dict[str, str] = field(default_factory=dict)
    _chol: tuple | None = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        self.poi = np.asarray(self.poi, dtype=np.int64)
        self.mean0 = np.asarray(self.mean0, dtype=np.float64)
        self.mean1 = np.asarray(self.mean1, dtype=np.float64)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        p = self.poi.size
        if p == 0:
            raise DomainError("a template needs at least one poi")
        if (np.diff(self.poi) <= 0).any() or self.poi[0] < 0:
            raise DomainError("poi must be strictly increasing and non-negative")
        if self.mean0.shape != (p,) or self.mean1.shape != (p,):
            raise DomainError("class means must match the poi count")
        if self.mode == "diag":
            if self.cov.shape != (p,):
                raise DomainError("diagonal covariance must be a vector")
            if (self.cov <= 0.0).any():
                raise StatError("covariance is singular after regularization")
        elif self.mode == "full":
            if self.cov.shape != (p, p):
                raise DomainError("full covariance must be a square matrix")
            if not np.allclose(self.cov, self.cov.T, rtol=1e-9, atol=0.0):
                raise StatError("covariance must be symmetric")
            try:
                self._chol = linalg.cho_factor(self.cov)
            except linalg.LinAlgError as exc:
                raise StatError(
                    "covariance is singular after regularization"
                ) from exc
        else:
            raise ConfigError(f"unknown template mode {self.mode!r}")

    def _mahalanobis(self, deltas: np.ndarray) -> np.ndarray:
        """Quadratic forms delta' C^-1 delta, batched over rows."""
        if self.mode == "diag":
            return np.sum(deltas**2 / self.cov, axis=-1)
        solved = linalg.cho_solve(self._chol, np.atleast_2d(deltas).T).T
        return np.sum(np.atleast_2d(deltas) * solved, axis=-1)


def fit_templates(
    data: TraceSet | np.ndarray,
    labels: Sequence,
    poi: Sequence[int],
    *,
    mode: str = "diag",
    ridge_scale: float = 1e-6,
    trained_on: dict[str, str] | None = None,
) -> TemplateModel:
    """Class means plus pooled, ridge-regularized covariance at the poi.

    The ridge term is ``ridge_scale`` times the mean of the covariance
    trace, so regularization scales with the signal.  Full mode demands
    at least ``10 * len(poi)`` traces per class; diagonal mode only
    needs two.
    """
    matrix = _as_matrix(data)
    poi_sorted = np.sort(np.asarray(poi, dtype=np.int64))
    if poi_sorted.size == 0:
        raise DomainError("poi must not be empty")
    if np.unique(poi_sorted).size != poi_sorted.size:
        raise DomainError("poi must be unique")
    if poi_sorted[0] < 0 or poi_sorted[-1] >= matrix.shape[1]:
        raise DomainError("poi fall outside the trace length")
    class0, class1 = _class_split(matrix[:, poi_sorted], labels)
    n0, n1 = class0.shape[0], class1.shape[0]
    if n0 < 2 or n1 < 2:
        raise StatError("each class needs at least 2 traces")
    if mode == "full" and min(n0, n1) < 10 * poi_sorted.size:
        raise StatError(
            f"full covariance over {poi_sorted.size} poi needs at least "
            f"{10 * poi_sorted.size} traces per class, got {min(n0, n1)}"
        )
    mean0 = class0.mean(axis=0)
    mean1 = class1.mean(axis=0)
    residual0 = class0 - mean0
    residual1 = class1 - mean1
    dof = n0 + n1 - 2
    if mode == "diag":
        pooled = (
            np.sum(residual0**2, axis=0) + np.sum(residual1**2, axis=0)
        ) / dof
        ridge = ridge_scale * float(pooled.mean())
        cov = pooled + ridge
    else:
        pooled = (residual0.T @ residual0 + residual1.T @ residual1) / dof
        ridge = ridge_scale * float(np.trace(pooled)) / poi_sorted.size
        cov = pooled + ridge * np.eye(poi_sorted.size)
    meta = {
        "mode": mode,
        "feature_length": str(matrix.shape[1]),
        "n0": str(n0),
        "n1": str(n1),
    }
    if trained_on:
        meta.update(trained_on)
    return TemplateModel(
        poi=poi_sorted, mean0=mean0, mean1=mean1, cov=cov, mode=mode,
        trained_on=meta,
    )


def _log_likelihood_ratio(model: TemplateModel, features: np.ndarray) -> np.ndarray:
    d0 = features - model.mean0
    d1 = features - model.mean1
    return 0.5 * (model._mahalanobis(d0) - model._mahalanobis(d1))


def classify(model: TemplateModel, window: Sequence[float]) -> BitPrediction:
    """Likelihood-ratio decision for one feature window.

    The probability is the normalized class-1 likelihood under equal
    priors; an exact tie resolves to condition 0.
    """
    x = np.asarray(window, dtype=np.float64).ravel()
    if x.size <= int(model.poi[-1]):
        raise DomainError(
            f"window of {x.size} samples does not cover poi up to {model.poi[-1]}"
        )
    llr = float(np.atleast_1d(_log_likelihood_ratio(model, x[model.poi]))[0])
    probability = 1.0 / (1.0 + np.exp(-np.clip(llr, -700.0, 700.0)))
    return BitPrediction(int(llr > 0.0), float(probability))


def classify_batch(
    model: TemplateModel, matrix: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``classify`` over a matrix of feature windows."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] <= int(model.poi[-1]):
        raise DomainError("matrix rows must cover all poi")
    llr = _log_likelihood_ratio(model, matrix[:, model.poi])
    probabilities = 1.0 / (1.0 + np.exp(-np.clip(llr, -700.0, 700.0)))
    return (llr > 0.0).astype(np.int8), probabilities


def fit_swap_classifier(
    train_set: TraceSet,
    cfg: SimConfig,
    *,
    poi_count: int = 64,
    mode: str = "diag",
) -> TemplateModel:
    """Standard profiling pipeline for window-level training sets.

    Envelopes every window, picks the poi by t-test strength, and fits
    templates.  The envelope width and window length ride along in the
    model metadata so scoring uses identical preprocessing.
    """
    median_samples = max(3, cfg.samples_per_event // 4)
    features = feature_matrix(train_set, median_samples)
    labels = train_set.labels[:, 0]
    t_result = welch_t(features, labels)
    poi = select_poi(t_result, min(poi_count, features.shape[1]))
    trained_on = {"median_samples": str(median_samples)}
    if train_set.traces:
        for key in ("variant", "word_count", "curve"):
            if key in train_set.traces[0].meta:
                trained_on[key] = train_set.traces[0].meta[key]
    return fit_templates(
        features, labels, poi, mode=mode, trained_on=trained_on
    )


def recover_nonce_bits(
    trace: LeakageTrace,
    model: TemplateModel,
    windows: AlignedSwapWindows,
    multiplier: str | None = None,
    *,
    median_samples: int | None = None,
) -> NonceEstimate:
    """Classify every aligned swap window and undo the swap encoding.

    Ladder windows end flush against the following iteration, so slices
    anchor there; double-and-add windows anchor at their start.  On the
    ladder each condition is the XOR of adjacent scalar bits, seeded at
    the most significant bit, and is unfolded back into bits; with
    double-and-add the conditions are the bits themselves.
    """
    if multiplier is None:
        multiplier = trace.meta.get("multiplier", "ladder")
    if multiplier not in ("ladder", "daa"):
        raise ConfigError(f"unknown multiplier {multiplier!r}")
    if len(windows) == 0:
        raise AlignmentError("no swap windows to classify")
    width = int(model.trained_on.get("feature_length", "0"))
    if width <= 0:
        raise DomainError("model metadata lacks the training window length")
    if median_samples is None:
        median_samples = int(model.trained_on.get("median_samples", "0"))
        if median_samples < 3:
            raise DomainError("model metadata lacks the envelope width")
    samples = trace.samples
    if samples.size < width:
        raise AlignmentError("trace is shorter than one swap window")
    predictions: list[BitPrediction] = []
    for start, end in windows.spans:
        # Anchor at the edge the aligner fixes precisely, then clamp the
        # window into the trace; detected positions can sit a few samples
        # off at the boundaries.
        if multiplier == "ladder":
            hi = min(end, samples.size)
            lo = hi - width
            if lo < 0:
                lo, hi = 0, width
        else:
            lo = max(start, 0)
            hi = lo + width
            if hi > samples.size:
                lo, hi = samples.size - width, samples.size
        features = rectified_envelope(samples[lo:hi], median_samples)
        predictions.append(classify(model, features))
    conds = tuple(p.cond_guess for p in predictions)
    if multiplier == "ladder":
        bits: list[int] = []
        previous = 0
        for cond in conds:
            previous ^= cond
            bits.append(previous)
    else:
        bits = list(conds)
    return NonceEstimate(
        bits=tuple(bits), conds=conds, predictions=tuple(predictions)
    )


def write_model(model: TemplateModel, path: Path | str) -> None:
    """Serialize a template model to its binary container."""
    meta_blob = "".join(
        f"{k}={v}\n" for k, v in sorted(model.trained_on.items())
    ).encode()
    mode_flag = 0 if model.mode == "diag" else 1
    with open(path, "wb") as fh:
        fh.write(
            struct.pack(
                "<4sIBII",
                MODEL_MAGIC,
                MODEL_VERSION,
                mode_flag,
                model.poi.size,
                len(meta_blob),
            )
        )
        fh.write(meta_blob)
        fh.write(model.poi.astype("<i8").tobytes())
        fh.write(model.mean0.astype("<f8").tobytes())
        fh.write(model.mean1.astype("<f8").tobytes())
        fh.write(model.cov.astype("<f8").tobytes())


def read_model(path: Path | str) -> TemplateModel:
    """Load a template model, revalidating its invariants."""
    header_fmt = "<4sIBII"
    with open(path, "rb") as fh:
        header = fh.read(struct.calcsize(header_fmt))
        if len(header) != struct.calcsize(header_fmt):
            raise DomainError(f"{path} is truncated")
        magic, version, mode_flag, p, meta_len = struct.unpack(header_fmt, header)
        if magic != MODEL_MAGIC:
            raise DomainError(f"{path} is not a template model (bad magic)")
        if version != MODEL_VERSION:
            raise DomainError(f"unsupported model version {version}")
        if mode_flag not in (0, 1):
            raise DomainError(f"unknown covariance mode flag {mode_flag}")
        trained_on: dict[str, str] = {}
        for line in fh.read(meta_len).decode().splitlines():
            if line:
                key, _, value = line.partition("=")
                trained_on[key] = value
        mode = "diag" if mode_flag == 0 else "full"
        cov_count = p if mode == "diag" else p * p
        payload = fh.read(8 * (3 * p + cov_count))
        if len(payload) != 8 * (3 * p + cov_count):
            raise DomainError(f"{path} is truncated")
    poi = np.frombuffer(payload[: 8 * p], dtype="<i8")
    mean0 = np.frombuffer(payload[8 * p : 16 * p], dtype="<f8")
    mean1 = np.frombuffer(payload[16 * p : 24 * p], dtype="<f8")
    cov = np.frombuffer(payload[24 * p :], dtype="<f8")
    if mode == "full":
        cov = cov.reshape(p, p)
    return TemplateModel(
        poi=poi.copy(),
        mean0=mean0.copy(),
        mean1=mean1.copy(),
        cov=cov.copy(),
        mode=mode,
        trained_on=trained_on,
    )


def export_t_csv(result: TTestResult, path: Path | str) -> None:
    """Write the t-curve as CSV for plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("sample_index", "t_value"))
        for i, value in enumerate(result.t_values):
            writer.writerow((i, f"{value:.9g}"))
