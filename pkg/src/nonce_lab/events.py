"""Micro-op event stream shared by the arithmetic and swap layers.

The leakage simulator does not model voltages directly; it consumes a list of
SwapTraceEvent records describing what the device did and how many bits
toggled while doing it. Field operations and swap word operations both emit
into the same stream so that a full scalar multiplication serializes to one
ordered event list.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, unique

WORD_BITS = 64


@unique
class OpKind(Enum):
    """What a single recorded micro-operation was."""

    MASK_COMPUTE = "mask_compute"
    INV_MASK_COMPUTE = "inv_mask_compute"
    DELTA_COMPUTE = "delta_compute"
    STORE_A = "store_a"
    STORE_B = "store_b"
    FIELD_MUL = "field_mul"
    FIELD_SQUARE = "field_square"
    FIELD_ADD_SUB = "field_add_sub"
    RERANDOMIZE = "rerandomize"


# Word-level ops handle one 64-bit machine word, so their leak value (a
# Hamming weight or distance) can never exceed WORD_BITS.
WORD_OP_KINDS = frozenset(
    {
        OpKind.MASK_COMPUTE,
        OpKind.INV_MASK_COMPUTE,
        OpKind.DELTA_COMPUTE,
        OpKind.STORE_A,
        OpKind.STORE_B,
    }
)


@dataclass(frozen=True, slots=True)
class SwapTraceEvent:
    """One micro-operation with its data-dependent leak value.

    leak_value is a bit count (Hamming weight or Hamming distance) of
    whatever the operation touched. ground_truth_cond carries the swap
    condition for events that belong to a conditional swap and None for
    plain arithmetic; it exists so simulated traces can be labeled, and a
    classifier must never read it.
    """

    op_kind: OpKind
    leak_value: int
    time_index: int
    ground_truth_cond: int | None = None

    def __post_init__(self) -> None:
        if self.leak_value < 0:
            raise ValueError(f"negative leak value {self.leak_value}")
        if self.op_kind in WORD_OP_KINDS and self.leak_value > WORD_BITS:
            raise ValueError(
                f"{self.op_kind.value} leak {self.leak_value} exceeds word width"
            )
        if self.time_index < 0:
            raise ValueError(f"negative time index {self.time_index}")
        if self.ground_truth_cond not in (None, 0, 1):
            raise ValueError(f"swap condition must be 0 or 1, got {self.ground_truth_cond}")


class EventRecorder:
    """Append-only sink assigning strictly increasing time indices."""

    def __init__(self) -> None:
        self.events: list[SwapTraceEvent] = []

    def emit(self, kind: OpKind, leak_value: int, cond: int | None = None) -> None:
        self.events.append(
            SwapTraceEvent(kind, leak_value, len(self.events), cond)
        )

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)
