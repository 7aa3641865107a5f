"""Detection events and event streams."""

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ..errors import ParameterValidationError


class Detector(IntEnum):
    """Single-photon detectors."""

    D1 = 1
    D2 = 2


class Gate(IntEnum):
    """Gate tag attached by gating; NONE means not gated yet."""

    NONE = 0
    GATE1 = 1
    GATE2 = 2


Channel = Tuple[Detector, Gate]


def parse_channel(spec: str) -> Channel:
    """Turn 'D1@gate2' into (Detector.D1, Gate.GATE2)."""
    try:
        detector, gate = spec.split("@")
        return Detector[detector.upper()], Gate[gate.upper()]
    except (KeyError, ValueError):
        raise ParameterValidationError(f"invalid channel '{spec}', expected e.g. 'D1@gate1'") from None


def format_channel(channel: Channel) -> str:
    """Name of a channel in the form D1@gate1."""
    detector, gate = channel
    return f"{Detector(detector).name}@gate{int(gate)}"


class DetectionEvent(NamedTuple):
    """One photoelectric event: trial, detector and time within the trial (ns)."""

    trial_index: int
    detector: Detector
    time: float


@dataclass(frozen=True, eq=False)
class EventStream:
    """Column-oriented stream of detection events.

    Arrays are read-only and share one length. `gate` is None until the
    stream has been passed through gating.
    """

    trial_index: np.ndarray
    detector: np.ndarray
    time: np.ndarray
    trial_period: float
    n_trials: int
    gate: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        """Coerce the columns to typed read-only arrays and check their lengths."""
        columns = {
            "trial_index": np.ascontiguousarray(self.trial_index, dtype=np.int64),
            "detector": np.ascontiguousarray(self.detector, dtype=np.int8),
            "time": np.ascontiguousarray(self.time, dtype=np.float64),
        }
        if self.gate is not None:
            columns["gate"] = np.ascontiguousarray(self.gate, dtype=np.int8)
        lengths = {column.shape for column in columns.values()}
        if len(lengths) != 1 or columns["time"].ndim != 1:
            raise ParameterValidationError("event columns must be 1-d arrays of equal length")
        if self.trial_period <= 0 or self.n_trials < 0:
            raise ParameterValidationError("trial_period must be > 0 and n_trials >= 0")
        for name, column in columns.items():
            column = column.copy() if column.flags.writeable else column
            column.setflags(write=False)
            object.__setattr__(self, name, column)

    @classmethod
    def empty(cls, trial_period: float, n_trials: int) -> "EventStream":
        """Stream without events."""
        return cls(
            np.empty(0, np.int64), np.empty(0, np.int8), np.empty(0, np.float64), trial_period, n_trials
        )

    @classmethod
    def from_events(
        cls, events: Iterable[Tuple[int, int, float]], trial_period: float, n_trials: int
    ) -> "EventStream":
        """Stream from (trial_index, detector, time) tuples."""
        rows = list(events)
        if not rows:
            return cls.empty(trial_period, n_trials)
        trials, detectors, times = zip(*rows)
        return cls(np.array(trials), np.array(detectors), np.array(times, dtype=float), trial_period, n_trials)

    @classmethod
    def concat(cls, parts: Sequence["EventStream"], trial_period: float, n_trials: int) -> "EventStream":
        """Concatenate streams in the given order."""
        if not parts:
            return cls.empty(trial_period, n_trials)
        gated = [part.gate is not None for part in parts]
        if any(gated) and not all(gated):
            raise ParameterValidationError("cannot mix gated and ungated streams")
        return cls(
            np.concatenate([part.trial_index for part in parts]),
            np.concatenate([part.detector for part in parts]),
            np.concatenate([part.time for part in parts]),
            trial_period,
            n_trials,
            np.concatenate([part.gate for part in parts]) if all(gated) else None,
        )

    def __len__(self) -> int:
        """Number of events."""
        return int(self.time.shape[0])

    def __iter__(self) -> Iterator[DetectionEvent]:
        """Events as DetectionEvent tuples."""
        for trial, detector, time in zip(self.trial_index, self.detector, self.time):
            yield DetectionEvent(int(trial), Detector(int(detector)), float(time))

    def absolute_time(self) -> np.ndarray:
        """Time since the start of the run in ns."""
        return self.trial_index * self.trial_period + self.time

    def first_unsorted(self) -> Optional[int]:
        """Index of the first event out of (trial_index, time) order, or None."""
        if len(self) < 2:
            return None
        trial_step = np.diff(self.trial_index)
        out_of_order = (trial_step < 0) | ((trial_step == 0) & (np.diff(self.time) < 0))
        bad = np.flatnonzero(out_of_order)
        return int(bad[0]) + 1 if bad.size else None

    def is_sorted(self) -> bool:
        """Whether the stream is ordered by (trial_index, time)."""
        return self.first_unsorted() is None

    def select(self, mask: np.ndarray) -> "EventStream":
        """Sub-stream of the events where `mask` is true."""
        return EventStream(
            self.trial_index[mask],
            self.detector[mask],
            self.time[mask],
            self.trial_period,
            self.n_trials,
            None if self.gate is None else self.gate[mask],
        )

    def with_gates(self, gate: np.ndarray) -> "EventStream":
        """Same events tagged with the gate each falls in."""
        return EventStream(self.trial_index, self.detector, self.time, self.trial_period, self.n_trials, gate)

    def channel_mask(self, channel: Channel) -> np.ndarray:
        """Events seen on one (detector, gate) channel; requires a gated stream."""
        if self.gate is None:
            raise ParameterValidationError("stream is not gated; channel selection needs gate tags")
        detector, gate = channel
        return (self.detector == int(detector)) & (self.gate == int(gate))

    def counts_per_trial(self, mask: Optional[np.ndarray] = None) -> np.ndarray:
        """Number of (selected) events in every trial of the run."""
        trials = self.trial_index if mask is None else self.trial_index[mask]
        return np.bincount(trials, minlength=self.n_trials)[: self.n_trials]

    def equals(self, other: "EventStream") -> bool:
        """Exact equality of every column and of the run shape."""
        if (self.gate is None) != (other.gate is None):
            return False
        same = (
            self.trial_period == other.trial_period
            and self.n_trials == other.n_trials
            and np.array_equal(self.trial_index, other.trial_index)
            and np.array_equal(self.detector, other.detector)
            and np.array_equal(self.time, other.time)
        )
        return bool(same and (self.gate is None or np.array_equal(self.gate, other.gate)))

    def to_list(self) -> List[DetectionEvent]:
        """Events as a list of DetectionEvent."""
        return list(self)

    def __repr__(self) -> str:
        state = "gated" if self.gate is not None else "raw"
        return f"EventStream(events={len(self)}, trials={self.n_trials}, {state})"
