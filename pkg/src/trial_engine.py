"""Seeded Monte Carlo generation of timestamped detection events.

Trials are generated in fixed-size blocks. Every block owns a counter-based
generator derived from (seed, splitter mode, block index), so the event
stream does not depend on how many workers produce it.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Protocol, Tuple

import numpy as np
from scipy.special import ndtr, ndtri

from .config import RunConfig, SourceParams, TrialTiming, update_model
from .errors import ParameterValidationError, UnsortedEventsError
from .models.events import Detector, EventStream, Gate
from .models.reports import MomentSet
from .stats_core import predict_report
from .utils import BLOCK_SIZE, STREAM_KEYS, TIME_RESOLUTION_NS, block_rng, quantize_times, trial_blocks

logger = logging.getLogger(__name__)

FWHM_TO_SIGMA = 2.355

_BlockArrays = Tuple[np.ndarray, np.ndarray, np.ndarray]


class Envelope(Protocol):
    """Temporal profile of a pulse-shaped photon source."""

    def probability(self, low: float, high: float) -> float: ...

    def sample(
        self, rng: np.random.Generator, size: int, low: float, high: float
    ) -> np.ndarray: ...


@dataclass(frozen=True)
class GaussianEnvelope:
    """Gaussian pulse with sigma = fwhm / 2.355."""

    center: float
    fwhm: float

    def __post_init__(self) -> None:
        """Reject non-positive widths."""
        if not self.fwhm > 0:
            raise ParameterValidationError(f"fwhm must be > 0, got {self.fwhm}")

    @property
    def sigma(self) -> float:
        """Standard deviation in ns."""
        return self.fwhm / FWHM_TO_SIGMA

    def probability(self, low: float, high: float) -> float:
        """Probability mass of the untruncated pulse inside [low, high)."""
        return float(ndtr((high - self.center) / self.sigma) - ndtr((low - self.center) / self.sigma))

    def sample(self, rng: np.random.Generator, size: int, low: float, high: float) -> np.ndarray:
        """Draw `size` times from the pulse truncated to [low, high) by inverse CDF."""
        lower = ndtr((low - self.center) / self.sigma)
        upper = ndtr((high - self.center) / self.sigma)
        u = rng.random(size)
        with np.errstate(divide="ignore", invalid="ignore"):
            times = self.center + self.sigma * ndtri(lower + u * (upper - lower))
        times = np.nan_to_num(times, nan=self.center, posinf=high, neginf=low)
        return np.clip(times, low, np.nextafter(high, low))


def envelope_sample(
    center: float, fwhm: float, rng: np.random.Generator, trial_period: float = 4000.0
) -> float:
    """One photon time from a Gaussian pulse truncated to [0, trial_period)."""
    return float(GaussianEnvelope(center, fwhm).sample(rng, 1, 0.0, trial_period)[0])


def write_envelope(timing: TrialTiming) -> GaussianEnvelope:
    """Envelope of the write pulse; field-1 photon times follow it.

    Args:
        timing: Trial timing

    Returns:
        Gaussian centred on the write pulse with its FWHM
    """
    return GaussianEnvelope(timing.write_center, timing.write_fwhm)


def read_envelope(timing: TrialTiming) -> GaussianEnvelope:
    """Envelope of the read pulse; field-2 photon and leakage times follow it.

    Args:
        timing: Trial timing

    Returns:
        Gaussian centred on the read pulse with its FWHM
    """
    return GaussianEnvelope(timing.read_center, timing.read_fwhm)


def gate_acceptance(envelope: Envelope, center: float, width: float, trial_period: float) -> float:
    """Probability that a photon of the period-truncated envelope lands in the gate."""
    inside_period = envelope.probability(0.0, trial_period)
    if inside_period <= 0:
        return 0.0
    low = max(0.0, center - width / 2)
    high = min(trial_period, center + width / 2)
    return envelope.probability(low, high) / inside_period


def gated_source(cfg: RunConfig) -> SourceParams:
    """Source parameters with the gate acceptances folded into eta1 and eta2.

    predict_report of the result is the per-gate oracle of the simulated run.
    """
    timing = cfg.timing
    accept1 = gate_acceptance(write_envelope(timing), timing.gate1_center, timing.gate_width, timing.trial_period)
    accept2 = gate_acceptance(read_envelope(timing), timing.gate2_center, timing.gate_width, timing.trial_period)
    return cfg.source.model_copy(
        update={"eta1": cfg.source.eta1 * accept1, "eta2": cfg.source.eta2 * accept2}
    )


def predict_gated(cfg: RunConfig, cutoff: Optional[int] = None) -> MomentSet:
    """Analytic per-gate moments of a run configuration."""
    return predict_report(gated_source(cfg), cutoff)


def rescale_gate_width(run: RunConfig, new_width: float) -> RunConfig:
    """Change the gate width while keeping the noise rates fixed.

    Uniform backgrounds scale with the width; leakage follows the read
    envelope, so it scales with the change in read-envelope acceptance.
    """
    if not new_width > 0:
        raise ParameterValidationError(f"gate width must be > 0, got {new_width}")
    timing = run.timing
    envelope = read_envelope(timing)
    old_accept = gate_acceptance(envelope, timing.gate2_center, timing.gate_width, timing.trial_period)
    new_accept = gate_acceptance(envelope, timing.gate2_center, new_width, timing.trial_period)
    scale = new_width / timing.gate_width
    leak2 = run.source.leak2 * new_accept / old_accept if old_accept > 0 else 0.0
    logger.debug("Gate %s -> %s ns: background x%.4f, leakage -> %.6f", timing.gate_width, new_width, scale, leak2)
    return update_model(
        run,
        {
            "timing": {"gate_width": new_width},
            "source": {"bg1": run.source.bg1 * scale, "bg2": run.source.bg2 * scale, "leak2": leak2},
        },
    )


def _draw_field_counts(
    source: SourceParams, rng: np.random.Generator, size: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Emitted (n1, n2) per trial from the configured source law."""
    if source.source_model == "classical_twin":
        intensity = rng.exponential(source.p, size)
        return rng.poisson(intensity), rng.poisson(intensity)
    n = rng.geometric(1.0 / (1.0 + source.p), size) - 1
    return n, n


def _uniform_in_gate(rng: np.random.Generator, size: int, window: Tuple[float, float]) -> np.ndarray:
    """Uniform background times in the gate, last tick at least one grid step below its end."""
    low, high = window
    return np.minimum(rng.uniform(low, high, size), high - TIME_RESOLUTION_NS)


def _leakage_in_gate(
    rng: np.random.Generator, size: int, envelope: GaussianEnvelope, window: Tuple[float, float]
) -> np.ndarray:
    """Read-pulse leakage truncated to the gate, last tick at least one grid step below its end."""
    low, high = window
    return np.minimum(envelope.sample(rng, size, low, high), high - TIME_RESOLUTION_NS)


def _field_events(
    rng: np.random.Generator,
    trials: np.ndarray,
    signal: np.ndarray,
    envelope: GaussianEnvelope,
    background_mean: float,
    gate_window: Tuple[float, float],
    trial_period: float,
    leak_mean: float = 0.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Trial indices and times of one detected field plus its noise."""
    size = trials.shape[0]
    background = rng.poisson(background_mean, size)
    leakage = rng.poisson(leak_mean, size) if leak_mean > 0 else np.zeros(size, dtype=np.int64)
    times = np.concatenate(
        [
            envelope.sample(rng, int(signal.sum()), 0.0, trial_period),
            _uniform_in_gate(rng, int(background.sum()), gate_window),
            _leakage_in_gate(rng, int(leakage.sum()), envelope, gate_window),
        ]
    )
    owners = np.concatenate([np.repeat(trials, signal), np.repeat(trials, background), np.repeat(trials, leakage)])
    return owners, times


def _sample_block(cfg: RunConfig, start: int, stop: int, rng: np.random.Generator) -> _BlockArrays:
    """Events of trials [start, stop), sorted by (trial, time, detector)."""
    source, timing = cfg.source, cfg.timing
    size = stop - start
    trials = np.arange(start, stop, dtype=np.int64)
    n1, n2 = _draw_field_counts(source, rng, size)

    if cfg.splitter_mode in ("pair", "auto1"):
        detected1 = rng.binomial(n1, source.eta1)
        owners1, times1 = _field_events(
            rng, trials, detected1, write_envelope(timing), source.bg1, timing.gate_window(1), timing.trial_period
        )
    if cfg.splitter_mode in ("pair", "auto2"):
        detected2 = rng.binomial(n2, source.zeta * source.eta2)
        owners2, times2 = _field_events(
            rng,
            trials,
            detected2,
            read_envelope(timing),
            source.bg2,
            timing.gate_window(2),
            timing.trial_period,
            leak_mean=source.leak2,
        )

    if cfg.splitter_mode == "pair":
        owners = np.concatenate([owners1, owners2])
        times = np.concatenate([times1, times2])
        detectors = np.concatenate(
            [np.full(owners1.shape[0], Detector.D1, np.int8), np.full(owners2.shape[0], Detector.D2, np.int8)]
        )
    else:
        owners, times = (owners1, times1) if cfg.splitter_mode == "auto1" else (owners2, times2)
        # 50/50 beam splitter, photon by photon
        detectors = np.where(rng.random(owners.shape[0]) < 0.5, Detector.D1, Detector.D2).astype(np.int8)

    times = quantize_times(times, timing.trial_period)
    order = np.lexsort((detectors, times, owners))
    return owners[order], detectors[order], times[order]


def sample_trial(j: int, cfg: RunConfig, rng: np.random.Generator) -> EventStream:
    """Events of trial j alone, drawn from a generator dedicated to that trial."""
    if not 0 <= j < cfg.timing.trials_per_run:
        raise ParameterValidationError(f"trial index {j} outside the run")
    owners, detectors, times = _sample_block(cfg, j, j + 1, rng)
    return EventStream(owners, detectors, times, cfg.timing.trial_period, cfg.timing.trials_per_run)


def _run_block(job: Tuple[RunConfig, int, int, int]) -> _BlockArrays:
    """Generate one block with its own generator; runs in a worker process."""
    cfg, block_index, start, stop = job
    rng = block_rng(cfg.seed, block_index, STREAM_KEYS[cfg.splitter_mode])
    return _sample_block(cfg, start, stop, rng)


def simulate(cfg: RunConfig, workers: int = 1, block_size: int = BLOCK_SIZE) -> EventStream:
    """Raw event stream of a run, sorted by (trial_index, time).

    Args:
        cfg: Run configuration including the seed
        workers: Processes used to generate blocks; the output does not depend on it
        block_size: Trials per random-number block

    Returns:
        Ungated stream of every detection event
    """
    n_trials = cfg.timing.trials_per_run
    jobs = [(cfg, index, start, stop) for index, start, stop in trial_blocks(n_trials, block_size)]
    logger.info(
        "Simulating %d trials in %s mode (%d blocks, %d workers)", n_trials, cfg.splitter_mode, len(jobs), workers
    )
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            blocks: List[_BlockArrays] = list(pool.map(_run_block, jobs))
    else:
        blocks = [_run_block(job) for job in jobs]
    if not blocks:
        return EventStream.empty(cfg.timing.trial_period, n_trials)
    owners, detectors, times = (np.concatenate(column) for column in zip(*blocks))
    stream = EventStream(owners, detectors, times, cfg.timing.trial_period, n_trials)
    logger.info("Generated %d events", len(stream))
    return stream


def _require_sorted(events: EventStream) -> None:
    """Raise UnsortedEventsError at the first out-of-order event."""
    position = events.first_unsorted()
    if position is not None:
        raise UnsortedEventsError(f"events are not sorted by (trial_index, time) at index {position}")


def apply_dead_time(events: EventStream, dead_time: float) -> EventStream:
    """Remove events closer than `dead_time` to the previous kept event on the same detector."""
    _require_sorted(events)
    if dead_time < 0:
        raise ParameterValidationError(f"dead_time must be >= 0, got {dead_time}")
    if dead_time == 0 or len(events) < 2:
        return events
    keep = np.ones(len(events), dtype=bool)
    absolute = events.absolute_time()
    for detector in (Detector.D1, Detector.D2):
        index = np.flatnonzero(events.detector == detector)
        times = absolute[index]
        kept = np.ones(index.shape[0], dtype=bool)
        anchor = np.empty(index.shape[0])
        # only events following their predecessor within dead_time can be lost
        for i in np.flatnonzero(np.diff(times) < dead_time) + 1:
            last = times[i - 1] if kept[i - 1] else anchor[i - 1]
            anchor[i] = last
            kept[i] = times[i] - last >= dead_time
        keep[index] = kept
    logger.debug("Dead time %.1f ns removed %d events", dead_time, int((~keep).sum()))
    return events.select(keep)


def gate_events(events: EventStream, timing: TrialTiming) -> EventStream:
    """Keep events inside the half-open gate windows and tag them gate1 or gate2."""
    _require_sorted(events)
    if not math.isclose(events.trial_period, timing.trial_period):
        raise ParameterValidationError("event stream and timing disagree on the trial period")
    gate = np.full(len(events), Gate.NONE, dtype=np.int8)
    for tag in (Gate.GATE2, Gate.GATE1):
        low, high = timing.gate_window(int(tag))
        gate[(events.time >= low) & (events.time < high)] = tag
    inside = gate != Gate.NONE
    return events.with_gates(gate).select(inside)


def detect(cfg: RunConfig, workers: int = 1, block_size: int = BLOCK_SIZE) -> EventStream:
    """Simulated stream after the detector dead time, ready to be written or gated."""
    return apply_dead_time(simulate(cfg, workers, block_size), cfg.dead_time)
