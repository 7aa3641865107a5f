"""Time-interval analyzer and the normalized correlation estimators.

A start event in trial j is paired with every stop event in trials j..j+K.
The same-trial peak gives N, the mean of the offset-trial peaks gives M,
and g = N / M.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .config import AnalysisConfig, RunConfig
from .errors import ParameterValidationError, UndefinedEstimateError, UnsortedEventsError
from .models.events import Channel, Detector, EventStream, format_channel, parse_channel
from .models.histogram import CoincidenceHistogram, bins_per_period
from .models.reports import CorrelationReport, CsReport, GEstimate, MomentSet
from .trial_engine import gate_events, predict_gated
from .utils import gate_mean_to_rate

logger = logging.getLogger(__name__)

DEFAULT_K = 10
DEFAULT_OFFSETS = 10
DEFAULT_BIN_WIDTH = 2.0
SHARD_SIZE = 65536

ChannelLike = Union[str, Channel]


def _as_channel(channel: ChannelLike) -> Channel:
    """Channel tuple from a "D1@gate1" string or a tuple."""
    return parse_channel(channel) if isinstance(channel, str) else channel


def default_tau_origin(trial_period: float) -> float:
    """Histogram left edge: each peak sits in the middle of its own slot."""
    return -trial_period / 2


def _accumulate(
    start_trial: np.ndarray,
    start_time: np.ndarray,
    stop_trial: np.ndarray,
    stop_time: np.ndarray,
    K: int,
    trial_period: float,
    bin_width: float,
    tau_origin: float,
    n_bins: int,
) -> np.ndarray:
    """Histogram of one shard of start events against every stop event."""
    first = np.searchsorted(stop_trial, start_trial, side="left")
    last = np.searchsorted(stop_trial, start_trial + K, side="right")
    per_start = last - first
    total = int(per_start.sum())
    if total == 0:
        return np.zeros(n_bins, dtype=np.int64)
    owner = np.repeat(np.arange(start_trial.shape[0]), per_start)
    offsets = np.arange(total) - np.repeat(np.cumsum(per_start) - per_start, per_start)
    stop_index = first[owner] + offsets
    tau = (stop_trial[stop_index] - start_trial[owner]) * trial_period + (stop_time[stop_index] - start_time[owner])
    bins = np.floor((tau - tau_origin) / bin_width).astype(np.int64)
    inside = (bins >= 0) & (bins < n_bins)
    return np.bincount(bins[inside], minlength=n_bins).astype(np.int64)


def correlate(
    events: EventStream,
    start_channel: ChannelLike,
    stop_channel: ChannelLike,
    K: int = DEFAULT_K,
    bin_width: float = DEFAULT_BIN_WIDTH,
    tau_origin: Optional[float] = None,
    workers: int = 1,
) -> CoincidenceHistogram:
    """Time-resolved coincidences n(tau) between two gated channels.

    Args:
        events: Gated stream sorted by (trial_index, time)
        start_channel: Channel of start events, e.g. "D1@gate1"
        stop_channel: Channel of stop events, e.g. "D2@gate2"
        K: Offset trials recorded after the start trial
        bin_width: Bin width in ns; must divide the trial period
        tau_origin: Left edge of the histogram, default -trial_period/2
        workers: Threads accumulating start-event shards

    Returns:
        Histogram with K+1 peaks; slot 0 is the same-trial peak

    Raises:
        UnsortedEventsError: the stream is out of order
        ParameterValidationError: K < 1, identical channels or a bin width
            that does not divide the trial period
    """
    position = events.first_unsorted()
    if position is not None:
        raise UnsortedEventsError(f"events are not sorted by (trial_index, time) at index {position}")
    if K < 1:
        raise ParameterValidationError(f"K must be >= 1, got {K}")
    start, stop = _as_channel(start_channel), _as_channel(stop_channel)
    if start == stop:
        raise ParameterValidationError("start and stop channels must differ")
    period = events.trial_period
    origin = default_tau_origin(period) if tau_origin is None else tau_origin
    n_bins = (K + 1) * bins_per_period(period, bin_width)

    start_mask = events.channel_mask(start)
    stop_mask = events.channel_mask(stop)
    start_trial, start_time = events.trial_index[start_mask], events.time[start_mask]
    stop_trial, stop_time = events.trial_index[stop_mask], events.time[stop_mask]

    shards = [slice(i, i + SHARD_SIZE) for i in range(0, start_trial.shape[0], SHARD_SIZE)]

    def run_shard(shard: slice) -> np.ndarray:
        """Histogram of one slice of start events."""
        return _accumulate(
            start_trial[shard], start_time[shard], stop_trial, stop_time, K, period, bin_width, origin, n_bins
        )

    counts = np.zeros(n_bins, dtype=np.int64)
    if workers > 1 and len(shards) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for partial in pool.map(run_shard, shards):
                counts += partial
    else:
        for shard in shards:
            counts += run_shard(shard)

    labels = (format_channel(start), format_channel(stop))
    truncated = int(np.count_nonzero(start_trial > events.n_trials - 1 - K))
    if truncated:
        logger.warning(
            "%s -> %s: %d of %d starts fall in the last %d trials; their later offset trials are not recorded",
            *labels, truncated, start_trial.shape[0], K,
        )
    logger.debug("%s -> %s: %d starts, %d coincidences", *labels, start_trial.shape[0], int(counts.sum()))
    return CoincidenceHistogram(counts, bin_width, period, K, origin, int(start_trial.shape[0]), labels)


def _check_span(h: CoincidenceHistogram, n_offsets: int) -> None:
    """Reject requests for more offset peaks than the histogram holds."""
    if n_offsets < 1 or h.K < n_offsets:
        raise ParameterValidationError(f"histogram records {h.K} offset trials, {n_offsets} are needed")


def offset_average(h: CoincidenceHistogram, n_offsets: int = DEFAULT_OFFSETS) -> np.ndarray:
    """m(tau): bin-wise mean of offset peaks 1..n_offsets shifted back onto slot 0."""
    _check_span(h, n_offsets)
    return np.mean([h.slot(k) for k in range(1, n_offsets + 1)], axis=0)


def totals(h: CoincidenceHistogram, n_offsets: int = DEFAULT_OFFSETS) -> Tuple[int, float, np.ndarray]:
    """(N, M, offset peak sums): same-trial total, mean offset total and the raw offset totals."""
    _check_span(h, n_offsets)
    offset_sums = np.array([int(h.slot(k).sum()) for k in range(1, n_offsets + 1)], dtype=np.int64)
    return int(h.slot(0).sum()), float(offset_sums.sum()) / n_offsets, offset_sums


def estimate_g(N: int, offset_sums: Sequence[int]) -> GEstimate:
    """g = N / M with Poisson errors on N and on the summed offset counts.

    Raises:
        UndefinedEstimateError: every offset peak is empty (M = 0)
    """
    sums = np.asarray(offset_sums, dtype=np.int64)
    if sums.size == 0:
        raise ParameterValidationError("at least one offset peak is required")
    if N < 0 or np.any(sums < 0):
        raise ParameterValidationError("coincidence totals must be >= 0")
    offset_total = int(sums.sum())
    m_total = offset_total / sums.size
    if offset_total == 0:
        raise UndefinedEstimateError("no offset-trial coincidences: M = 0, g is undefined")
    if N == 0:
        return GEstimate(0.0, 0.0, 0, m_total, offset_total, degenerate=True)
    value = N / m_total
    sigma = value * math.sqrt(1.0 / N + 1.0 / offset_total)
    return GEstimate(value, sigma, int(N), m_total, offset_total)


def _relative(estimate: GEstimate) -> float:
    """Relative error of a positive estimate."""
    return estimate.sigma / estimate.value


def cs_test(g11: GEstimate, g22: GEstimate, g12: GEstimate) -> CsReport:
    """Cauchy-Schwarz test R = g12^2 / (g11 g22) with first-order error propagation."""
    for name, estimate in (("g11", g11), ("g22", g22), ("g12", g12)):
        if not estimate.value > 0:
            raise ParameterValidationError(f"{name} must be positive, got {estimate.value}")
    numerator = g12.value**2
    numerator_sigma = 2 * g12.value * g12.sigma
    denominator = g11.value * g22.value
    denominator_sigma = denominator * math.hypot(_relative(g11), _relative(g22))
    ratio = numerator / denominator
    ratio_sigma = ratio * math.sqrt(4 * _relative(g12) ** 2 + _relative(g11) ** 2 + _relative(g22) ** 2)
    if ratio_sigma > 0:
        significance = (ratio - 1) / ratio_sigma
    elif ratio == 1:
        significance = 0.0
    else:
        significance = math.copysign(math.inf, ratio - 1)
    return CsReport(
        g11=g11,
        g22=g22,
        g12=g12,
        numerator=numerator,
        numerator_sigma=numerator_sigma,
        denominator=denominator,
        denominator_sigma=denominator_sigma,
        ratio=ratio,
        ratio_sigma=ratio_sigma,
        violated=ratio > 1,
        significance=significance,
    )


def singles_profile(
    events: EventStream, detector: Detector, bin_width: float = DEFAULT_BIN_WIDTH
) -> pd.DataFrame:
    """Singles n_i(t) over one trial for one detector, normalized to its peak."""
    edges = np.arange(bins_per_period(events.trial_period, bin_width) + 1) * bin_width
    counts, _ = np.histogram(events.time[events.detector == int(detector)], bins=edges)
    peak = counts.max() if counts.size else 0
    normalized = counts / peak if peak > 0 else np.zeros(counts.shape[0])
    return pd.DataFrame({"t_ns": edges[:-1], "count": counts, "normalized": normalized})


def peak_view(h: CoincidenceHistogram, span: float = 250.0, n_offsets: int = DEFAULT_OFFSETS) -> pd.DataFrame:
    """Same-trial n(tau) and averaged m(tau) in a window of `span` ns around the same-trial peak."""
    same_trial = h.slot(0)
    average = offset_average(h, n_offsets)
    tau = h.tau()[: same_trial.shape[0]]
    centers = tau + h.bin_width / 2
    peak = centers[int(np.argmax(same_trial))] if same_trial.sum() > 0 else h.tau_origin + h.trial_period / 2
    window = np.abs(centers - peak) <= span / 2
    return pd.DataFrame({"tau_ns": tau[window], "n": same_trial[window], "m": average[window]})


def excess_coincidence_probability(
    N: int, M: float, trials: int, eta1: float, eta2: float
) -> Dict[str, float]:
    """Per-trial probability of correlated coincidences, as detected and referred to the source."""
    if trials <= 0:
        raise ParameterValidationError("trials must be > 0")
    per_trial = (N - M) / trials
    efficiency = eta1 * eta2
    at_source = per_trial / efficiency if efficiency > 0 else math.nan
    return {"per_trial": per_trial, "at_source": at_source}


def _ensure_gated(events: EventStream, cfg: RunConfig) -> EventStream:
    """Gate an ungated stream; reject a stream from another trial period."""
    if not math.isclose(events.trial_period, cfg.timing.trial_period):
        raise ParameterValidationError("event stream and run configuration disagree on the trial period")
    return events if events.gate is not None else gate_events(events, cfg.timing)


def analyze_run(
    streams: Mapping[str, EventStream],
    cfg: RunConfig,
    analysis: Optional[AnalysisConfig] = None,
    scenario_name: str = "",
    workers: int = 1,
    oracle: Optional[MomentSet] = None,
) -> CorrelationReport:
    """Histograms, g estimates and the Cauchy-Schwarz test for one run.

    Args:
        streams: Event streams keyed by splitter mode (pair, auto1, auto2)
        cfg: Run configuration the streams were generated with
        analysis: Analyzer settings and channel plan
        scenario_name: Name recorded in the report
        workers: Threads per histogram
        oracle: Analytic moments to attach; computed from cfg when omitted

    Returns:
        The full CorrelationReport
    """
    analysis = analysis or AnalysisConfig()
    plan = analysis.channel_plan
    missing = [mode for mode in plan.modes() if mode not in streams]
    if missing:
        raise ParameterValidationError(f"missing event streams for modes: {', '.join(missing)}")
    gated = {mode: _ensure_gated(streams[mode], cfg) for mode in plan.modes()}
    trials = {stream.n_trials for stream in gated.values()}
    if len(trials) != 1:
        raise ParameterValidationError(f"streams cover different numbers of trials: {sorted(trials)}")
    n_trials = trials.pop()

    histograms: Dict[str, CoincidenceHistogram] = {}
    estimates: Dict[str, GEstimate] = {}
    for name in ("g11", "g22", "g12"):
        spec = getattr(plan, name)
        histogram = correlate(
            gated[spec.mode], spec.start, spec.stop, analysis.K, analysis.bin_width, analysis.tau_origin, workers
        )
        N, _, offset_sums = totals(histogram, analysis.n_offsets)
        histograms[name] = histogram
        estimates[name] = estimate_g(N, offset_sums)
        logger.info("%s = %.4f +/- %.4f", name, estimates[name].value, estimates[name].sigma)

    report_cs = cs_test(estimates["g11"], estimates["g22"], estimates["g12"])

    pair_spec = plan.g12
    pair_stream = gated[pair_spec.mode]
    period = cfg.timing.trial_period
    singles = {
        channel: float(np.count_nonzero(pair_stream.channel_mask(parse_channel(channel)))) / n_trials
        for channel in (pair_spec.start, pair_spec.stop)
    }
    rates = {channel: gate_mean_to_rate(mean, period) for channel, mean in singles.items()}
    g12 = estimates["g12"]
    excess = excess_coincidence_probability(g12.n_total, g12.m_total, n_trials, cfg.source.eta1, cfg.source.eta2)

    return CorrelationReport(
        scenario=scenario_name,
        seed=cfg.seed,
        trials=n_trials,
        config_digest=cfg.digest(),
        cs=report_cs,
        histograms=histograms,
        singles_per_gate=singles,
        singles_rate_hz=rates,
        excess_coincidence=excess,
        oracle=oracle if oracle is not None else predict_gated(cfg),
        significance_threshold=analysis.significance_threshold,
    )
