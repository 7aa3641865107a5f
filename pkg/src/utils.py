"""Utility functions shared by the simulation and analysis modules."""

from typing import List, Tuple

import numpy as np

# Trials per random-number block; part of the reproducibility contract.
BLOCK_SIZE = 4096

# Event times are kept on the time-tagger grid (1 ps).
TIME_DECIMALS = 3
TIME_RESOLUTION_NS = 10.0 ** -TIME_DECIMALS

STREAM_KEYS = {"pair": 0, "auto1": 1, "auto2": 2}


def block_rng(seed: int, block_index: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator owned by one block of trials.

    Args:
        seed: Master seed of the run
        block_index: Index of the trial block
        stream: Independent stream family (one per splitter mode)

    Returns:
        A Philox generator whose draws depend only on (seed, stream, block_index)
    """
    sequence = np.random.SeedSequence(seed, spawn_key=(stream, block_index))
    return np.random.Generator(np.random.Philox(sequence))


def trial_blocks(n_trials: int, block_size: int = BLOCK_SIZE) -> List[Tuple[int, int, int]]:
    """Split [0, n_trials) into (block_index, start, stop) ranges."""
    if block_size < 1:
        raise ValueError("block_size must be positive")
    return [
        (index, start, min(start + block_size, n_trials))
        for index, start in enumerate(range(0, n_trials, block_size))
    ]


def quantize_times(times: np.ndarray, trial_period: float) -> np.ndarray:
    """Round times to the tagger grid, keeping them inside [0, trial_period)."""
    rounded = np.round(times, TIME_DECIMALS)
    last_tick = np.round(trial_period - TIME_RESOLUTION_NS, TIME_DECIMALS)
    return np.clip(rounded, 0.0, last_tick)


def rate_to_gate_mean(rate_hz: float, trial_period_ns: float) -> float:
    """Mean counts per gate for a gated detector counting `rate_hz` (one gate per trial)."""
    if rate_hz < 0 or trial_period_ns <= 0:
        raise ValueError("rate must be >= 0 and trial period > 0")
    return rate_hz * trial_period_ns * 1e-9


def gate_mean_to_rate(mean_per_gate: float, trial_period_ns: float) -> float:
    """Inverse of rate_to_gate_mean."""
    if mean_per_gate < 0 or trial_period_ns <= 0:
        raise ValueError("mean must be >= 0 and trial period > 0")
    return mean_per_gate / (trial_period_ns * 1e-9)
