"""Time-resolved coincidence histogram n(tau)."""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..errors import ParameterValidationError


def bins_per_period(trial_period: float, bin_width: float) -> int:
    """Number of bins in one trial period; the bin width must divide it."""
    if bin_width <= 0:
        raise ParameterValidationError("bin_width must be positive")
    ratio = trial_period / bin_width
    count = int(round(ratio))
    if count < 1 or abs(ratio - count) > 1e-9:
        raise ParameterValidationError(f"bin_width {bin_width} does not divide trial period {trial_period}")
    return count


@dataclass(frozen=True, eq=False)
class CoincidenceHistogram:
    """Coincidence counts over delays tau in [tau_origin, tau_origin + (K+1)*trial_period).

    Slot k (k = 0..K) holds pairs whose stop came k trials after the start;
    slot 0 is the same-trial peak.
    """

    counts: np.ndarray
    bin_width: float
    trial_period: float
    K: int
    tau_origin: float
    start_count: int
    labels: Tuple[str, str]

    def __post_init__(self) -> None:
        """Check the bin count and freeze the counts."""
        counts = np.array(self.counts, dtype=np.int64, copy=True)
        expected = (self.K + 1) * bins_per_period(self.trial_period, self.bin_width)
        if counts.shape != (expected,):
            raise ParameterValidationError(f"expected {expected} bins for K={self.K}, got shape {counts.shape}")
        if np.any(counts < 0):
            raise ParameterValidationError("coincidence counts must be >= 0")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def bins_per_period(self) -> int:
        """Bins in one trial period."""
        return bins_per_period(self.trial_period, self.bin_width)

    @property
    def total(self) -> int:
        """All coincidences in the histogram."""
        return int(self.counts.sum())

    def tau(self) -> np.ndarray:
        """Left edge of every bin in ns."""
        return self.tau_origin + np.arange(self.counts.shape[0]) * self.bin_width

    def slot(self, k: int) -> np.ndarray:
        """Counts of the k-th peak (k trials between start and stop)."""
        if not 0 <= k <= self.K:
            raise ParameterValidationError(f"slot {k} outside 0..{self.K}")
        width = self.bins_per_period
        return self.counts[k * width : (k + 1) * width]

