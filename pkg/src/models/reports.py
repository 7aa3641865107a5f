"""Result types: moment sets, g estimates and Cauchy-Schwarz reports."""

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional

from .histogram import CoincidenceHistogram


def _finite_or_none(value: Optional[float]) -> Optional[float]:
    """JSON-safe float: None for missing or non-finite values."""
    if value is None or not math.isfinite(value):
        return None
    return float(value)


@dataclass(frozen=True)
class MomentSet:
    """Exact per-gate moments. A normalized value is None when its mean is zero."""

    mean1: float
    mean2: float
    g2_11: Optional[float]
    g2_22: Optional[float]
    g2_12: Optional[float]

    @property
    def cs_ratio(self) -> Optional[float]:
        """g2_12^2 / (g2_11 g2_22), or None when any factor is undefined."""
        if self.g2_11 is None or self.g2_22 is None or self.g2_12 is None:
            return None
        if self.g2_11 <= 0 or self.g2_22 <= 0:
            return None
        return self.g2_12**2 / (self.g2_11 * self.g2_22)

    def to_dict(self) -> Dict[str, Optional[float]]:
        """Moments plus the ratio as plain data."""
        data = asdict(self)
        data["cs_ratio"] = self.cs_ratio
        return data


@dataclass(frozen=True)
class CsVerdict:
    """Cauchy-Schwarz check on exact values: violated iff ratio > 1."""

    ratio: float
    violated: bool


@dataclass(frozen=True)
class GEstimate:
    """g = N / M from coincidence totals, with its Poisson error."""

    value: float
    sigma: float
    n_total: int
    m_total: float
    offset_total: int
    degenerate: bool = False

    @classmethod
    def exact(cls, value: float, sigma: float = 0.0) -> "GEstimate":
        """Estimate built from a quoted value rather than from counts."""
        return cls(value=value, sigma=sigma, n_total=0, m_total=0.0, offset_total=0)

    def to_dict(self) -> Dict[str, Any]:
        """Fields as plain data."""
        return asdict(self)


@dataclass(frozen=True)
class CsReport:
    """Cauchy-Schwarz test on measured g estimates."""

    g11: GEstimate
    g22: GEstimate
    g12: GEstimate
    numerator: float
    numerator_sigma: float
    denominator: float
    denominator_sigma: float
    ratio: float
    ratio_sigma: float
    violated: bool
    significance: float

    def is_significant(self, threshold: float = 3.0) -> bool:
        """Violation by more than `threshold` standard deviations."""
        return self.violated and self.significance > threshold

    def to_dict(self) -> Dict[str, Any]:
        """JSON-ready view with the verdict as text."""
        return {
            "g11": self.g11.to_dict(),
            "g22": self.g22.to_dict(),
            "g12": self.g12.to_dict(),
            "g12_squared": self.numerator,
            "g12_squared_sigma": self.numerator_sigma,
            "g11_g22": self.denominator,
            "g11_g22_sigma": self.denominator_sigma,
            "ratio": self.ratio,
            "ratio_sigma": self.ratio_sigma,
            "verdict": "violated" if self.violated else "satisfied",
            "significance": _finite_or_none(self.significance),
        }


@dataclass
class CorrelationReport:
    """Full outcome of one analyzed run."""

    scenario: str
    seed: int
    trials: int
    config_digest: str
    cs: CsReport
    histograms: Dict[str, CoincidenceHistogram] = field(default_factory=dict)
    singles_per_gate: Dict[str, float] = field(default_factory=dict)
    singles_rate_hz: Dict[str, float] = field(default_factory=dict)
    excess_coincidence: Dict[str, float] = field(default_factory=dict)
    oracle: Optional[MomentSet] = None
    significance_threshold: float = 3.0

    @property
    def significant_violation(self) -> bool:
        """Violation above the configured significance threshold."""
        return self.cs.is_significant(self.significance_threshold)

    def to_dict(self) -> Dict[str, Any]:
        """JSON-ready summary; histograms are exported separately."""
        return {
            "schema_version": 1,
            "scenario": self.scenario,
            "seed": self.seed,
            "trials": self.trials,
            "config_digest": self.config_digest,
            "cauchy_schwarz": self.cs.to_dict(),
            "significant_violation": self.significant_violation,
            "significance_threshold": self.significance_threshold,
            "singles_per_gate": dict(self.singles_per_gate),
            "singles_rate_hz": dict(self.singles_rate_hz),
            "excess_coincidence": {key: _finite_or_none(value) for key, value in self.excess_coincidence.items()},
            "coincidence_totals": {
                name: {"start_count": hist.start_count, "total": hist.total}
                for name, hist in sorted(self.histograms.items())
            },
            "oracle": None if self.oracle is None else self.oracle.to_dict(),
        }
