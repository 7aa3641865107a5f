"""Joint photon-number distribution of the two fields."""

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterValidationError, TruncationError

DEFAULT_TRUNCATION_THRESHOLD = 1e-10
NORMALIZATION_TOLERANCE = 1e-12
_ROUNDING_NOISE = 1e-15


@dataclass(frozen=True, eq=False)
class PhotonDistribution:
    """Probability mass over (n1, n2) with n1, n2 in [0, cutoff].

    `truncation_mass` is the probability that falls outside the square
    support. Construction fails when it exceeds `threshold` or when
    pmf + truncation_mass does not sum to one.
    """

    pmf: np.ndarray
    truncation_mass: float = 0.0
    threshold: float = DEFAULT_TRUNCATION_THRESHOLD

    def __post_init__(self) -> None:
        """Validate, clamp rounding residue and freeze the pmf."""
        pmf = np.array(self.pmf, dtype=np.float64, copy=True)
        if pmf.ndim != 2 or pmf.shape[0] != pmf.shape[1] or pmf.shape[0] < 2:
            raise ParameterValidationError(f"pmf must be a square matrix of side >= 2, got shape {pmf.shape}")
        if not np.all(np.isfinite(pmf)):
            raise ParameterValidationError("pmf contains non-finite values")
        # matrix products leave -1e-18 style residue where the exact value is 0
        pmf[(pmf < 0) & (pmf > -_ROUNDING_NOISE)] = 0.0
        if np.any(pmf < 0):
            raise ParameterValidationError("pmf contains negative mass")

        truncation = float(self.truncation_mass)
        if -NORMALIZATION_TOLERANCE < truncation < 0:
            truncation = 0.0
        if truncation < 0:
            raise ParameterValidationError(f"truncation_mass must be >= 0, got {truncation}")
        total = float(pmf.sum()) + truncation
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            raise ParameterValidationError(f"pmf + truncation_mass sums to {total!r}, not 1")
        if truncation > self.threshold:
            raise TruncationError(
                f"cutoff {pmf.shape[0] - 1} leaves truncation mass {truncation:.3e} "
                f"above threshold {self.threshold:.1e}"
            )

        pmf.setflags(write=False)
        object.__setattr__(self, "pmf", pmf)
        object.__setattr__(self, "truncation_mass", truncation)

    @property
    def support_cutoff(self) -> int:
        """Largest photon number kept per mode."""
        return self.pmf.shape[0] - 1

    def marginal(self, mode: int) -> np.ndarray:
        """Marginal pmf of field 1 or field 2."""
        if mode == 1:
            return self.pmf.sum(axis=1)
        if mode == 2:
            return self.pmf.sum(axis=0)
        raise ParameterValidationError(f"mode must be 1 or 2, got {mode}")

    def allclose(self, other: "PhotonDistribution", atol: float = 1e-12) -> bool:
        """Element-wise comparison of two pmfs of the same size."""
        if self.pmf.shape != other.pmf.shape:
            return False
        return bool(np.allclose(self.pmf, other.pmf, rtol=0.0, atol=atol))

    def __repr__(self) -> str:
        return (
            f"PhotonDistribution(cutoff={self.support_cutoff}, "
            f"truncation_mass={self.truncation_mass:.2e})"
        )
