"""Closed-form photon-number statistics for the pair source and its noise channels.

Everything here is exact up to the photon-number cutoff, which makes it the
analytic oracle for the Monte Carlo in `trial_engine`.
"""

import logging
import math
from typing import Optional

import numpy as np
from scipy import stats
from scipy.special import comb, gammaln

from .config import SourceParams
from .errors import ParameterValidationError
from .models.distribution import DEFAULT_TRUNCATION_THRESHOLD, PhotonDistribution
from .models.reports import CsVerdict, MomentSet

logger = logging.getLogger(__name__)

DEFAULT_CUTOFF = 20


def _check_probability(name: str, value: float, upper_open: bool = False) -> None:
    """Reject values outside [0, 1], or [0, 1) when `upper_open`."""
    upper_ok = value < 1 if upper_open else value <= 1
    if not (math.isfinite(value) and value >= 0 and upper_ok):
        bound = "[0, 1)" if upper_open else "[0, 1]"
        raise ParameterValidationError(f"{name} must be in {bound}, got {value}")


def _check_cutoff(cutoff: int) -> None:
    """Reject cutoffs that are not positive integers."""
    if int(cutoff) != cutoff or cutoff < 1:
        raise ParameterValidationError(f"cutoff must be an integer >= 1, got {cutoff}")


def pair_distribution(
    p: float, cutoff: int = DEFAULT_CUTOFF, threshold: float = DEFAULT_TRUNCATION_THRESHOLD
) -> PhotonDistribution:
    """Diagonal pair law P(n, n) = p^n / (1+p)^(n+1).

    Both marginals are thermal with mean p.

    Args:
        p: Excitation probability per trial, 0 <= p < 1
        cutoff: Largest photon number kept per mode
        threshold: Largest truncation mass accepted

    Returns:
        The joint distribution

    Raises:
        ParameterValidationError: p or cutoff out of range
        TruncationError: the cutoff drops more than `threshold`
    """
    _check_probability("p", p, upper_open=True)
    _check_cutoff(cutoff)
    n = np.arange(cutoff + 1)
    pmf = np.zeros((cutoff + 1, cutoff + 1))
    pmf[n, n] = p**n / (1 + p) ** (n + 1)
    truncation = (p / (1 + p)) ** (cutoff + 1)
    return PhotonDistribution(pmf, truncation, threshold)


def twin_thermal_distribution(
    p: float, cutoff: int = DEFAULT_CUTOFF, threshold: float = DEFAULT_TRUNCATION_THRESHOLD
) -> PhotonDistribution:
    """Classical twin source: both modes Poisson in one exponential intensity of mean p.

    P(n1, n2) = C(n1+n2, n1) (1/p) / (2 + 1/p)^(n1+n2+1). Marginals are
    thermal like the pair source, but the cross-correlation stays classical.
    """
    _check_probability("p", p, upper_open=True)
    _check_cutoff(cutoff)
    pmf = np.zeros((cutoff + 1, cutoff + 1))
    if p == 0:
        pmf[0, 0] = 1.0
        return PhotonDistribution(pmf, 0.0, threshold)
    n1, n2 = np.meshgrid(np.arange(cutoff + 1), np.arange(cutoff + 1), indexing="ij")
    total = n1 + n2
    inverse = 1.0 / p
    log_pmf = (
        gammaln(total + 1) - gammaln(n1 + 1) - gammaln(n2 + 1)
        + math.log(inverse) - (total + 1) * math.log(2.0 + inverse)
    )
    pmf = np.exp(log_pmf)
    return PhotonDistribution(pmf, max(0.0, 1.0 - float(pmf.sum())), threshold)


def source_distribution(
    sp: SourceParams, cutoff: int = DEFAULT_CUTOFF, threshold: float = DEFAULT_TRUNCATION_THRESHOLD
) -> PhotonDistribution:
    """Photon-number law emitted by the configured source model."""
    if sp.source_model == "classical_twin":
        return twin_thermal_distribution(sp.p, cutoff, threshold)
    return pair_distribution(sp.p, cutoff, threshold)


def _thinning_matrix(size: int, efficiency: float) -> np.ndarray:
    """B[n, k] = C(n, k) e^k (1-e)^(n-k): each photon survives with probability e."""
    n = np.arange(size)[:, None]
    k = np.arange(size)[None, :]
    with np.errstate(invalid="ignore"):
        matrix = comb(n, k) * efficiency**k * (1.0 - efficiency) ** np.clip(n - k, 0, None)
    return np.where(k <= n, matrix, 0.0)


def _poisson_matrix(size: int, mean: float) -> np.ndarray:
    """C[n, k] = Poisson(k - n; mean): adds an independent Poisson count."""
    if mean == 0:
        return np.eye(size)
    n = np.arange(size)[:, None]
    k = np.arange(size)[None, :]
    return stats.poisson.pmf(k - n, mean)


def thin(d: PhotonDistribution, eta1: float, eta2: float) -> PhotonDistribution:
    """Independent binomial loss on each mode.

    Args:
        d: Input distribution
        eta1: Survival probability of a field-1 photon
        eta2: Survival probability of a field-2 photon

    Returns:
        The thinned distribution; total mass and truncation mass are unchanged
    """
    _check_probability("eta1", eta1)
    _check_probability("eta2", eta2)
    if eta1 == 1 and eta2 == 1:
        return d
    size = d.pmf.shape[0]
    pmf = _thinning_matrix(size, eta1).T @ d.pmf @ _thinning_matrix(size, eta2)
    return PhotonDistribution(pmf, d.truncation_mass, d.threshold)


def apply_read_efficiency(d: PhotonDistribution, zeta: float) -> PhotonDistribution:
    """Binomial thinning of field 2 by the read transfer efficiency."""
    _check_probability("zeta", zeta)
    return thin(d, 1.0, zeta)


def add_background(d: PhotonDistribution, lam1: float, lam2: float) -> PhotonDistribution:
    """Convolve each mode with an independent Poisson count.

    Mass pushed beyond the cutoff is moved into `truncation_mass`, and the
    result is re-validated against the threshold.

    Raises:
        ParameterValidationError: negative or non-finite mean
        TruncationError: the pushed-out mass exceeds the threshold
    """
    for name, lam in (("lam1", lam1), ("lam2", lam2)):
        if not (math.isfinite(lam) and lam >= 0):
            raise ParameterValidationError(f"{name} must be >= 0, got {lam}")
    if lam1 == 0 and lam2 == 0:
        return d
    size = d.pmf.shape[0]
    pmf = _poisson_matrix(size, lam1).T @ d.pmf @ _poisson_matrix(size, lam2)
    truncation = d.truncation_mass + (float(d.pmf.sum()) - float(pmf.sum()))
    return PhotonDistribution(pmf, truncation, d.threshold)


def moments(d: PhotonDistribution) -> MomentSet:
    """Exact per-gate moments; normalized values are None for a zero-mean mode."""
    n = np.arange(d.pmf.shape[0], dtype=float)
    pmf = d.pmf
    mean1 = float(n @ pmf.sum(axis=1))
    mean2 = float(n @ pmf.sum(axis=0))
    factorial1 = float((n * (n - 1)) @ pmf.sum(axis=1))
    factorial2 = float((n * (n - 1)) @ pmf.sum(axis=0))
    cross = float(n @ pmf @ n)
    return MomentSet(
        mean1=mean1,
        mean2=mean2,
        g2_11=factorial1 / mean1**2 if mean1 > 0 else None,
        g2_22=factorial2 / mean2**2 if mean2 > 0 else None,
        g2_12=cross / (mean1 * mean2) if mean1 > 0 and mean2 > 0 else None,
    )


def ideal_cs_ratio_paper(p: float) -> float:
    """Quoted ideal violation ratio [(1+p)/(2p)]^2."""
    if not (math.isfinite(p) and p > 0):
        raise ParameterValidationError(f"ideal ratio is undefined for p={p}")
    return ((1 + p) / (2 * p)) ** 2


def ideal_cs_ratio_model(p: float) -> float:
    """Ideal ratio ((1+2p)/(2p))^2 implied by the diagonal pair law (g11 = g22 = 2, g12 = 2 + 1/p)."""
    if not (math.isfinite(p) and p > 0):
        raise ParameterValidationError(f"ideal ratio is undefined for p={p}")
    return ((1 + 2 * p) / (2 * p)) ** 2


def cs_holds_classical(g11: float, g22: float, g12: float) -> CsVerdict:
    """Cauchy-Schwarz check g12^2 <= g11 g22 on exact values."""
    for name, value in (("g11", g11), ("g22", g22), ("g12", g12)):
        if value is None or not math.isfinite(value) or value <= 0:
            raise ParameterValidationError(f"{name} must be a positive number, got {value}")
    ratio = g12**2 / (g11 * g22)
    return CsVerdict(ratio=ratio, violated=ratio > 1)


def minimal_cutoff(p: float, threshold: float = DEFAULT_TRUNCATION_THRESHOLD, background: float = 0.0) -> int:
    """Smallest cutoff whose truncation stays below `threshold`.

    Bounds each mode by a thermal part of mean p plus a Poisson part of mean
    `background`, each allowed a quarter of the threshold.
    """
    _check_probability("p", p, upper_open=True)
    share = threshold / 4
    thermal = 0
    if p > 0:
        thermal = max(0, math.ceil(math.log(share) / math.log(p / (1 + p))) - 1)
    poisson = 0
    if background > 0:
        poisson = int(stats.poisson.isf(share, background)) + 1
    return max(1, thermal + poisson)


def predict_report(
    sp: SourceParams, cutoff: Optional[int] = None, threshold: float = DEFAULT_TRUNCATION_THRESHOLD
) -> MomentSet:
    """Per-gate moments of the full noisy source.

    Chains source -> read efficiency -> detection efficiencies -> backgrounds
    -> moments. With `cutoff=None` the cutoff grows with p and the noise so
    the truncation threshold is always met.
    """
    if cutoff is None:
        cutoff = max(DEFAULT_CUTOFF, minimal_cutoff(sp.p, threshold, max(sp.bg1, sp.bg2 + sp.leak2)))
    d = source_distribution(sp, cutoff, threshold)
    d = apply_read_efficiency(d, sp.zeta)
    d = thin(d, sp.eta1, sp.eta2)
    d = add_background(d, sp.bg1, sp.bg2 + sp.leak2)
    logger.debug("Oracle for %s at cutoff %d, truncation %.2e", sp.source_model, cutoff, d.truncation_mass)
    return moments(d)
