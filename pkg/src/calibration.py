"""Noise calibration: fit (p, bg1, bg2 + leak2) to measured correlation values."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import yaml
from scipy.optimize import least_squares

from .config import CALIBRATION_PATH, RunConfig, SourceParams, TrialTiming
from .errors import CalibrationError, ConfigError, ExportError
from .models.reports import MomentSet
from .trial_engine import predict_gated

logger = logging.getLogger(__name__)

CALIBRATION_VERSION = 1

# Measured at T = 60 ns: g11, g22, g12.
PAPER_T60_TARGETS: Tuple[float, float, float] = (1.739, 1.710, 2.335)
PAPER_FIXED = {"zeta": 0.6, "eta1": 0.15, "eta2": 0.15}
LEAK_SHARE = 0.25
P_BOUNDS = (1e-4, 0.99)
NOISE_BOUNDS = (0.0, 1.0)


@dataclass(frozen=True)
class CalibrationResult:
    """Fitted noise parameters and the oracle values they produce."""

    p: float
    bg1: float
    bg2: float
    leak2: float
    targets: Tuple[float, float, float]
    predicted: MomentSet
    residuals: Tuple[float, float, float]
    p_at_bound: bool
    leak_share: float
    fixed: Dict[str, float]

    @property
    def noise2(self) -> float:
        """Total fitted field-2 noise, background plus leakage."""
        return self.bg2 + self.leak2

    def source(self, base: SourceParams) -> SourceParams:
        """`base` with the fitted values substituted."""
        return base.model_copy(update={"p": self.p, "bg1": self.bg1, "bg2": self.bg2, "leak2": self.leak2})

    def to_dict(self) -> Dict[str, Any]:
        """Plain-data view for the CLI and YAML output."""
        return {
            "p": self.p,
            "bg1": self.bg1,
            "bg2": self.bg2,
            "leak2": self.leak2,
            "noise2": self.noise2,
            "leak_share": self.leak_share,
            "predicted": {"g11": self.predicted.g2_11, "g22": self.predicted.g2_22, "g12": self.predicted.g2_12},
            "residuals": list(self.residuals),
            "p_at_bound": self.p_at_bound,
        }


def _predict(params: np.ndarray, base: RunConfig) -> MomentSet:
    """Per-gate oracle with (p, bg1, field-2 noise) substituted; the noise is put on bg2."""
    p, bg1, noise2 = (float(value) for value in params)
    source = base.source.model_copy(update={"p": p, "bg1": bg1, "bg2": noise2, "leak2": 0.0})
    return predict_gated(base.model_copy(update={"source": source}))


def calibrate(
    targets: Tuple[float, float, float] = PAPER_T60_TARGETS,
    fixed: Optional[Dict[str, float]] = None,
    timing: Optional[TrialTiming] = None,
    leak_share: float = LEAK_SHARE,
    x0: Tuple[float, float, float] = (0.05, 0.01, 0.01),
) -> CalibrationResult:
    """Bounded least-squares fit of (p, bg1, bg2 + leak2) on the per-gate oracle.

    Args:
        targets: Measured (g11, g22, g12)
        fixed: zeta, eta1 and eta2 held fixed during the fit
        timing: Gate and pulse timing the targets were measured with
        leak_share: Fraction of the fitted field-2 noise assigned to read leakage
        x0: Starting point

    Returns:
        CalibrationResult; `p_at_bound` is set when p ends on its upper bound,
        which means three parameters cannot reach the three targets

    Raises:
        CalibrationError: the optimizer fails
    """
    if not 0 <= leak_share <= 1:
        raise CalibrationError(f"leak_share must be in [0, 1], got {leak_share}")
    fixed = {**PAPER_FIXED, **(fixed or {})}
    base = RunConfig(source=SourceParams(**fixed), timing=timing or TrialTiming())
    goal = np.asarray(targets, dtype=float)

    def residual(params: np.ndarray) -> np.ndarray:
        """Predicted minus measured (g11, g22, g12)."""
        moments = _predict(params, base)
        return np.array([moments.g2_11, moments.g2_22, moments.g2_12]) - goal

    lower = [P_BOUNDS[0], NOISE_BOUNDS[0], NOISE_BOUNDS[0]]
    upper = [P_BOUNDS[1], NOISE_BOUNDS[1], NOISE_BOUNDS[1]]
    start = np.clip(np.asarray(x0, dtype=float), lower, upper)
    fit = least_squares(residual, start, bounds=(lower, upper), x_scale=[0.1, 0.01, 0.01], xtol=1e-12, ftol=1e-12)
    if not fit.success:
        raise CalibrationError(f"calibration did not converge: {fit.message}")

    p, bg1, noise2 = (float(value) for value in fit.x)
    predicted = _predict(fit.x, base)
    at_bound = bool(np.isclose(p, P_BOUNDS[1], rtol=0, atol=1e-4))
    if at_bound:
        logger.warning("Calibration drove p to its upper bound %.2f; the pair model cannot match all targets", p)
    result = CalibrationResult(
        p=p,
        bg1=bg1,
        bg2=noise2 * (1 - leak_share),
        leak2=noise2 * leak_share,
        targets=tuple(float(t) for t in targets),
        predicted=predicted,
        residuals=tuple(float(r) for r in fit.fun),
        p_at_bound=at_bound,
        leak_share=leak_share,
        fixed=fixed,
    )
    logger.info("Calibrated p=%.4f bg1=%.5f bg2=%.5f leak2=%.5f", p, result.bg1, result.bg2, result.leak2)
    return result


def write_calibration(result: CalibrationResult, path: Union[str, Path] = CALIBRATION_PATH) -> Path:
    """Write the fitted constants file."""
    path = Path(path)
    document = {
        "version": CALIBRATION_VERSION,
        "fitted": True,
        "description": "Fitted, not measured: noise constants from the least-squares calibration",
        "targets": dict(zip(("g11", "g22", "g12"), result.targets)),
        "fixed": dict(result.fixed),
        "values": {key: round(value, 6) for key, value in (
            ("p", result.p), ("bg1", result.bg1), ("bg2", result.bg2), ("leak2", result.leak2)
        )},
        "leak_share": result.leak_share,
        "p_at_bound": result.p_at_bound,
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(document, sort_keys=False), encoding="utf-8")
    except OSError as exc:
        raise ExportError(f"{path}: {exc}") from exc
    return path


def load_calibration(path: Union[str, Path] = CALIBRATION_PATH) -> Dict[str, Any]:
    """Read a fitted constants file and check its version."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Calibration file not found: {path}")
    document = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if document.get("version") != CALIBRATION_VERSION:
        raise ConfigError(f"unsupported calibration version {document.get('version')!r}", path="version")
    if not document.get("fitted"):
        raise ConfigError("constants file is not marked as fitted", path="fitted")
    return document
