"""DLCZ photon-pair source simulation and coincidence analysis package."""

from .config import RunConfig, Scenario, SourceParams, TrialTiming
from .simulation import Simulation, sweep
from .stats_core import predict_report
from .tia_analyzer import analyze_run, correlate, cs_test, estimate_g
from .trial_engine import simulate

__version__ = "1.0.0"

__all__ = [
    'RunConfig',
    'Scenario',
    'SourceParams',
    'TrialTiming',
    'Simulation',
    'sweep',
    'predict_report',
    'analyze_run',
    'correlate',
    'cs_test',
    'estimate_g',
    'simulate',
]
