"""Simulation driver: scenario -> event streams -> correlation report."""

import logging
from typing import Any, Dict, Iterable, Optional

import numpy as np
import pandas as pd

from .config import Scenario, set_parameter, update_model
from .errors import ParameterValidationError, UndefinedEstimateError
from .models.events import EventStream
from .models.reports import CorrelationReport
from .stats_core import ideal_cs_ratio_model, ideal_cs_ratio_paper
from .tia_analyzer import analyze_run
from .trial_engine import detect, predict_gated, rescale_gate_width
from .utils import BLOCK_SIZE

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = [
    "g11", "g11_sigma", "g22", "g22_sigma", "g12", "g12_sigma",
    "R", "R_sigma", "significance", "violated",
    "oracle_g11", "oracle_g22", "oracle_g12", "oracle_R",
    "ideal_ratio_paper", "ideal_ratio_model",
]


class Simulation:
    """Runs one scenario: the three splitter configurations, then the analyzer."""

    def __init__(self, scenario: Scenario, workers: int = 1, block_size: int = BLOCK_SIZE):
        """Initialize the simulation.

        Args:
            scenario: Validated scenario to run
            workers: Worker processes for event generation and threads for histogramming
            block_size: Trials per random-number block
        """
        if workers < 1:
            raise ParameterValidationError("workers must be >= 1")
        self.scenario = scenario
        self.workers = workers
        self.block_size = block_size
        self.streams: Dict[str, EventStream] = {}

    @property
    def modes(self):
        """Splitter modes the channel plan needs."""
        return self.scenario.analysis.channel_plan.modes()

    def simulate_mode(self, mode: str) -> EventStream:
        """Event stream of one splitter configuration, dead time applied."""
        cfg = self.scenario.run.for_mode(mode)
        stream = detect(cfg, self.workers, self.block_size)
        self.streams[mode] = stream
        return stream

    def simulate_all(self) -> Dict[str, EventStream]:
        """Simulate every mode the channel plan needs.

        Returns:
            Event streams keyed by splitter mode
        """
        for mode in self.modes:
            self.simulate_mode(mode)
        return dict(self.streams)

    def analyze(self, streams: Optional[Dict[str, EventStream]] = None) -> CorrelationReport:
        """Correlation report of the given or the already simulated streams.

        Args:
            streams: Event streams keyed by splitter mode; defaults to those simulated so far

        Returns:
            The CorrelationReport of the scenario
        """
        streams = streams if streams is not None else self.streams
        return analyze_run(
            streams, self.scenario.run, self.scenario.analysis, self.scenario.name, workers=self.workers
        )

    def run(self) -> CorrelationReport:
        """Simulate every needed mode and analyze the result."""
        self.simulate_all()
        report = self.analyze()
        logger.info(
            "%s: R = %.4f +/- %.4f (%s)",
            self.scenario.name,
            report.cs.ratio,
            report.cs.ratio_sigma,
            "violated" if report.cs.violated else "satisfied",
        )
        return report


def _sweep_row(scenario: Scenario, workers: int, block_size: int) -> Dict[str, Any]:
    """Oracle, ideal ratios and measured estimates of one sweep point."""
    p = scenario.run.source.p
    oracle = predict_gated(scenario.run)
    row: Dict[str, Any] = {column: np.nan for column in SWEEP_COLUMNS}
    row.update(
        oracle_g11=oracle.g2_11,
        oracle_g22=oracle.g2_22,
        oracle_g12=oracle.g2_12,
        oracle_R=oracle.cs_ratio,
        ideal_ratio_paper=ideal_cs_ratio_paper(p) if p > 0 else np.nan,
        ideal_ratio_model=ideal_cs_ratio_model(p) if p > 0 else np.nan,
    )
    try:
        report = Simulation(scenario, workers, block_size).run()
    except (UndefinedEstimateError, ParameterValidationError) as exc:
        logger.warning("Sweep point %s has no estimate: %s", scenario.name, exc)
        return row
    cs = report.cs
    row.update(
        g11=cs.g11.value, g11_sigma=cs.g11.sigma,
        g22=cs.g22.value, g22_sigma=cs.g22.sigma,
        g12=cs.g12.value, g12_sigma=cs.g12.sigma,
        R=cs.ratio, R_sigma=cs.ratio_sigma, significance=cs.significance, violated=cs.violated,
    )
    return row


def sweep(
    scenario: Scenario,
    parameter: str,
    values: Iterable[float],
    workers: int = 1,
    block_size: int = BLOCK_SIZE,
) -> pd.DataFrame:
    """Run the scenario once per parameter value.

    Args:
        scenario: Base scenario
        parameter: Dotted path such as `source.p` or `timing.gate_width`
        values: Grid of values
        workers: Workers per run
        block_size: Trials per random-number block

    Returns:
        One row per value with measured g's, R, and the oracle and ideal ratios
    """
    rows = []
    for value in values:
        if parameter.split(".")[-1] == "gate_width":
            # noise rates stay fixed when the gate changes
            point = update_model(scenario, {"run": rescale_gate_width(scenario.run, float(value)).model_dump()})
        else:
            point = set_parameter(scenario, parameter, float(value))
        logger.info("Sweep %s = %g", parameter, value)
        rows.append({parameter: float(value), **_sweep_row(point, workers, block_size)})
    return pd.DataFrame(rows, columns=[parameter] + SWEEP_COLUMNS)
