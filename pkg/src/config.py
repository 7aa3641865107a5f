"""Configuration management for the DLCZ pair-source simulation."""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
PRESETS_PATH = DATA_DIR / "presets.yaml"
CALIBRATION_PATH = DATA_DIR / "calibrated_noise.yaml"
DEFAULT_PRESET = "paper-T60"

SplitterMode = Literal["pair", "auto1", "auto2"]
SourceModel = Literal["pair", "classical_twin"]
SPLITTER_MODES: Tuple[str, ...] = ("pair", "auto1", "auto2")

_CHANNEL_PATTERN = r"^D[12]@gate[12]$"


class _ConfigModel(BaseModel):
    """Immutable model that rejects unknown keys."""

    model_config = ConfigDict(extra="forbid", frozen=True)


class SourceParams(_ConfigModel):
    """Pair-source and detection-path parameters. Counts are per gate."""

    p: float = Field(0.01, ge=0, lt=1, allow_inf_nan=False, description="Excitation probability per trial")
    zeta: float = Field(1.0, ge=0, le=1, allow_inf_nan=False, description="Read transfer efficiency")
    eta1: float = Field(1.0, ge=0, le=1, allow_inf_nan=False, description="Field-1 detection efficiency")
    eta2: float = Field(1.0, ge=0, le=1, allow_inf_nan=False, description="Field-2 detection efficiency")
    bg1: float = Field(0.0, ge=0, allow_inf_nan=False, description="Field-1 background counts per gate")
    bg2: float = Field(0.0, ge=0, allow_inf_nan=False, description="Field-2 background counts per gate")
    leak2: float = Field(0.0, ge=0, allow_inf_nan=False, description="Read-pulse leakage counts per gate at D2")
    source_model: SourceModel = Field("pair", description="pair (correlated) or classical_twin (shared intensity)")


class TrialTiming(_ConfigModel):
    """Timing structure of one trial. All times in ns from the trial start."""

    trial_period: float = Field(4000.0, gt=0, allow_inf_nan=False, description="Trial period (MOT cycle)")
    write_center: float = Field(500.0, ge=0, allow_inf_nan=False, description="Write-pulse center")
    pair_separation: float = Field(405.0, gt=0, allow_inf_nan=False, description="Delay between write and read")
    write_fwhm: float = Field(51.0, gt=0, allow_inf_nan=False, description="Field-1 envelope FWHM")
    read_fwhm: float = Field(34.0, gt=0, allow_inf_nan=False, description="Field-2 envelope FWHM")
    gate1_center: float = Field(500.0, ge=0, allow_inf_nan=False)
    gate2_center: float = Field(905.0, ge=0, allow_inf_nan=False)
    gate_width: float = Field(60.0, gt=0, allow_inf_nan=False, description="Gate window duration T")
    trials_per_run: int = Field(100_000, gt=0, description="Number of trials simulated per run")

    @model_validator(mode="before")
    @classmethod
    def _default_gate_centers(cls, data: Any) -> Any:
        """Gates sit on the pulse centers unless given explicitly."""
        if not isinstance(data, dict):
            return data
        data = dict(data)
        try:
            write_center = float(data.get("write_center", 500.0))
            separation = float(data.get("pair_separation", 405.0))
        except (TypeError, ValueError):
            return data
        if data.get("gate1_center") is None:
            data["gate1_center"] = write_center
        if data.get("gate2_center") is None:
            data["gate2_center"] = write_center + separation
        return data

    @model_validator(mode="after")
    def _check_windows(self) -> "TrialTiming":
        """Gates inside the period and consistent with the pulse separation."""
        half = self.gate_width / 2
        for name, center in (("gate1_center", self.gate1_center), ("gate2_center", self.gate2_center)):
            if center - half < 0 or center + half > self.trial_period:
                raise ValueError(f"{name}={center} puts the gate window outside the trial period")
        if self.write_center + self.pair_separation >= self.trial_period:
            raise ValueError("read pulse falls outside the trial period")
        gap = self.gate2_center - self.gate1_center
        if abs(gap - self.pair_separation) > self.gate_width:
            raise ValueError(
                f"gate separation {gap} differs from pair_separation {self.pair_separation} "
                "by more than one gate width"
            )
        return self

    def gate_window(self, gate: int) -> Tuple[float, float]:
        """Half-open [start, stop) window of gate 1 or 2."""
        center = self.gate1_center if gate == 1 else self.gate2_center
        return center - self.gate_width / 2, center + self.gate_width / 2

    @property
    def read_center(self) -> float:
        """Center of the read pulse."""
        return self.write_center + self.pair_separation


class RunConfig(_ConfigModel):
    """Everything that determines one simulated event stream."""

    source: SourceParams
    timing: TrialTiming = Field(default_factory=TrialTiming)
    seed: int = Field(0, ge=0, lt=2**64, description="Master seed")
    dead_time: float = Field(0.0, ge=0, allow_inf_nan=False, description="Detector dead time in ns")
    splitter_mode: SplitterMode = "pair"

    def digest(self) -> str:
        """Short stable fingerprint of this configuration."""
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def for_mode(self, mode: str) -> "RunConfig":
        """Same run with another splitter configuration."""
        return self.model_copy(update={"splitter_mode": mode})

    def with_trials(self, trials: int) -> "RunConfig":
        """Same run with another trial count."""
        return update_model(self, {"timing": {"trials_per_run": trials}})


class ChannelSpec(_ConfigModel):
    """One correlation measurement: which stream and which start/stop channels."""

    mode: SplitterMode
    start: str = Field(pattern=_CHANNEL_PATTERN, description="Start channel, e.g. D1@gate1")
    stop: str = Field(pattern=_CHANNEL_PATTERN, description="Stop channel, e.g. D2@gate2")

    @model_validator(mode="after")
    def _distinct_channels(self) -> "ChannelSpec":
        """Start and stop must be different channels."""
        if self.start == self.stop:
            raise ValueError("start and stop channels must differ")
        return self


class ChannelPlan(_ConfigModel):
    """Channel assignment for the three g estimates."""

    g11: ChannelSpec = Field(default_factory=lambda: ChannelSpec(mode="auto1", start="D1@gate1", stop="D2@gate1"))
    g22: ChannelSpec = Field(default_factory=lambda: ChannelSpec(mode="auto2", start="D1@gate2", stop="D2@gate2"))
    g12: ChannelSpec = Field(default_factory=lambda: ChannelSpec(mode="pair", start="D1@gate1", stop="D2@gate2"))

    def modes(self) -> Tuple[str, ...]:
        """Splitter modes needed by this plan, in canonical order."""
        wanted = {self.g11.mode, self.g22.mode, self.g12.mode}
        return tuple(mode for mode in SPLITTER_MODES if mode in wanted)


class AnalysisConfig(_ConfigModel):
    """Time-interval analyzer settings."""

    K: int = Field(10, ge=1, description="Offset trials recorded after each start")
    n_offsets: int = Field(10, ge=1, description="Offset peaks averaged into m(tau)")
    bin_width: float = Field(2.0, gt=0, allow_inf_nan=False, description="Histogram bin width in ns")
    tau_origin: Optional[float] = Field(None, description="Left edge of the histogram; default -trial_period/2")
    significance_threshold: float = Field(3.0, gt=0, description="Sigmas required to call a violation significant")
    view_span: float = Field(250.0, gt=0, description="Width of the expanded coincidence view in ns")
    channel_plan: ChannelPlan = Field(default_factory=ChannelPlan)

    @model_validator(mode="after")
    def _offsets_within_span(self) -> "AnalysisConfig":
        """Averaged offset peaks must all be recorded."""
        if self.n_offsets > self.K:
            raise ValueError(f"n_offsets={self.n_offsets} needs at least as many recorded offset trials (K={self.K})")
        return self


class Scenario(_ConfigModel):
    """A named, fully specified simulation plus analysis."""

    name: str = Field(pattern=r"^[A-Za-z0-9_.-]+$")
    description: str = ""
    run: RunConfig
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)

    @model_validator(mode="after")
    def _bins_align_with_trials(self) -> "Scenario":
        """Histogram bins must tile the trial period."""
        ratio = self.run.timing.trial_period / self.analysis.bin_width
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("analysis.bin_width must divide run.timing.trial_period")
        return self

    @classmethod
    def from_yaml(cls, yaml_path: Union[str, Path]) -> "Scenario":
        """Load a single scenario from a YAML file."""
        path = Path(yaml_path)
        if not path.exists():
            raise FileNotFoundError(f"Configuration file not found: {yaml_path}")
        return parse_config(path.read_text(encoding="utf-8"))

    @classmethod
    def get_default(cls) -> "Scenario":
        """The measured T=60 ns scenario."""
        return get_preset(DEFAULT_PRESET)


def _format_location(location: Tuple[Any, ...]) -> str:
    """Dotted path of a pydantic error location."""
    return ".".join(str(part) for part in location)


def _validate_scenario(data: Dict[str, Any], prefix: str = "") -> Scenario:
    """Validate one scenario mapping, turning pydantic errors into ConfigError.

    Args:
        data: Parsed YAML mapping
        prefix: Path prepended to error locations, e.g. "scenarios.1."

    Returns:
        The validated Scenario

    Raises:
        ConfigError: the first validation error, with its dotted path
    """
    if "run" not in data:
        raise ConfigError("missing required section 'run'", path=prefix.rstrip("."))
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        error = exc.errors()[0]
        if error["type"] == "extra_forbidden":
            message = "unknown key"
        elif error["type"] == "missing":
            message = "missing required key"
        else:
            message = error["msg"]
        raise ConfigError(message, path=prefix + _format_location(error["loc"])) from exc


def _load_yaml(text: str) -> Any:
    """Parse YAML text; syntax errors become ConfigError."""
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc


def parse_config(text: str) -> Scenario:
    """Parse one scenario from YAML text.

    Args:
        text: YAML document holding a single scenario mapping

    Returns:
        The validated Scenario

    Raises:
        ConfigError: on empty input, unknown keys or out-of-range values;
            the message names the dotted path of the offending key
    """
    data = _load_yaml(text)
    if not data:
        raise ConfigError("missing required section 'run'")
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    if "scenarios" in data:
        scenarios = parse_scenario_file(text)
        if len(scenarios) != 1:
            raise ConfigError(f"expected one scenario, found {len(scenarios)}", path="scenarios")
        return next(iter(scenarios.values()))
    return _validate_scenario(data)


def parse_scenario_file(text: str) -> Dict[str, Scenario]:
    """Parse a file holding either one scenario or a `scenarios:` list."""
    data = _load_yaml(text)
    if not data:
        raise ConfigError("missing required section 'scenarios'")
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    if "scenarios" not in data:
        scenario = _validate_scenario(data)
        return {scenario.name: scenario}
    unknown = set(data) - {"scenarios"}
    if unknown:
        raise ConfigError("unknown key", path=sorted(unknown)[0])
    entries = data["scenarios"]
    if not isinstance(entries, list) or not entries:
        raise ConfigError("must be a non-empty list", path="scenarios")

    scenarios: Dict[str, Scenario] = {}
    for index, entry in enumerate(entries):
        prefix = f"scenarios.{index}."
        if not isinstance(entry, dict):
            raise ConfigError("must be a mapping", path=prefix.rstrip("."))
        scenario = _validate_scenario(entry, prefix=prefix)
        if scenario.name in scenarios:
            raise ConfigError(f"duplicate scenario name '{scenario.name}'", path=prefix + "name")
        scenarios[scenario.name] = scenario
    return scenarios


def serialize_config(scenario: Scenario) -> str:
    """YAML text that parse_config turns back into an equal Scenario."""
    return yaml.safe_dump(scenario.model_dump(mode="json"), sort_keys=False)


def load_presets(path: Union[str, Path] = PRESETS_PATH) -> Dict[str, Scenario]:
    """Load the built-in scenario presets."""
    preset_path = Path(path)
    if not preset_path.exists():
        raise FileNotFoundError(f"Preset file not found: {preset_path}")
    presets = parse_scenario_file(preset_path.read_text(encoding="utf-8"))
    logger.debug("Loaded %d presets from %s", len(presets), preset_path)
    return presets


def get_preset(name: str) -> Scenario:
    """Built-in scenario by name.

    Raises:
        ConfigError: the name is unknown; the message lists the available presets
    """
    presets = load_presets()
    if name not in presets:
        raise ConfigError(f"unknown preset '{name}' (available: {', '.join(presets)})")
    return presets[name]


def _merge(base: Dict[str, Any], changes: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive dictionary merge; values in `changes` win."""
    merged = dict(base)
    for key, value in changes.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def update_model(model: BaseModel, changes: Dict[str, Any]) -> Any:
    """Re-validated copy of a config model with nested changes applied."""
    data = _merge(model.model_dump(mode="python"), changes)
    try:
        return type(model).model_validate(data)
    except ValidationError as exc:
        error = exc.errors()[0]
        raise ConfigError(error["msg"], path=_format_location(error["loc"])) from exc


def set_parameter(scenario: Scenario, dotted_path: str, value: Any) -> Scenario:
    """Scenario with one parameter replaced, e.g. `source.p` or `run.timing.gate_width`.

    Paths not starting with `run.` or `analysis.` are taken relative to `run`.
    """
    parts = dotted_path.split(".")
    if parts[0] not in ("run", "analysis"):
        parts = ["run"] + parts
    changes: Dict[str, Any] = {parts[-1]: value}
    for part in reversed(parts[:-1]):
        changes = {part: changes}

    current: Any = scenario.model_dump(mode="python")
    for part in parts[:-1]:
        if not isinstance(current, dict) or part not in current:
            raise ConfigError("unknown key", path=dotted_path)
        current = current[part]
    if not isinstance(current, dict) or parts[-1] not in current:
        raise ConfigError("unknown key", path=dotted_path)
    return update_model(scenario, changes)
