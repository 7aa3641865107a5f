"""Event files and report export.

Event file layout (text, one event per line, time at 1 ps precision):

    # dlcz-events 1
    # digest: <RunConfig digest>
    # trial_period_ns: 4000.0
    # trials_per_run: 100000
    # splitter_mode: pair
    # config: {...}
    trial_index,detector,time_ns
    0,1,512.345
"""

import io
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from .config import RunConfig
from .errors import EventFileError, ExportError
from .models.events import Detector, EventStream
from .models.histogram import CoincidenceHistogram
from .models.reports import CorrelationReport
from .tia_analyzer import DEFAULT_BIN_WIDTH, peak_view, singles_profile
from .utils import TIME_DECIMALS

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAGIC = "dlcz-events"
COLUMNS = ["trial_index", "detector", "time_ns"]
TIME_FORMAT = f"%.{TIME_DECIMALS}f"
REPORT_FORMATS = ("json", "csv")

PathLike = Union[str, Path]


@dataclass(frozen=True)
class EventFileHeader:
    version: int
    digest: str
    trial_period: float
    trials_per_run: int
    splitter_mode: Optional[str] = None
    config: Optional[RunConfig] = None
    digest_matches: bool = True


@dataclass(frozen=True)
class EventFile:
    header: EventFileHeader
    stream: EventStream


def _write_text(path: Path, text: str) -> None:
    """Write UTF-8 text with LF line endings, creating parent directories."""
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
    except OSError as exc:
        raise ExportError(f"{path}: {exc.strerror or exc}") from exc


def _frame_to_csv(frame: pd.DataFrame, float_format: Optional[str] = None, header: bool = True) -> str:
    """CSV text of a frame with fixed line endings."""
    return frame.to_csv(index=False, header=header, float_format=float_format, lineterminator="\n")


def format_events(stream: EventStream, cfg: RunConfig) -> str:
    """Event file text for a stream generated by `cfg`."""
    if stream.n_trials != cfg.timing.trials_per_run or stream.trial_period != cfg.timing.trial_period:
        raise EventFileError("stream does not match the run configuration it is written with")
    config_json = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    lines = [
        f"# {MAGIC} {FORMAT_VERSION}",
        f"# digest: {cfg.digest()}",
        f"# trial_period_ns: {float(cfg.timing.trial_period)!r}",
        f"# trials_per_run: {cfg.timing.trials_per_run}",
        f"# splitter_mode: {cfg.splitter_mode}",
        f"# config: {config_json}",
        ",".join(COLUMNS),
    ]
    text = "\n".join(lines) + "\n"
    if len(stream):
        frame = pd.DataFrame(
            {"trial_index": stream.trial_index, "detector": stream.detector, "time_ns": stream.time}
        )
        text += _frame_to_csv(frame, TIME_FORMAT, header=False)
    return text


def write_events(path: PathLike, stream: EventStream, cfg: RunConfig) -> Path:
    """Write an event file; the stream must be sorted."""
    position = stream.first_unsorted()
    if position is not None:
        raise EventFileError(f"refusing to write unsorted stream (event {position})")
    path = Path(path)
    _write_text(path, format_events(stream, cfg))
    logger.info("Wrote %d events to %s", len(stream), path)
    return path


def _parse_header(lines: List[str]) -> Dict[str, str]:
    """Check the magic line and collect `key: value` header fields."""
    magic = re.fullmatch(rf"# {MAGIC} (\S+)", lines[0]) if lines else None
    if magic is None:
        raise EventFileError(f"not an event file (expected '# {MAGIC} {FORMAT_VERSION}')", line=1)
    if magic.group(1) != str(FORMAT_VERSION):
        raise EventFileError(f"unsupported format version {magic.group(1)!r}, expected {FORMAT_VERSION}", line=1)
    fields: Dict[str, str] = {}
    for number, line in enumerate(lines[1:], start=2):
        key, sep, value = line[1:].strip().partition(":")
        if not sep:
            raise EventFileError(f"malformed header line {line!r}", line=number)
        fields[key.strip()] = value.strip()
    return fields


def _header_from_fields(fields: Dict[str, str], expected_digest: Optional[str]) -> EventFileHeader:
    """Typed header, with the embedded configuration checked against the digest."""
    try:
        digest = fields["digest"]
        trial_period = float(fields["trial_period_ns"])
        trials = int(fields["trials_per_run"])
    except KeyError as exc:
        raise EventFileError(f"header is missing '{exc.args[0]}'") from None
    except ValueError as exc:
        raise EventFileError(f"malformed header value: {exc}") from None

    config = None
    matches = True
    if "config" in fields:
        try:
            config = RunConfig.model_validate_json(fields["config"])
        except ValidationError as exc:
            raise EventFileError(f"invalid embedded config: {exc.errors()[0]['msg']}") from None
        matches = config.digest() == digest
    if expected_digest is not None and expected_digest != digest:
        matches = False
    if not matches:
        logger.warning("Event file digest %s does not match its generating configuration", digest)
    return EventFileHeader(
        version=FORMAT_VERSION,
        digest=digest,
        trial_period=trial_period,
        trials_per_run=trials,
        splitter_mode=fields.get("splitter_mode"),
        config=config,
        digest_matches=matches,
    )


def _to_float(column: pd.Series) -> np.ndarray:
    """Exact decimal parsing; unparsable fields become NaN."""
    try:
        return column.to_numpy(dtype=str).astype(np.float64)
    except ValueError:
        return pd.to_numeric(column, errors="coerce").to_numpy(dtype=float)


def parse_events(text: str, expected_digest: Optional[str] = None) -> EventFile:
    """Parse event file text.

    Raises:
        EventFileError: wrong version, malformed or out-of-range line, or
            records out of (trial_index, time) order; the message names the line
    """
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    n_header = 0
    while n_header < len(lines) and lines[n_header].startswith("#"):
        n_header += 1
    header = _header_from_fields(_parse_header(lines[:n_header]), expected_digest)
    if n_header >= len(lines) or lines[n_header] != ",".join(COLUMNS):
        raise EventFileError(f"expected column line '{','.join(COLUMNS)}'", line=n_header + 1)
    first_record = n_header + 2
    body = lines[n_header + 1 :]
    if not body:
        return EventFile(header, EventStream.empty(header.trial_period, header.trials_per_run))

    separators = np.char.count(np.array(body, dtype=str), ",")
    if np.any(separators != len(COLUMNS) - 1):
        row = int(np.flatnonzero(separators != len(COLUMNS) - 1)[0])
        raise EventFileError(f"expected {len(COLUMNS)} fields in {body[row]!r}", line=first_record + row)
    frame = pd.read_csv(
        io.StringIO("\n".join(body)),
        header=None,
        names=COLUMNS,
        dtype=str,
        keep_default_na=False,
        skip_blank_lines=False,
    )

    trial, detector, time = (_to_float(frame[column]) for column in COLUMNS)
    valid = (
        np.isfinite(trial)
        & (trial == np.floor(trial))
        & (trial >= 0)
        & (trial < header.trials_per_run)
        & np.isin(detector, [int(Detector.D1), int(Detector.D2)])
        & np.isfinite(time)
        & (time >= 0)
        & (time < header.trial_period)
    )
    if not valid.all():
        row = int(np.flatnonzero(~valid)[0])
        raise EventFileError(f"malformed record {body[row]!r}", line=first_record + row)

    stream = EventStream(
        trial.astype(np.int64), detector.astype(np.int8), time, header.trial_period, header.trials_per_run
    )
    position = stream.first_unsorted()
    if position is not None:
        error = EventFileError(f"unsorted at line {first_record + position}")
        error.line = first_record + position
        raise error
    return EventFile(header, stream)


def read_events(path: PathLike, expected_digest: Optional[str] = None) -> EventFile:
    """Read an event file written by write_events."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Event file not found: {path}")
    event_file = parse_events(path.read_text(encoding="utf-8"), expected_digest)
    logger.info("Read %d events from %s", len(event_file.stream), path)
    return event_file


def histogram_frame(histogram: CoincidenceHistogram) -> pd.DataFrame:
    """Non-empty bins as (tau_ns, count); tau_ns is the bin's left edge."""
    nonzero = np.flatnonzero(histogram.counts)
    return pd.DataFrame({"tau_ns": histogram.tau()[nonzero], "count": histogram.counts[nonzero]})


def estimates_frame(report: CorrelationReport) -> pd.DataFrame:
    """One row per g estimate plus both sides of the inequality and R."""
    cs = report.cs
    rows = [
        {"quantity": name, **getattr(cs, name).to_dict()} for name in ("g11", "g22", "g12")
    ]
    rows += [
        {"quantity": "g12_squared", "value": cs.numerator, "sigma": cs.numerator_sigma},
        {"quantity": "g11_g22", "value": cs.denominator, "sigma": cs.denominator_sigma},
        {"quantity": "R", "value": cs.ratio, "sigma": cs.ratio_sigma},
    ]
    columns = ["quantity", "value", "sigma", "n_total", "m_total", "offset_total", "degenerate"]
    return pd.DataFrame(rows, columns=columns)


def export_report(
    report: CorrelationReport,
    out_dir: PathLike,
    formats: Sequence[str] = REPORT_FORMATS,
    n_offsets: int = 10,
    view_span: float = 250.0,
) -> List[Path]:
    """Write the report and its tables.

    Args:
        report: Analyzed run
        out_dir: Output directory, created if needed
        formats: "json" for report.json, "csv" for estimate, histogram and view tables
        n_offsets: Offset peaks averaged in the coincidence views
        view_span: Width of the coincidence views in ns

    Returns:
        Paths written, in a fixed order

    Raises:
        ExportError: a file could not be written; the message names it
    """
    unknown = set(formats) - set(REPORT_FORMATS)
    if unknown:
        raise ExportError(f"unknown report format(s): {', '.join(sorted(unknown))}")
    out = Path(out_dir)
    written: List[Path] = []
    if "json" in formats:
        path = out / "report.json"
        _write_text(path, json.dumps(report.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n")
        written.append(path)
    if "csv" in formats:
        path = out / "estimates.csv"
        _write_text(path, _frame_to_csv(estimates_frame(report), "%.10g"))
        written.append(path)
        for name, histogram in sorted(report.histograms.items()):
            path = out / f"hist_{name}.csv"
            _write_text(path, _frame_to_csv(histogram_frame(histogram), TIME_FORMAT))
            written.append(path)
            path = out / f"view_{name}.csv"
            _write_text(path, _frame_to_csv(peak_view(histogram, view_span, n_offsets), "%.6g"))
            written.append(path)
    logger.info("Exported %d files to %s", len(written), out)
    return written


def export_singles(stream: EventStream, out_dir: PathLike, bin_width: float = DEFAULT_BIN_WIDTH) -> List[Path]:
    """Singles profile n_i(t) of each detector as singles_D1.csv / singles_D2.csv."""
    written = []
    for detector in (Detector.D1, Detector.D2):
        path = Path(out_dir) / f"singles_{detector.name}.csv"
        _write_text(path, _frame_to_csv(singles_profile(stream, detector, bin_width), "%.6g"))
        written.append(path)
    return written


def write_table(frame: pd.DataFrame, path: PathLike) -> Path:
    """Write a sweep or calibration table as CSV."""
    path = Path(path)
    _write_text(path, _frame_to_csv(frame, "%.8g"))
    return path
