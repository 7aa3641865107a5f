"""Tests for event files and report export."""

import json
import logging
import sys
from pathlib import Path

import numpy as np
import pytest

# Add the repository root to the path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.config import RunConfig, SourceParams, TrialTiming
from src.errors import EventFileError, ExportError
from src.models.events import EventStream
from src.models.histogram import CoincidenceHistogram
from src.models.reports import CorrelationReport, GEstimate
from src.persistence import (
    export_report,
    export_singles,
    format_events,
    histogram_frame,
    parse_events,
    read_events,
    write_events,
)
from src.simulation import Simulation
from src.tia_analyzer import cs_test
from src.trial_engine import simulate

EVENTS = [(0, 1, 100.0), (0, 2, 200.0), (1, 1, 50.0)]


def small_stream(cfg, rows=EVENTS):
    return EventStream.from_events(rows, cfg.timing.trial_period, cfg.timing.trials_per_run)


class TestEventFiles:
    """Test cases for writing and reading event files."""

    def test_round_trip(self, tmp_path, noisy_run):
        """Test a simulated stream survives write then read exactly."""
        stream = simulate(noisy_run)
        path = write_events(tmp_path / "run.events", stream, noisy_run)
        event_file = read_events(path)

        assert event_file.stream.equals(stream)
        assert event_file.header.digest == noisy_run.digest()
        assert event_file.header.config == noisy_run
        assert event_file.header.splitter_mode == "pair"
        assert event_file.header.digest_matches

    def test_rewrite_is_byte_identical(self, tmp_path, noisy_run):
        """Test re-serializing a read file reproduces it byte for byte."""
        path = write_events(tmp_path / "run.events", simulate(noisy_run), noisy_run)
        event_file = read_events(path)

        assert format_events(event_file.stream, event_file.header.config) == path.read_text(encoding="utf-8")

    def test_empty_stream(self, tmp_path, noisy_run):
        """Test an empty run writes a header-only file that reads back empty."""
        empty = EventStream.empty(noisy_run.timing.trial_period, noisy_run.timing.trials_per_run)
        path = write_events(tmp_path / "empty.events", empty, noisy_run)
        event_file = read_events(path)

        assert len(event_file.stream) == 0
        assert path.read_text(encoding="utf-8").splitlines()[-1] == "trial_index,detector,time_ns"

    def test_times_keep_picosecond_digits(self, noisy_run):
        """Test times are written with three decimals."""
        text = format_events(small_stream(noisy_run, [(0, 1, 512.345)]), noisy_run)

        assert text.rstrip("\n").splitlines()[-1] == "0,1,512.345"

    def test_unsorted_lines(self, noisy_run):
        """Test swapped records report the first line out of order."""
        lines = format_events(small_stream(noisy_run), noisy_run).splitlines()
        lines[8], lines[9] = lines[9], lines[8]

        with pytest.raises(EventFileError, match="unsorted at line 10"):
            parse_events("\n".join(lines) + "\n")

    def test_unsupported_version(self, noisy_run):
        """Test a newer format version is rejected."""
        text = format_events(small_stream(noisy_run), noisy_run).replace("# dlcz-events 1", "# dlcz-events 2", 1)

        with pytest.raises(EventFileError, match="unsupported format version"):
            parse_events(text)

    def test_malformed_record_names_line(self, noisy_run):
        """Test an unparsable time reports its line number."""
        text = format_events(small_stream(noisy_run), noisy_run).replace("0,2,200.000", "0,2,abc")

        with pytest.raises(EventFileError, match="line 9"):
            parse_events(text)

    def test_missing_field(self, noisy_run):
        """Test a record with too few fields is rejected."""
        text = format_events(small_stream(noisy_run), noisy_run).replace("0,2,200.000", "0,200.000")

        with pytest.raises(EventFileError, match="line 9"):
            parse_events(text)

    def test_time_outside_period(self, noisy_run):
        """Test a time past the trial period is rejected."""
        text = format_events(small_stream(noisy_run), noisy_run).replace("0,2,200.000", "0,2,4000.000")

        with pytest.raises(EventFileError, match="malformed record"):
            parse_events(text)

    def test_digest_mismatch_warns(self, noisy_run, caplog):
        """Test a stale digest is flagged but the events are still read."""
        text = format_events(small_stream(noisy_run), noisy_run)
        text = text.replace(noisy_run.digest(), "0" * 16, 1)

        with caplog.at_level(logging.WARNING):
            event_file = parse_events(text)

        assert not event_file.header.digest_matches
        assert len(event_file.stream) == 3
        assert "does not match" in caplog.text

    def test_expected_digest(self, noisy_run):
        """Test a caller-supplied digest is compared with the header."""
        text = format_events(small_stream(noisy_run), noisy_run)

        assert parse_events(text, expected_digest=noisy_run.digest()).header.digest_matches
        assert not parse_events(text, expected_digest="f" * 16).header.digest_matches

    def test_refuses_unsorted_stream(self, tmp_path, noisy_run):
        """Test an unsorted stream is never written."""
        stream = small_stream(noisy_run, [(1, 1, 50.0), (0, 1, 100.0)])

        with pytest.raises(EventFileError):
            write_events(tmp_path / "bad.events", stream, noisy_run)

    def test_missing_file(self, tmp_path):
        """Test reading a missing file names the path."""
        with pytest.raises(FileNotFoundError, match="missing.events"):
            read_events(tmp_path / "missing.events")

    @pytest.mark.slow
    def test_million_event_round_trip(self, tmp_path):
        """Test a stream of more than a million events round-trips exactly."""
        cfg = RunConfig(source=SourceParams(p=0.3), timing=TrialTiming(trials_per_run=2_000_000), seed=13)
        stream = simulate(cfg)
        path = write_events(tmp_path / "big.events", stream, cfg)

        assert len(stream) > 1_000_000
        assert read_events(path).stream.equals(stream)


def exact_report(histograms):
    cs = cs_test(GEstimate.exact(1.739, 0.02), GEstimate.exact(1.71, 0.015), GEstimate.exact(2.335, 0.014))
    return CorrelationReport(
        scenario="crafted", seed=1, trials=100, config_digest="0" * 16, cs=cs, histograms=histograms
    )


class TestExport:
    """Test cases for report export."""

    def test_files_written(self, tmp_path, busy_scenario):
        """Test the report, estimate table and per-channel tables are written."""
        report = Simulation(busy_scenario).run()
        written = export_report(report, tmp_path)
        names = {path.name for path in written}

        assert {"report.json", "estimates.csv", "hist_g12.csv", "view_g11.csv"} <= names
        data = json.loads((tmp_path / "report.json").read_text())
        assert data["seed"] == 21
        assert data["config_digest"] == busy_scenario.run.digest()
        assert data["cauchy_schwarz"]["verdict"] in ("violated", "satisfied")
        assert set(data["coincidence_totals"]) == {"g11", "g22", "g12"}

    def test_export_is_deterministic(self, tmp_path, busy_scenario):
        """Test exporting the same run twice gives identical bytes."""
        first = export_report(Simulation(busy_scenario).run(), tmp_path / "a")
        second = export_report(Simulation(busy_scenario).run(), tmp_path / "b")

        for a, b in zip(first, second):
            assert a.read_bytes() == b.read_bytes()

    def test_estimates_table(self, tmp_path):
        """Test the estimates table lists the three g values and the ratio."""
        export_report(exact_report({}), tmp_path, formats=["csv"])
        lines = (tmp_path / "estimates.csv").read_text().splitlines()

        assert lines[0].startswith("quantity,value,sigma")
        assert [line.split(",")[0] for line in lines[1:]] == ["g11", "g22", "g12", "g12_squared", "g11_g22", "R"]

    def test_empty_histogram_writes_header_only(self, tmp_path):
        """Test a histogram without coincidences exports only its header."""
        empty = CoincidenceHistogram(np.zeros(11 * 2000, dtype=np.int64), 2.0, 4000.0, 10, -2000.0, 0, ("D1@gate1", "D2@gate2"))
        export_report(exact_report({"g12": empty}), tmp_path)

        assert (tmp_path / "hist_g12.csv").read_text() == "tau_ns,count\n"
        assert len(histogram_frame(empty)) == 0

    def test_infinite_significance_is_null(self, tmp_path):
        """Test non-finite numbers are written as JSON null."""
        report = exact_report({})
        report.cs = cs_test(GEstimate.exact(1.5), GEstimate.exact(1.5), GEstimate.exact(2.0))
        export_report(report, tmp_path, formats=["json"])

        assert json.loads((tmp_path / "report.json").read_text())["cauchy_schwarz"]["significance"] is None

    def test_unwritable_directory(self, tmp_path):
        """Test an output path blocked by a file raises ExportError naming it."""
        blocker = tmp_path / "blocker"
        blocker.write_text("x")

        with pytest.raises(ExportError, match="blocker"):
            export_report(exact_report({}), blocker / "out")

    def test_unknown_format(self, tmp_path):
        """Test an unknown report format is rejected."""
        with pytest.raises(ExportError, match="xml"):
            export_report(exact_report({}), tmp_path, formats=["xml"])

    def test_singles_tables(self, tmp_path, noisy_run):
        """Test one singles table per detector."""
        written = export_singles(simulate(noisy_run), tmp_path)

        assert [path.name for path in written] == ["singles_D1.csv", "singles_D2.csv"]
        assert written[0].read_text().startswith("t_ns,count,normalized\n")
