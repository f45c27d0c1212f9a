"""Unit tests for report writing."""

import json
import math

import numpy as np
import pytest

from noisestab.report import REPORT_FILE, ReportWriter, to_builtin


class TestToBuiltin:
    """Test conversion to JSON-ready values."""

    def test_numpy_values(self):
        """Test numpy scalars and arrays become builtins."""
        value = to_builtin({"a": np.float64(0.5), "b": np.int64(3), "c": np.array([1.0, 2.0]), "d": np.bool_(True)})

        assert value == {"a": 0.5, "b": 3, "c": [1.0, 2.0], "d": True}
        assert type(value["b"]) is int

    def test_non_finite(self):
        """Test NaN and infinities become null."""
        assert to_builtin([math.nan, np.inf, 1.0]) == [None, None, 1.0]

    def test_to_dict_objects(self):
        """Test objects with to_dict are expanded."""

        class Record:
            def to_dict(self):
                return {"x": np.float32(2.0)}

        assert to_builtin((Record(),)) == [{"x": 2.0}]


class TestReportWriter:
    """Test run directories and file formats."""

    def test_run_dirs_increment(self, tmp_path):
        """Test run directories are numbered and never reused."""
        first = ReportWriter.create_run_dir(str(tmp_path), "stability", 7)
        second = ReportWriter.create_run_dir(str(tmp_path), "stability", 7)
        other = ReportWriter.create_run_dir(str(tmp_path), "stability", 8)

        assert first.name == "stability-seed7-001"
        assert second.name == "stability-seed7-002"
        assert other.name == "stability-seed8-001"

    def test_build_report(self):
        """Test the report keys and metadata."""
        report = ReportWriter.build_report("witness", {"rho": [-0.05]}, 3, {"value": np.float64(-0.1)}, {"ok": np.bool_(True)})

        assert set(report) == {"experiment", "params", "seed", "results", "checks", "metadata"}
        assert report["checks"] == {"ok": True}
        assert report["results"]["value"] == -0.1
        assert report["metadata"]["report_version"] == "1"

    def test_write_json(self, tmp_path):
        """Test JSON output is sorted and loadable."""
        path = ReportWriter.write_json(tmp_path / REPORT_FILE, {"b": 1, "a": math.nan})

        text = path.read_text()
        assert json.loads(text) == {"a": None, "b": 1}
        assert text.index('"a"') < text.index('"b"')

    def test_format_csv(self):
        """Test the header row and repr floats."""
        rows = [{"rho": 0.1, "value": 1.0 / 3.0, "tags": [1, 2]}, {"rho": 0.2, "value": None}]

        text = ReportWriter.format_csv(rows)
        lines = text.splitlines()

        assert lines[0] == "rho,value,tags"
        assert lines[1].startswith("0.1,0.3333333333333333,")
        assert lines[2] == "0.2,,"

    def test_format_csv_columns(self):
        """Test explicit column order."""
        assert ReportWriter.format_csv([{"a": 1, "b": 2}], ["b", "a"]) == "b,a\n2,1\n"

    def test_write_csv(self, tmp_path):
        """Test CSV files round through disk unchanged."""
        rows = [{"m": 1, "value": 0.5}]
        path = ReportWriter.write_csv(tmp_path / "trend.csv", rows)

        assert path.read_text() == ReportWriter.format_csv(rows)

    def test_empty_csv(self):
        """Test no rows gives an empty header."""
        assert ReportWriter.format_csv([]) == "\n"

    @pytest.mark.parametrize("value,expected", [(0.1 + 0.2, "0.30000000000000004"), (2, "2")])
    def test_cell_precision(self, value, expected):
        """Test floats keep full precision and ints stay ints."""
        assert ReportWriter.format_csv([{"x": value}]).splitlines()[1] == expected
