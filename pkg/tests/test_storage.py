import io
import json

import numpy as np
import pandas as pd
import pytest

from detection.errors import InvalidInputError
from detection.thresholds import ThresholdProfile
from simulation.synthetic import SyntheticSpec, generate, segment_means
from storage.manifest import RunManifest, emit_manifest, file_digest
from storage.profiles import load_profile, save_profile
from storage.series_files import (
    format_series,
    parse_series,
    read_series,
    sidecar_path,
    write_runchart,
    write_series,
    write_sidecar,
)
from storage.tables import markdown_table


class TestParseSeries:
    def test_one_value_per_line(self):
        series = parse_series("# arrivals\n1.5\n\n2.0\n 3e-1 \n")
        np.testing.assert_array_equal(series.values, [1.5, 2.0, 0.3])

    def test_header_and_named_column(self):
        text = "time,value\n0,2.5\n1,3.5\n"
        np.testing.assert_array_equal(parse_series(text).values, [2.5, 3.5])
        np.testing.assert_array_equal(parse_series(text, column="time").values, [0.0, 1.0])
        np.testing.assert_array_equal(parse_series(text, column="2").values, [2.5, 3.5])

    def test_headerless_csv_by_number(self):
        np.testing.assert_array_equal(parse_series("1,10\n2,20\n", column="2").values, [10.0, 20.0])

    def test_ambiguous_columns(self):
        with pytest.raises(InvalidInputError, match="--column"):
            parse_series("a,b\n1,2\n")

    def test_non_numeric(self):
        with pytest.raises(InvalidInputError, match="row 2"):
            parse_series("value\n1.0\nabc\n")

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            parse_series("# nothing\n\n")

    def test_stdin(self):
        assert read_series("-", stdin=io.StringIO("4\n5\n")).m == 2


class TestWriteSeries:
    def test_exact_round_trip(self, tmp_path):
        series, _ = generate(SyntheticSpec(m=50, changes=1, delta=2.0, seed=1))
        path = tmp_path / "x.txt"
        write_series(series, path)
        np.testing.assert_array_equal(read_series(path).values, series.values)

    def test_stdout(self):
        out = io.StringIO()
        series = parse_series("0.1\n2\n")
        write_series(series, "-", stdout=out)
        assert out.getvalue() == format_series(series) == "0.10000000000000001\n2\n"

    def test_runchart(self, tmp_path):
        path = write_runchart(parse_series("3\n4\n"), tmp_path / "chart.csv")
        df = pd.read_csv(path)
        assert list(df.columns) == ["index", "value"]
        assert list(df["index"]) == [1, 2]

    def test_sidecar(self, tmp_path):
        spec = SyntheticSpec(m=200, changes=2, delta=1.0, seed=8)
        _, taus = generate(spec)
        path = write_sidecar(sidecar_path(tmp_path / "s.txt"), spec, taus, segment_means(spec))
        assert path.name == "s.txt.meta.json"
        payload = json.loads(path.read_text())
        assert payload["true_change_points"] == [66, 133]
        assert payload["segment_means"] == [1.0, 2.0, 1.0]
        assert payload["rng"] == "PCG64" and payload["seed"] == 8


class TestProfiles:
    def test_save_and_load(self, tmp_path):
        profile = ThresholdProfile.reference_table("lrt")
        path = save_profile(profile, tmp_path / "p" / "profile.json")
        assert load_profile(path) == profile

    def test_invalid_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"levels": []}')
        with pytest.raises(InvalidInputError):
            load_profile(path)


class TestManifest:
    def test_digest_and_comparable(self, tmp_path):
        data = tmp_path / "in.txt"
        data.write_text("1\n2\n")
        manifest = RunManifest(subcommand="detect", options={"method": "lrt"}, seeds=[3])
        manifest.add_input(data)
        manifest.add_input("-", b"1\n2\n")
        assert manifest.input_digests[str(data)] == manifest.input_digests["-"] == file_digest(data)

        other = RunManifest(subcommand="detect", options={"method": "lrt"}, seeds=[3])
        other.add_input(data)
        other.add_input("-", b"1\n2\n")
        assert manifest.finish(0).comparable() == other.finish(0).comparable()
        assert "started_at" not in manifest.comparable()

    def test_emit(self, tmp_path):
        stream = io.StringIO()
        manifest = RunManifest(subcommand="gen").finish(0)
        emit_manifest(manifest, stderr=stream)
        assert json.loads(stream.getvalue())["exit_code"] == 0
        emit_manifest(manifest, tmp_path / "m" / "run.json")
        assert json.loads((tmp_path / "m" / "run.json").read_text())["subcommand"] == "gen"


def test_markdown_table():
    df = pd.DataFrame({"R": [1, 2], "mean": [100.123456, None]})
    assert markdown_table(df).splitlines() == [
        "| R | mean |",
        "|---|---|",
        "| 1 | 100.1 |",
        "| 2 |  |",
    ]
