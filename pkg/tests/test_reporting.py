import csv
import json

import numpy as np
import pytest

from gradphi import reporting


class TestEstimatorResult:
    def test_scalar_rows(self):
        r = reporting.EstimatorResult("x", 1.5, 0.1, 10, seed=3)
        rows = r.rows()
        assert len(rows) == 1
        assert rows[0]["component"] == ""
        assert rows[0]["value"] == 1.5

    def test_matrix_rows(self):
        r = reporting.EstimatorResult("m", np.eye(2), 0.01, 5)
        rows = r.rows()
        assert len(rows) == 4
        comps = {row["component"] for row in rows}
        assert comps == {"0,0", "0,1", "1,0", "1,1"}


class TestWriters:
    def test_csv_roundtrip(self, tmp_path):
        res = [reporting.EstimatorResult("a", [1.0, 2.0], [0.1, 0.2], 7)]
        path = tmp_path / "out.csv"
        reporting.write_csv(path, res)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        assert rows[1]["value"] == "2.0"
        assert rows[0]["n_samples"] == "7"

    def test_json_handles_numpy(self, tmp_path):
        path = tmp_path / "out.json"
        reporting.write_json(path, {"arr": np.arange(3),
                                    "val": np.float64(2.5),
                                    "nested": [np.int64(1)]})
        data = json.loads(path.read_text())
        assert data["arr"] == [0, 1, 2]
        assert data["val"] == 2.5
        assert data["nested"] == [1]


class TestConfigHash:
    def test_stable_and_order_independent(self):
        h1 = reporting.config_hash({"a": 1, "b": "x"})
        h2 = reporting.config_hash({"b": "x", "a": 1})
        assert h1 == h2
        assert len(h1) == 16

    def test_sensitive_to_values(self):
        assert reporting.config_hash({"a": 1}) != \
            reporting.config_hash({"a": 2})
