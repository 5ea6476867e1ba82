import json

import numpy as np

from lotkit import io


class TestFormatting:
    def test_values(self):
        assert io.format_value(0.1) == "0.1"
        assert io.format_value(np.float64(1 / 3)) == repr(1 / 3)
        assert io.format_value(None) == ""
        assert io.format_value(True) == "true"
        assert io.format_value(np.int64(7)) == "7"
        assert io.format_value(float("nan")) == "nan"

    def test_csv_crlf_and_round_trip(self, tmp_path):
        p = tmp_path / "x.csv"
        io.write_csv(p, ["a", "b"], [[1, 0.5], ["x,y", None]])
        raw = p.read_bytes()
        assert raw == b'a,b\r\n1,0.5\r\n"x,y",\r\n'
        header, rows = io.read_csv(p)
        assert header == ["a", "b"] and rows == [["1", "0.5"], ["x,y", ""]]

    def test_matrix_round_trip(self, tmp_path):
        M = np.random.default_rng(0).standard_normal((3, 4))
        io.write_matrix_csv(tmp_path / "m.csv", M)
        np.testing.assert_array_equal(io.read_matrix_csv(tmp_path / "m.csv"), M)

    def test_json_canonical(self):
        text = io.json_text({"b": np.float64(1.5), "a": np.arange(2)})
        assert text.endswith("\n")
        assert list(json.loads(text)) == ["a", "b"]
