import json

import numpy as np
import pytest

from graphon_pooling.graphon import ClosedFormGraphon, Partition, StepGraphon, exponential
from graphon_pooling.io import (
    ParseError,
    format_float,
    load_graphon,
    load_kernel,
    read_csv,
    read_json,
    save_graphon,
    write_csv,
)


def test_csv_roundtrip(tmp_path):
    m = np.random.default_rng(0).random((4, 3)) / 7
    write_csv(tmp_path / "m.csv", m)
    assert np.array_equal(read_csv(tmp_path / "m.csv"), m)
    assert float(format_float(0.1 + 0.2)) == 0.1 + 0.2


def test_csv_parse_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3,abc\n")
    with pytest.raises(ParseError) as err:
        read_csv(p)
    assert (err.value.line, err.value.column) == (2, 2)
    p.write_text("1,2\n3\n")
    with pytest.raises(ParseError) as err:
        read_csv(p)
    assert err.value.line == 2
    p.write_text("")
    with pytest.raises(ParseError):
        read_csv(p)


def test_json_parse_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"a": 1,\n "b": }')
    with pytest.raises(ParseError) as err:
        read_json(p)
    assert err.value.line == 2 and err.value.column is not None
    assert err.value.to_dict()["error"] == "parse"


def test_graphon_roundtrip(tmp_path):
    w = exponential(1.7)
    save_graphon(tmp_path / "w.json", w)
    back = load_graphon(tmp_path / "w.json")
    assert isinstance(back, ClosedFormGraphon) and back.params == (1.7,)
    s = StepGraphon(Partition([0, 0.3, 1]), [[0.1, 0.5], [0.5, 0.9]])
    save_graphon(tmp_path / "s.json", s)
    back = load_graphon(tmp_path / "s.json")
    assert np.array_equal(back.values, s.values) and back.partition == s.partition
    with pytest.raises(ValueError):
        save_graphon(tmp_path / "s.csv", s)
    data = json.loads((tmp_path / "s.json").read_text())
    assert set(data) == {"breakpoints", "values"}


def test_load_kernel_signed(tmp_path):
    write_csv(tmp_path / "k.csv", [[1, -1], [-1, 1]])
    k = load_kernel(tmp_path / "k.csv")
    assert k.partition.regular and k.values[0, 1] == -1
