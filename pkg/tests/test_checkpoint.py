import csv
import json
import math

import numpy as np

from conftest import smooth_control
from sparsech import Field, SpaceTimeField, TimeGrid, build_basis
from sparsech.checkpoint import fmt, read_fields, write_csv, write_fields


def test_fields_round_trip_exactly(tmp_path, basis2, rng):
    times = TimeGrid(0.5, 7).nodes
    node = SpaceTimeField(basis2, times, rng.standard_normal((8, *basis2.shape)))
    piece = smooth_control(rng, basis2, times)
    write_fields(tmp_path / "f.csv", {"phi": node, "u": piece}, extra={"note": "x"})
    back = read_fields(tmp_path / "f.csv")
    assert np.array_equal(back["phi"].coeffs, node.coeffs) and not back["phi"].piecewise
    assert np.array_equal(back["u"].coeffs, piece.coeffs) and back["u"].piecewise
    assert np.array_equal(back["u"].times, times)
    back["u"].basis.check_same(basis2)
    meta = json.loads((tmp_path / "f.json").read_text())
    assert meta["note"] == "x"


def test_csv_layout(tmp_path):
    basis = build_basis(1, math.pi, 4)
    f = SpaceTimeField(basis, np.array([0.0, 1.0]), np.arange(8.0).reshape(2, 4))
    write_fields(tmp_path / "a.csv", {"phi": f})
    with open(tmp_path / "a.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "field", "k0", "coefficient"]
    assert len(rows) == 9


def test_write_csv_precision(tmp_path):
    write_csv(tmp_path / "b.csv", ["x", "flag"], [[1 / 3, "true"]])
    with open(tmp_path / "b.csv") as fh:
        rows = list(csv.reader(fh))
    assert float(rows[1][0]) == 1 / 3 and rows[1][1] == "true"
    assert float(fmt(math.pi)) == math.pi
