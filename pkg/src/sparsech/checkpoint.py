"""Coefficient checkpoints: a long-format CSV plus a JSON sidecar.

CSV columns are ``t, field, k0[, k1], coefficient``; piecewise-constant
fields use the left node of each interval for ``t``.  The sidecar stores
the basis and the time nodes so that a file can be reloaded exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .spectral import SpaceTimeField, build_basis

__all__ = ["fmt", "write_csv", "write_fields", "read_fields", "basis_meta"]


def fmt(x) -> str:
    """17 significant digits: enough to round-trip any double."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for row in rows:
            out.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def basis_meta(basis) -> dict:
    return {"dim": basis.dim, "lengths": list(basis.lengths), "modes": list(basis.modes),
            "dealias": basis.dealias}


def write_fields(path, fields: dict, extra: dict | None = None) -> None:
    """Write named SpaceTimeFields sharing one basis and time grid to ``path`` (.csv) and ``.json``."""
    path = Path(path)
    first = next(iter(fields.values()))
    basis, times = first.basis, first.times
    kcols = [f"k{i}" for i in range(basis.dim)]
    rows = []
    for name, f in fields.items():
        basis.check_same(f.basis)
        for m in range(len(f)):
            for idx in np.ndindex(*basis.shape):
                rows.append([times[m], name, *idx, f.coeffs[(m, *idx)]])
    write_csv(path, ["t", "field", *kcols, "coefficient"], rows)
    meta = {"basis": basis_meta(basis), "times": [float(t) for t in times],
            "fields": {name: ("piecewise" if f.piecewise else "nodes") for name, f in fields.items()}}
    if extra:
        meta.update(extra)
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2))


def read_fields(path) -> dict:
    """Inverse of :func:`write_fields`."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    b = meta["basis"]
    basis = build_basis(b["dim"], b["lengths"], b["modes"], b["dealias"])
    times = np.array(meta["times"])
    data = {}
    for name, kind in meta["fields"].items():
        n = len(times) - (1 if kind == "piecewise" else 0)
        data[name] = np.zeros((n, *basis.shape))
    index = {float(t): m for m, t in enumerate(times)}
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            name = row["field"]
            idx = tuple(int(row[f"k{i}"]) for i in range(basis.dim))
            data[name][(index[float(row["t"])], *idx)] = float(row["coefficient"])
    return {name: SpaceTimeField(basis, times, c) for name, c in data.items()}
