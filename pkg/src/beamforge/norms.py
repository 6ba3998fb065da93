"""Discrete L2 and eps-scaled energy norms, and error records."""
import csv
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import ShapeError

CSV_FIELDS = ("k", "epsilon", "time", "kind", "abs", "ref", "rel")


@dataclass(frozen=True)
class ErrorRecord:
    epsilon: float
    time: float
    norm_kind: str
    absolute_error: float
    reference_norm: float
    relative_error: float
    order: Optional[int] = None

    def row(self):
        return {"k": "" if self.order is None else self.order, "epsilon": repr(self.epsilon),
                "time": repr(self.time), "kind": self.norm_kind,
                "abs": repr(self.absolute_error), "ref": repr(self.reference_norm),
                "rel": repr(self.relative_error)}


def grid_l2(f):
    """(sum |f|^2 h^n)^(1/2)."""
    return float(np.sqrt(np.sum(np.abs(f.values) ** 2) * f.cell_volume))


def _values(f):
    return f.values if hasattr(f, "values") else np.asarray(f)


def energy_norm(u_t, grad, c, eps):
    """(eps^2/2 * int |u_t|^2/c^2 + |grad u|^2)^(1/2) on the grid."""
    for g in grad:
        u_t.check_geometry(g)
    c = np.asarray(c.values.real if hasattr(c, "values") else c, dtype=float)
    if np.any(c <= 0):
        raise ValueError("wave speed must be positive")
    dens = np.abs(u_t.values) ** 2 / c**2
    for g in grad:
        dens = dens + np.abs(g.values) ** 2
    return float(np.sqrt(0.5 * eps**2 * np.sum(dens) * u_t.cell_volume))


def _diff(a, b):
    a.check_geometry(b)
    return a.like(a.values - b.values)


def error_between(beam_fields, ref_fields, norm_kind, c=1.0, eps=None):
    """Norm of the difference of two (u, u_t, grad) triples.

    For ``l2`` only the u entries are used. ``eps`` defaults to the field
    metadata.
    """
    bu, but, bg = beam_fields
    ru, rut, rg = ref_fields
    bu.check_geometry(ru)
    tb, tr = bu.meta.get("time"), ru.meta.get("time")
    if tb is not None and tr is not None and abs(tb - tr) > 1e-12:
        raise ShapeError(f"field times differ: {tb} vs {tr}")
    if eps is None:
        eps = bu.meta.get("epsilon", ru.meta.get("epsilon"))
    if norm_kind == "l2":
        err = grid_l2(_diff(bu, ru))
        ref = grid_l2(ru)
    elif norm_kind == "energy":
        err = energy_norm(_diff(but, rut), [_diff(a, b) for a, b in zip(bg, rg)], c, eps)
        ref = energy_norm(rut, rg, c, eps)
    else:
        raise ValueError(f"unknown norm kind {norm_kind!r}")
    rel = err / ref if ref > 0 else float("inf") if err > 0 else 0.0
    return ErrorRecord(float(eps), float(tr if tr is not None else tb or 0.0), norm_kind,
                       err, ref, rel)


def write_records(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow(r.row())


def read_records(path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(ErrorRecord(float(row["epsilon"]), float(row["time"]), row["kind"],
                                   float(row["abs"]), float(row["ref"]), float(row["rel"]),
                                   int(row["k"]) if row["k"] else None))
    return out
