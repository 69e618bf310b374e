"""Long-format CSV helpers (``site,time,value``) used by every command."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .exceptions import UnsupportedFormatError


def write_long_csv(path, values, times, value_name="value"):
    """Write an ``n_s x n_t`` array as rows of ``site,time,value``."""
    values = np.asarray(values)
    times = np.asarray(times)
    if values.shape[1] != len(times):
        raise ValueError("times do not match the array width")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site", "time", value_name])
        for s in range(values.shape[0]):
            for j, t in enumerate(times):
                w.writerow([s, _fmt(t), _fmt(values[s, j])])


def read_long_csv(path):
    """Inverse of :func:`write_long_csv`; returns ``(values, times)``."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) is None:
            raise UnsupportedFormatError(f"{path}: empty table")
        for line, row in enumerate(reader, start=2):
            try:
                site, t, v = row
                rows.append((int(site), float(t), float(v)))
            except ValueError:
                raise UnsupportedFormatError(f"{path}:{line}: expected site,time,value") from None
    if not rows:
        raise UnsupportedFormatError(f"{path}: no data rows")
    sites = sorted({r[0] for r in rows})
    times = sorted({r[1] for r in rows})
    s_idx = {s: i for i, s in enumerate(sites)}
    t_idx = {t: j for j, t in enumerate(times)}
    out = np.full((len(sites), len(times)), np.nan)
    for s, t, v in rows:
        out[s_idx[s], t_idx[t]] = v
    if np.isnan(out).any():
        raise UnsupportedFormatError(f"{path}: long-format table has missing cells")
    return out, np.array(times)


def write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _fmt(v):
    v = float(v)
    if v.is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(v)


def write_rows(path, header, rows):
    """Plain CSV with a header row; numbers are written with :func:`_fmt`."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (int, float, np.number)) else v for v in row])


def write_matrix_long(path, values, times, value_name="value"):
    """Write an ``n x n x n_t`` array as rows of ``site_i,site_j,time,value``."""
    values = np.asarray(values)
    n, m, nt = values.shape
    rows = ((i, k, times[j], values[i, k, j]) for i in range(n) for k in range(m) for j in range(nt))
    write_rows(path, ["site_i", "site_j", "time", value_name], rows)
