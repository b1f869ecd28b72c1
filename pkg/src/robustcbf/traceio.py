"""Trace files: CSV or JSON lines, both round-trip exactly.

Floats are written with 17 significant digits so re-parsing gives back the
same doubles. CSV has one header row; JSON lines has one header record
followed by one record per recorded step.
"""
import csv
import json
import math
import re
from pathlib import Path

import numpy as np

from .sim import Trace

FORMATS = ("csv", "jsonl")
_ACTIVITY = ("active_robustness", "active_pairs", "active_obstacles")


def _fmt(x):
    return format(float(x), ".17g")


def columns(n, m, followers):
    cols = ["t"]
    for key in ("p", "v", "u"):
        cols += [f"{key}_{i}_{d}" for i in range(n) for d in range(m)]
    cols += [f"h_{c}" for c in followers]
    cols.append("phi")
    cols += [f"y_{i}" for i in range(n)]
    cols += list(_ACTIVITY) + ["kkt_residual"]
    return cols


def _rows(trace):
    K = len(trace)
    for k in range(K):
        yield ([trace.time[k]]
               + list(trace.positions[k].ravel())
               + list(trace.velocities[k].ravel())
               + list(trace.controls[k].ravel())
               + list(trace.margins[k])
               + [trace.phi[k]]
               + list(trace.values[k])), [int(getattr(trace, a)[k]) for a in _ACTIVITY], trace.kkt_residual[k]


def emit_trace(trace, path, fmt="csv"):
    """Write ``trace`` to ``path``; ``fmt`` is ``csv`` or ``jsonl``."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown trace format {fmt!r}")
    path = Path(path)
    cols = columns(trace.n, trace.m, trace.followers)
    with path.open("w", newline="") as fh:
        if fmt == "csv":
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for floats, acts, kkt in _rows(trace):
                w.writerow([_fmt(x) for x in floats] + acts + [_fmt(kkt)])
            return
        header = dict(kind="header", name=trace.name, status=trace.status, message=trace.message,
                      n=trace.n, m=trace.m, followers=list(trace.followers), columns=cols)
        fh.write(json.dumps(header) + "\n")
        for floats, acts, kkt in _rows(trace):
            vals = [_json_float(x) for x in floats] + acts + [_json_float(kkt)]
            fh.write(json.dumps(dict(zip(cols, vals))) + "\n")


def _json_float(x):
    # NaN is not valid JSON; null stands for it
    x = float(x)
    return None if math.isnan(x) else x


_PV = re.compile(r"p_(\d+)_(\d+)$")


def _shape_from(cols):
    idx = [tuple(map(int, _PV.match(c).groups())) for c in cols if _PV.match(c)]
    if not idx:
        raise ValueError("trace has no position columns")
    n = max(i for i, _ in idx) + 1
    m = max(d for _, d in idx) + 1
    followers = tuple(int(c[2:]) for c in cols if c.startswith("h_"))
    return n, m, followers


def _assemble(data, n, m, followers, **meta):
    K = data.shape[0]
    nm = n * m
    f = len(followers)
    o = 1
    parts = {}
    for key in ("positions", "velocities", "controls"):
        parts[key] = data[:, o:o + nm].reshape(K, n, m)
        o += nm
    parts["margins"] = data[:, o:o + f].reshape(K, f)
    o += f
    parts["phi"] = data[:, o].copy()
    o += 1
    parts["values"] = data[:, o:o + n].reshape(K, n)
    o += n
    for a in _ACTIVITY:
        parts[a] = data[:, o].astype(np.int64)
        o += 1
    parts["kkt_residual"] = data[:, o].copy()
    return Trace(time=data[:, 0].copy(), followers=tuple(followers), **parts, **meta)


def read_trace(path, fmt=None):
    """Parse a file written by :func:`emit_trace`; format is guessed from the suffix if omitted."""
    path = Path(path)
    fmt = fmt or ("jsonl" if path.suffix in (".jsonl", ".json") else "csv")
    if fmt == "csv":
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            cols = next(reader)
            body = [[float(x) for x in row] for row in reader]
        n, m, followers = _shape_from(cols)
        data = np.array(body, dtype=float).reshape(len(body), len(cols))
        return _assemble(data, n, m, followers)
    if fmt != "jsonl":
        raise ValueError(f"unknown trace format {fmt!r}")
    with path.open() as fh:
        header = json.loads(fh.readline())
        cols = header["columns"]
        body = [[np.nan if v is None else float(v) for v in (rec[c] for c in cols)]
                for rec in map(json.loads, fh) if rec]
    data = np.array(body, dtype=float).reshape(len(body), len(cols))
    return _assemble(data, header["n"], header["m"], header["followers"], name=header["name"],
                     status=header["status"], message=header["message"])
