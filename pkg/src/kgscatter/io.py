"""CSV output: comma separated, one header row, '.' decimal point, LF line endings.

Floats are written with ``repr`` (shortest round-tripping form) so identical
inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import math
import os

import numpy as np


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if x == 0.0:
            return "0.0"  # avoid "-0.0" differences
        return repr(x)
    return str(x)


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])


def read_csv(path):
    """(header, rows as lists of strings)."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def read_columns(path):
    """Dict column -> float array (non-numeric cells become NaN)."""
    header, rows = read_csv(path)
    cols = {}
    for j, name in enumerate(header):
        vals = []
        for row in rows:
            try:
                vals.append(float(row[j]))
            except ValueError:
                vals.append(float("nan"))
        cols[name] = np.array(vals)
    return cols


def write_xray_batch(path, bases, dirs, labels, int_A, int_A0, err):
    """Columns x1,x2,x3,v1,v2,v3,h0..h{k-1},int_A,int_A0,err."""
    bases = np.asarray(bases, float)
    dirs = np.broadcast_to(np.asarray(dirs, float), bases.shape)
    k = 0 if labels is None else np.asarray(labels).shape[-1]
    header = ["x1", "x2", "x3", "v1", "v2", "v3"] + [f"h{i}" for i in range(k)] + ["int_A", "int_A0", "err"]
    rows = []
    for i in range(len(bases)):
        lab = [] if labels is None else list(np.asarray(labels)[i])
        rows.append(list(bases[i]) + list(dirs[i]) + lab + [int_A[i], int_A0[i], err[i]])
    write_csv(path, header, rows)


def write_phase_table(path, direction_index, s1, s2, labels, theta_plus, theta_minus, nu):
    """Columns dir,s1,s2,h0..,theta_plus,theta_minus,v1,v2,v3 (one row per line)."""
    k = 0 if labels is None else np.asarray(labels).shape[-1]
    header = ["dir", "s1", "s2"] + [f"h{i}" for i in range(k)] + ["theta_plus", "theta_minus", "v1", "v2", "v3"]
    rows = []
    for i in range(len(s1)):
        lab = [] if labels is None else list(np.asarray(labels)[i])
        rows.append([direction_index, s1[i], s2[i]] + lab + [theta_plus[i], theta_minus[i]] + list(nu))
    return header, rows
