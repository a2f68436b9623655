"""Dense complex matrix files and CSV tables.

Matrix files are plain text: a header line ``rows cols`` followed by one
``re im`` pair per line in row-major order.  Floats are written with 17
significant digits so that files round-trip exactly.
"""

import csv

import numpy as np

from .errors import InputError

FLOAT_FMT = "%.17g"


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return FLOAT_FMT % x
    return str(x)


def write_matrix(path, A):
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    rows, cols = A.shape
    with open(path, "w") as fh:
        fh.write("%d %d\n" % (rows, cols))
        for z in A.ravel():
            fh.write("%s %s\n" % (FLOAT_FMT % z.real, FLOAT_FMT % z.imag))


def read_matrix(path):
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if not lines or len(lines[0]) != 2:
        raise InputError("%s: missing 'rows cols' header" % path)
    rows, cols = int(lines[0][0]), int(lines[0][1])
    body = lines[1:]
    if len(body) != rows * cols:
        raise InputError("%s: expected %d entries, found %d" % (path, rows * cols, len(body)))
    vals = np.array([float(a) + 1j * float(b) for a, b in body])
    return vals.reshape(rows, cols)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])
