"""CSV writers and readers for fields, solutions and inversion histories.

Every number is written with 17 significant digits so that files round-trip
exactly and repeated runs are byte-identical.
"""

import csv
import os

import numpy as np

from .boundary import BoundaryLoop, CauchyData
from .exceptions import ConfigError
from .geometry import TAG_GAMMA


def fmt(x):
    return format(float(x), ".17g")


def _open(path):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    return open(path, "w", encoding="ascii", newline="\n")


def write_rows(path, header, rows):
    with _open(path) as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else fmt(v) if not isinstance(v, (int, np.integer))
                              else str(int(v)) for v in row) + "\n")


def write_solution_csv(solution, path):
    v = solution.mesh.vertices
    rows = [(i, v[i, 0], v[i, 1], solution.nodal_values[i]) for i in range(len(v))]
    write_rows(path, ["vertex", "x", "y", "u"], rows)


def write_cauchy_csv(data, path):
    """``theta,trace,conormal,tangential_derivative`` sorted by angle."""
    theta = data.loop.angles
    order = np.argsort(theta, kind="stable")
    rows = [(theta[i], data.trace.values[i], data.conormal.values[i], data.tangential.values[i])
            for i in order]
    write_rows(path, ["theta", "trace", "conormal", "tangential_derivative"], rows)


def read_cauchy_csv(path, curve, tag=TAG_GAMMA, metric=None):
    """Read a Cauchy dump; node positions are rebuilt on ``curve`` from the angles."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"data file {path} does not exist")
    with open(path, encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["theta", "trace", "conormal", "tangential_derivative"]:
            raise ConfigError(f"{path}: unexpected header {header}")
        rows = np.array([[float(x) for x in row] for row in reader if row])
    if rows.ndim != 2 or len(rows) < 3:
        raise ConfigError(f"{path}: need at least 3 data rows")
    loop = BoundaryLoop.from_points(curve.point(rows[:, 0]), tag, curve.center, metric)
    return CauchyData.from_trace(loop.field(rows[:, 1]), loop.field(rows[:, 2]))


def write_field_csv(field, path):
    """``theta,value`` sorted by angle."""
    theta = field.loop.angles
    order = np.argsort(theta, kind="stable")
    write_rows(path, ["theta", "value"], [(theta[i], field.values[i]) for i in order])


def write_fourier_csv(series, path):
    write_rows(path, ["n", "kind", "coef"], series.rows())


def write_eigenbasis(basis, path_values, path_vectors):
    """Eigenvalues as ``m,lambda``; eigenfunctions as one row per node (``node,phi_0,...``)."""
    write_rows(path_values, ["m", "lambda"], [(m, lam) for m, lam in enumerate(basis.eigenvalues)])
    header = ["node"] + [f"phi_{m}" for m in range(basis.size)]
    write_rows(path_vectors, header, [(i, *basis.vectors[i]) for i in range(basis.loop.n)])


def write_history_csv(result, path):
    write_rows(path, ["iter", "mismatch", "update_norm", "min_u_on_S"],
               [(int(r[0]), *r[1:]) for r in result.history_rows()])


def write_key_values(path, mapping):
    rows = []
    for key in sorted(mapping):
        val = mapping[key]
        if isinstance(val, bool):
            val = "true" if val else "false"
        elif isinstance(val, (int, np.integer)):
            val = str(int(val))
        elif not isinstance(val, str):
            val = fmt(val)
        rows.append((key, val))
    write_rows(path, ["name", "value"], rows)


__all__ = ["fmt", "write_rows", "write_solution_csv", "write_cauchy_csv", "read_cauchy_csv",
           "write_field_csv", "write_fourier_csv", "write_eigenbasis", "write_history_csv",
           "write_key_values"]
