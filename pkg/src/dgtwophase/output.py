"""Line sampling, legacy VTK snapshots and CSV diagnostics."""
import csv
from dataclasses import dataclass

import numpy as np

from .dgspace import P, S

LINE_START = (0.25, 0.65)
LINE_END = (0.775, 0.39)

# no wall-clock column: the file is reproducible byte for byte
DIAGNOSTIC_COLUMNS = ("t", "dofs", "elements", "sum_eta2", "outer_iters", "newton_iters",
                      "scheme", "linear_solves", "n_limited", "min_level", "max_level",
                      "n_order1", "n_order2", "n_order3", "s_min", "s_max")


@dataclass
class LineSample:
    sigma: np.ndarray
    points: np.ndarray
    values: np.ndarray

    def front_position(self, threshold=0.05):
        """Smallest sigma with value above ``threshold`` (nan if none)."""
        hit = np.flatnonzero(self.values > threshold)
        return float(self.sigma[hit[0]]) if hit.size else float("nan")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("sigma", "x", "y", "s_n"))
            for s, (x, y), v in zip(self.sigma, self.points, self.values):
                w.writerow((f"{s:.6f}", f"{x:.6f}", f"{y:.6f}", f"{v:.10e}"))


def line_sample(u, n=512, start=LINE_START, end=LINE_END, field=S):
    """Sample a field at ``n`` uniform parameters along the segment start -> end."""
    if n < 2:
        raise ValueError("need at least two sample points")
    sigma = np.linspace(0.0, 1.0, n)
    a, b = np.asarray(start, float), np.asarray(end, float)
    pts = (1.0 - sigma)[:, None] * a + sigma[:, None] * b
    return LineSample(sigma, pts, u.evaluate_at(field, pts))


def write_vtk(path, u, eta2=None, title="dgtwophase"):
    """Legacy ASCII VTK unstructured grid of the leaf elements.

    Cell data: saturation and pressure means, level, order and eta^2;
    point data: the saturation evaluated at each element's own corners
    (corners are not shared, so the discontinuous field is kept).
    """
    mesh = u.space.mesh
    n = mesh.n_elements
    corners = mesh.corners().reshape(-1, 2)
    ref = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    els = np.repeat(np.arange(n), 4)
    s_corner = u.evaluate(S, els, np.tile(ref[:, 0], n), np.tile(ref[:, 1], n))
    eta2 = np.zeros(n) if eta2 is None else np.asarray(eta2)
    with open(path, "w") as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {4 * n} double\n")
        np.savetxt(fh, np.column_stack([corners, np.zeros(4 * n)]), fmt="%.10g")
        fh.write(f"CELLS {n} {5 * n}\n")
        np.savetxt(fh, np.column_stack([np.full(n, 4), np.arange(4 * n).reshape(n, 4)]),
                   fmt="%d")
        fh.write(f"CELL_TYPES {n}\n")
        np.savetxt(fh, np.full(n, 9), fmt="%d")
        fh.write(f"CELL_DATA {n}\n")
        for name, vals, fmt in (("s_n", u.means(S), "%.10e"), ("p", u.means(P), "%.10e"),
                                ("level", mesh.level, "%d"), ("order", u.space.orders, "%d"),
                                ("eta2", eta2, "%.10e")):
            kind = "int" if fmt == "%d" else "double"
            fh.write(f"SCALARS {name} {kind} 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, vals, fmt=fmt)
        fh.write(f"POINT_DATA {4 * n}\nSCALARS s_n_point double 1\nLOOKUP_TABLE default\n")
        np.savetxt(fh, s_corner, fmt="%.10e")


def read_vtk_cell_data(path):
    """Minimal reader for files written by :func:`write_vtk` (cell arrays only)."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    out, i, n_cells = {}, 0, None
    while i < len(tokens):
        line = tokens[i].split()
        if line[:1] == ["CELL_DATA"]:
            n_cells = int(line[1])
        elif line[:1] == ["POINT_DATA"]:
            break
        elif line[:1] == ["SCALARS"] and n_cells is not None:
            out[line[1]] = np.array([float(v) for v in tokens[i + 2:i + 2 + n_cells]])
            i += 1 + n_cells
        i += 1
    return out


class DiagnosticsWriter:
    def __init__(self, path):
        self.fh = open(path, "w", newline="")
        self.w = csv.writer(self.fh)
        self.w.writerow(DIAGNOSTIC_COLUMNS)

    def row(self, **vals):
        out = []
        for c in DIAGNOSTIC_COLUMNS:
            v = vals.get(c, "")
            out.append(f"{v:.10g}" if isinstance(v, float) else v)
        self.w.writerow(out)
        self.fh.flush()

    def close(self):
        self.fh.close()
