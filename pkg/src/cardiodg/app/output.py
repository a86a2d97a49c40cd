"""VTK snapshots and CSV tables."""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..assembly import DGSpace
from ..specfun import dubiner_eval, dubiner_indices

CONVERGENCE_HEADER = (
    "sigma", "h", "Linf", "L2", "H1", "DG", "slope_Linf", "slope_L2", "slope_H1", "slope_DG",
)
P_CONVERGENCE_HEADER = ("p", "sigma", "h", "Linf", "L2", "H1", "DG")
SUMMARY_HEADER = (
    "step", "t", "iterations", "residual", "total_iterations",
    "Vm_min", "Vm_max", "Vm_cell_min", "Vm_cell_max",
)
VTK_TRIANGLE = 5
# the lattice vertex at eta = 1 is the collapsed edge of the square map;
# evaluate the basis an ulp-scale distance below it
_TOP_NUDGE = 1e-14


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def lattice(p: int):
    """Equispaced points (i/p, j/p), i + j <= p, and the p^2 sub-triangles."""
    index = {}
    pts = []
    for j in range(p + 1):
        for i in range(p + 1 - j):
            index[i, j] = len(pts)
            pts.append((i / p, j / p))
    tris = []
    for j in range(p):
        for i in range(p - j):
            tris.append((index[i, j], index[i + 1, j], index[i, j + 1]))
            if i + j <= p - 2:
                tris.append((index[i + 1, j], index[i + 1, j + 1], index[i, j + 1]))
    return np.array(pts), np.array(tris, dtype=np.int64)


@lru_cache(maxsize=16)
def lattice_basis(p: int) -> np.ndarray:
    """Basis values at the lattice points, shape (n_points, n_loc)."""
    pts, _ = lattice(p)
    eta = np.minimum(pts[:, 1], 1.0 - _TOP_NUDGE)
    vals = np.stack([dubiner_eval(i, j, pts[:, 0], eta) for i, j in dubiner_indices(p)], axis=1)
    vals.setflags(write=False)
    return vals


def sample_lattice(space: DGSpace, coeffs) -> np.ndarray:
    """Field values at every element's lattice points, shape (n_elements, n_points)."""
    return space.reshape(coeffs) @ lattice_basis(space.p).T


def _fmt(v: float) -> str:
    return f"{v:.10g}"


def write_vtk(fields: dict, space: DGSpace, path, title: str = "cardiodg snapshot") -> Path:
    """Legacy ASCII unstructured grid; each element is split into p^2 linear triangles.

    ``fields`` maps point-data names ("Vm", "w", ...) to modal coefficient vectors.
    Points are duplicated per element so discontinuities stay visible.
    """
    ref, tris = lattice(space.p)
    mesh = space.mesh
    c = mesh.element_coords()
    jac = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=2)
    xy = c[:, None, 0, :] + np.einsum("kij,qj->kqi", jac, ref)
    nel, npt = xy.shape[:2]
    cells = (tris[None, :, :] + npt * np.arange(nel)[:, None, None]).reshape(-1, 3)

    out = io.StringIO()
    out.write("# vtk DataFile Version 3.0\n")
    out.write(f"{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
    out.write(f"POINTS {nel * npt} double\n")
    for x, y in xy.reshape(-1, 2):
        out.write(f"{_fmt(x)} {_fmt(y)} 0\n")
    out.write(f"CELLS {len(cells)} {4 * len(cells)}\n")
    for a, b, d in cells:
        out.write(f"3 {a} {b} {d}\n")
    out.write(f"CELL_TYPES {len(cells)}\n")
    out.write(f"{VTK_TRIANGLE}\n" * len(cells))
    out.write(f"POINT_DATA {nel * npt}\n")
    for name, coeffs in fields.items():
        vals = sample_lattice(space, coeffs).ravel()
        out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        out.write("\n".join(_fmt(v) for v in vals))
        out.write("\n")
    return atomic_write(path, out.getvalue())


def _sci(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{v:.5e}"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_convergence_csv(rows, path) -> Path:
    """h-refinement table; errors and slopes in scientific notation with 6 significant digits."""
    if not rows:
        raise ValueError("no convergence rows to write")
    norms = CONVERGENCE_HEADER[2:6]
    body = []
    for r in rows:
        slopes = r.slopes or {}
        body.append(
            [str(r.sigma), _sci(r.h)]
            + [_sci(r.errors[k]) for k in norms]
            + [_sci(slopes.get(k)) for k in norms]
        )
    return atomic_write(path, _csv_text(CONVERGENCE_HEADER, body))


def write_p_convergence_csv(rows, path) -> Path:
    if not rows:
        raise ValueError("no convergence rows to write")
    norms = P_CONVERGENCE_HEADER[3:]
    body = [[str(r.p), str(r.sigma), _sci(r.h)] + [_sci(r.errors[k]) for k in norms] for r in rows]
    return atomic_write(path, _csv_text(P_CONVERGENCE_HEADER, body))


def write_summary_csv(records, path) -> Path:
    """Run summary; ``records`` are dicts keyed by SUMMARY_HEADER."""
    body = []
    for rec in records:
        body.append(
            [str(rec["step"]), f"{rec['t']:.6g}", str(rec["iterations"]), _sci(rec["residual"]),
             str(rec["total_iterations"])]
            + [_sci(rec[k]) for k in SUMMARY_HEADER[5:]]
        )
    return atomic_write(path, _csv_text(SUMMARY_HEADER, body))
