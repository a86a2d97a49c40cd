"""Diagnostics for propagation runs on the structured unit-square mesh."""
from __future__ import annotations

import numpy as np

from ..assembly import DGSpace
from .output import lattice, sample_lattice


def mirror_elements(level: int) -> np.ndarray:
    """Index of the element that is the image of each element under (x, y) -> (y, x).

    Valid for ``unit_square_mesh``: the lower triangle of square (i, j) maps to
    the upper triangle of square (j, i), with reference coordinates swapped.
    """
    n = 2**level
    j, i = np.divmod(np.arange(n * n), n)
    lower = 2 * (j * n + i)
    upper_of_mirror = 2 * (i * n + j) + 1
    out = np.empty(2 * n * n, dtype=np.int64)
    out[lower] = upper_of_mirror
    out[upper_of_mirror] = lower
    return out


def mirror_defect(space: DGSpace, coeffs) -> float:
    """max |u(x, y) - u(y, x)| over all elements' lattice points."""
    pts, _ = lattice(space.p)
    lookup = {tuple(np.round(q * space.p).astype(int)): k for k, q in enumerate(pts)}
    swap = np.array([lookup[(j, i)] for i, j in np.round(pts * space.p).astype(int)])
    vals = sample_lattice(space, coeffs)
    image = vals[mirror_elements(space.mesh.level)][:, swap]
    return float(np.abs(vals - image).max())


def active_region(space: DGSpace, coeffs, threshold: float = 0.5) -> np.ndarray:
    """Mask of elements whose mean value is at least ``threshold``."""
    return space.cell_averages(coeffs) >= threshold


def front_radii(space: DGSpace, coeffs, center=(0.5, 0.5), threshold: float = 0.5,
                sectors: int = 8) -> np.ndarray:
    """Outermost distance from ``center`` of the active region in each angular sector.

    Sectors without active elements get 0.
    """
    c = space.mesh.centroids() - np.asarray(center)
    r = np.hypot(c[:, 0], c[:, 1])
    ang = np.mod(np.arctan2(c[:, 1], c[:, 0]), 2 * np.pi)
    sec = np.minimum((ang / (2 * np.pi) * sectors).astype(int), sectors - 1)
    act = active_region(space, coeffs, threshold)
    out = np.zeros(sectors)
    np.maximum.at(out, sec[act], r[act])
    return out
