"""Implicit occupancy field, grid sampling, and surface extraction.

The occupancy of a point is the maximum over parts of a logistic bump
sigma(k * (r_i^2 - q_i(x))), where q_i is the Mahalanobis quadratic of part
i and r_i its structural radius: a soft union of ellipsoids whose 0.5
level set is exactly the ellipsoid boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage import measure

from ..errors import ContractError
from ..numcore import sigmoid
from .latent import ImplicitCode

SHARPNESS = 8.0
GRID_LO = -1.1
GRID_HI = 1.1


@dataclass(frozen=True)
class OccupancyGrid:
    res: int
    origin: np.ndarray  # corner of the sampled cube
    extent: float       # edge length
    values: np.ndarray  # (res, res, res), cell-center samples

    @property
    def spacing(self) -> float:
        return self.extent / self.res

    def centers(self, axis_indices) -> np.ndarray:
        return self.origin + (np.asarray(axis_indices) + 0.5) * self.spacing


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray  # (n, 3)
    faces: np.ndarray     # (k, 3) int

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ContractError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0


def part_quadratics(code: ImplicitCode, pts: np.ndarray) -> np.ndarray:
    """Mahalanobis quadratic of every part at every point: (n_pts, m)."""
    pts = np.atleast_2d(pts)
    diff = pts[:, None, :] - code.mus[None, :, :]  # (n, m, 3)
    return np.einsum("nmi,mij,nmj->nm", diff, code.inv_sigmas, diff)


def occupancy_many(code: ImplicitCode, pts: np.ndarray) -> np.ndarray:
    q = part_quadratics(code, pts)
    inner = SHARPNESS * (code.radii[None, :] ** 2 - q)
    return sigmoid(inner.max(axis=1))


def occupancy(code: ImplicitCode, x) -> float:
    """Occupancy in [0, 1]; above 0.5 iff x is inside at least one part."""
    return float(occupancy_many(code, np.asarray(x, dtype=np.float64).reshape(1, 3))[0])


def part_log_scores(code: ImplicitCode, pts: np.ndarray) -> np.ndarray:
    """log(pi_i * N(x | mu_i, sigma_i)) up to a shared constant: (n_pts, m).

    The argmax over parts assigns a point to the part most likely to own it.
    """
    q = part_quadratics(code, pts)
    return np.log(code.pis)[None, :] - 0.5 * (q + code.logdets[None, :])


def sample_grid(code: ImplicitCode, res: int) -> OccupancyGrid:
    """Occupancy at the cell centers of a res^3 grid over [-1.1, 1.1]^3."""
    if res < 8:
        raise ContractError(f"grid resolution {res} below minimum 8")
    extent = GRID_HI - GRID_LO
    axis = GRID_LO + (np.arange(res) + 0.5) * (extent / res)
    xs, ys, zs = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.stack([xs.ravel(), ys.ravel(), zs.ravel()], axis=1)
    values = occupancy_many(code, pts).reshape(res, res, res)
    return OccupancyGrid(res=res, origin=np.full(3, GRID_LO), extent=extent, values=values)


def marching_cubes(grid: OccupancyGrid, iso: float = 0.5) -> Mesh:
    """Triangulate the iso-surface with edge-interpolated vertices."""
    if not (0.0 < iso < 1.0):
        raise ContractError(f"iso level {iso} outside (0, 1)")
    vals = grid.values
    if vals.max() <= iso or vals.min() >= iso:
        return Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    h = grid.spacing
    verts, faces, _, _ = measure.marching_cubes(vals, level=iso, spacing=(h, h, h),
                                                allow_degenerate=False)
    verts = verts + (grid.origin + 0.5 * h)
    # drop any exactly degenerate triangles the extractor let through
    a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    area2 = np.linalg.norm(np.cross(b - a, c - a), axis=1)
    return Mesh(verts, faces[area2 > 0.0])


def bounding_radius(code: ImplicitCode) -> float:
    """Radius of an origin-centered sphere containing every part surface."""
    vals = np.linalg.eigvalsh(code.sigmas)
    reach = code.radii * np.sqrt(vals[:, -1])
    return float(np.max(np.linalg.norm(code.mus, axis=1) + reach))
