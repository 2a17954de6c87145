"""Point-cloud evaluation: surface sampling, CD/EMD, and set metrics.

Conventions (documented so every reported number is self-consistent):
chamfer is the sum of the two directed means of *squared* nearest-neighbor
distances; EMD is the mean point-to-point Euclidean distance under the
exact minimum-cost bijection (Hungarian); COV counts distinct covered
references, MMD averages each reference's nearest generation, and 1-NNA is
leave-one-out 1-NN accuracy on the labeled union (ideal 50%).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .errors import ContractError
from .numcore import make_rng
from .shapegen import Mesh

DEFAULT_CLOUD_SIZE = 2048


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (n, 3)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ContractError("point cloud must be a non-empty (n, 3) array")
        if not np.all(np.isfinite(pts)):
            raise ContractError("point cloud has non-finite coordinates")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return len(self.points)


def sample_points(mesh: Mesh, n: int = DEFAULT_CLOUD_SIZE, seed: int = 0) -> PointCloud:
    """Area-weighted uniform surface sampling, seeded."""
    if mesh.is_empty:
        raise ContractError("cannot sample points from an empty mesh")
    v = mesh.vertices
    tri = v[mesh.faces]  # (k, 3, 3)
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    if areas.sum() <= 0:
        raise ContractError("mesh has zero total area")
    rng = make_rng(seed, 0x9C1)
    faces = rng.choice(len(tri), size=n, p=areas / areas.sum())
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = tri[faces, 0], tri[faces, 1], tri[faces, 2]
    pts = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
    return PointCloud(pts)


def chamfer(a: PointCloud, b: PointCloud) -> float:
    """Two-sided mean of squared nearest-neighbor distances."""
    d_ab, _ = cKDTree(b.points).query(a.points, k=1)
    d_ba, _ = cKDTree(a.points).query(b.points, k=1)
    return float(np.mean(d_ab ** 2) + np.mean(d_ba ** 2))


def emd(a: PointCloud, b: PointCloud) -> float:
    """Mean distance under the exact minimum-cost bijection; |a| == |b|."""
    if a.n != b.n:
        raise ContractError(f"EMD needs equal cloud sizes, got {a.n} and {b.n}")
    costs = np.linalg.norm(a.points[:, None, :] - b.points[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(costs)
    return float(costs[rows, cols].mean())


def _distance(kind: str):
    if kind == "CD":
        return chamfer
    if kind == "EMD":
        return emd
    raise ContractError(f"unknown distance kind '{kind}'")


@dataclass(frozen=True)
class GenMetrics:
    cov: float
    mmd: float
    nna: float


def gen_metrics(gen, ref, dist: str = "CD") -> GenMetrics:
    """Coverage, minimum matching distance, and 1-NN accuracy for shape sets."""
    if not gen or not ref:
        raise ContractError("both shape sets must be non-empty")
    fn = _distance(dist)
    cross = np.array([[fn(g, r) for r in ref] for g in gen])

    cov = len(set(cross.argmin(axis=1).tolist())) / len(ref)
    mmd = float(cross.min(axis=0).mean())

    gg = np.zeros((len(gen), len(gen)))
    for i in range(len(gen)):
        for j in range(i + 1, len(gen)):
            gg[i, j] = gg[j, i] = fn(gen[i], gen[j])
    rr = np.zeros((len(ref), len(ref)))
    for i in range(len(ref)):
        for j in range(i + 1, len(ref)):
            rr[i, j] = rr[j, i] = fn(ref[i], ref[j])

    n_g, n_r = len(gen), len(ref)
    full = np.block([[gg, cross], [cross.T, rr]])
    np.fill_diagonal(full, np.inf)
    labels = np.concatenate([np.ones(n_g), np.zeros(n_r)])
    nearest = full.argmin(axis=1)
    acc = float(np.mean(labels[nearest] == labels))
    return GenMetrics(cov=cov, mmd=mmd, nna=acc)


def write_report_csv(path, rows) -> None:
    """rows: iterables of (metric, dist_kind, value, n_gen, n_ref, cloud_size, seed)."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "dist_kind", "value", "n_gen", "n_ref", "cloud_size", "seed"])
        for row in rows:
            writer.writerow(row)
