"""Part-level representation and alignment.

Each shape part carries a 3D Gaussian (mean, covariance, mixing weight)
describing where the part lives. Shapes are compared part-by-part with the
closed-form squared Wasserstein-2 distance between Gaussians, and latents
are aligned to a template by a minimum-cost bijective assignment on that
distance so the same row index means the same part across the dataset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ContractError
from .numcore import make_rng

_SPD_EIG_FLOOR = 1e-12


@dataclass(frozen=True)
class Gaussian3:
    """One part's volumetric descriptor: N(mu, sigma) with mixing weight pi."""

    mu: np.ndarray
    sigma: np.ndarray
    pi: float

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=np.float64).reshape(3))
        sigma = np.asarray(self.sigma, dtype=np.float64).reshape(3, 3)
        if not np.all(np.isfinite(sigma)) or not np.all(np.isfinite(self.mu)):
            raise ContractError("Gaussian3 parameters must be finite")
        if np.abs(sigma - sigma.T).max() > 1e-9:
            raise ContractError("covariance not symmetric within 1e-9")
        sigma = 0.5 * (sigma + sigma.T)
        object.__setattr__(self, "sigma", sigma)
        if not (0.0 < self.pi <= 1.0):
            raise ContractError(f"mixing weight {self.pi} outside (0, 1]")
        smallest = float(np.linalg.eigvalsh(sigma)[0])
        if smallest <= _SPD_EIG_FLOOR:
            raise ContractError(f"covariance not SPD: smallest eigenvalue {smallest:.3e}")


@dataclass(frozen=True)
class PartLatent:
    """m x d matrix; row i is the latent code of part i."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 16:
            raise ContractError(f"part latent needs shape (m>=1, d>=16), got {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise ContractError("part latent rows must be finite")
        object.__setattr__(self, "rows", rows)

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def permuted(self, perm) -> "PartLatent":
        return PartLatent(self.rows[np.asarray(perm, dtype=int)])


@dataclass(frozen=True)
class Alignment:
    """Row reordering applied to a latent: output row n = source row perm[n]."""

    perm: np.ndarray
    costs: np.ndarray

    @property
    def total_cost(self) -> float:
        m = len(self.perm)
        return float(self.costs[self.perm, np.arange(m)].sum())

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.perm == np.arange(len(self.perm))))


def spd_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric positive-definite square root via eigendecomposition."""
    a = np.asarray(a, dtype=np.float64)
    a = 0.5 * (a + a.T)
    vals, vecs = np.linalg.eigh(a)
    if vals[0] <= _SPD_EIG_FLOOR:
        raise ContractError(f"matrix not SPD: smallest eigenvalue {vals[0]:.3e}")
    return (vecs * np.sqrt(vals)) @ vecs.T


def gaussian_w2(g1: Gaussian3, g2: Gaussian3) -> float:
    """Squared Wasserstein-2 distance between two 3D Gaussians (weights ignored).

    ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2})
    """
    dmu = g1.mu - g2.mu
    s1h = spd_sqrt(g1.sigma)
    cross = spd_sqrt(s1h @ g2.sigma @ s1h)
    trace_term = np.trace(g1.sigma) + np.trace(g2.sigma) - 2.0 * np.trace(cross)
    return max(float(dmu @ dmu + trace_term), 0.0)


def pairwise_w2(parts_a: list, parts_b: list) -> np.ndarray:
    costs = np.empty((len(parts_a), len(parts_b)))
    for i, ga in enumerate(parts_a):
        for j, gb in enumerate(parts_b):
            costs[i, j] = gaussian_w2(ga, gb)
    return costs


def align_to_template(z: PartLatent, zt: PartLatent, greedy: bool = False):
    """Reorder z's rows so row n holds the part matching template part n.

    The default solves the m x m assignment problem exactly (bijective,
    minimum total squared Wasserstein cost). ``greedy=True`` instead takes
    the per-template-slot independent argmin, which is not guaranteed to be
    a bijection; it exists for comparison only.
    """
    from .shapegen import decode_parts  # local import: shapegen depends on this module

    if z.m != zt.m:
        raise ContractError(f"part count mismatch: {z.m} != {zt.m}")
    ga = decode_parts(z).gaussians
    gb = decode_parts(zt).gaussians
    costs = pairwise_w2(ga, gb)
    if greedy:
        perm = np.argmin(costs, axis=0)
    else:
        # deterministic tie-break toward the lowest source index
        eps = 1e-12 * max(costs.max(), 1.0)
        biased = costs + eps * np.arange(z.m)[:, None]
        row_ind, col_ind = linear_sum_assignment(biased)
        perm = np.empty(z.m, dtype=int)
        perm[col_ind] = row_ind
    return z.permuted(perm), Alignment(perm=np.asarray(perm), costs=costs)


def select_template(dataset: list, seed: int):
    """Pick the template latent: a seeded uniform choice over the dataset.

    Returns (latent, index) so callers can record the choice.
    """
    if not dataset:
        raise ContractError("cannot select a template from an empty dataset")
    idx = int(make_rng(seed, 0xA116).integers(0, len(dataset)))
    return dataset[idx], idx
