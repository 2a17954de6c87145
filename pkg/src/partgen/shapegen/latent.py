"""Decoding part-latents into Gaussian part descriptors and back.

Row layout (d >= 16 columns):

    0:3    part mean mu
    3:6    raw Cholesky diagonal (softplus-positive)
    6:9    Cholesky off-diagonals (l10, l20, l21)
    9      unnormalized log mixing weight (softmax across parts -> pi)
    10:16  reserved, carried through encode/decode untouched
    16:    structural content; column 16 is the raw radius entry,
           part radius r = softplus(raw)

The covariance is L L^T, so any finite row decodes to a valid SPD Gaussian.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError
from ..numcore import inv_softplus, softmax_rows_value, softplus
from ..partspace import Gaussian3, PartLatent

GAUSS_WIDTH = 16


class ImplicitCode:
    """Decoded form of a part-latent: Gaussian descriptors plus structure."""

    def __init__(self, gaussians: list, zp: np.ndarray, reserved: np.ndarray):
        self.gaussians = list(gaussians)
        self.zp = np.asarray(zp, dtype=np.float64)
        self.reserved = np.asarray(reserved, dtype=np.float64)
        m = len(self.gaussians)
        if self.zp.shape[0] != m or self.reserved.shape != (m, 6):
            raise ContractError("implicit code part counts disagree")
        total = sum(g.pi for g in self.gaussians)
        if abs(total - 1.0) > 1e-9:
            raise ContractError(f"mixing weights sum to {total}, expected 1")
        # dense views used by the occupancy evaluator
        self.mus = np.stack([g.mu for g in self.gaussians])
        self.sigmas = np.stack([g.sigma for g in self.gaussians])
        self.pis = np.array([g.pi for g in self.gaussians])
        self.radii = softplus(self.zp[:, 0]) if self.zp.shape[1] > 0 else np.ones(m)
        vals, vecs = np.linalg.eigh(self.sigmas)
        if vals.min() <= 1e-12:
            raise ContractError("singular part covariance")
        self.inv_sigmas = np.einsum("mij,mj,mkj->mik", vecs, 1.0 / vals, vecs)
        self.logdets = np.log(vals).sum(axis=1)

    @property
    def m(self) -> int:
        return len(self.gaussians)


def decode_parts(z: PartLatent) -> ImplicitCode:
    """Split each latent row into its Gaussian descriptor and structure."""
    rows = z.rows
    mus = rows[:, 0:3]
    diag = softplus(rows[:, 3:6])
    off = rows[:, 6:9]
    logw = rows[:, 9]
    pis = softmax_rows_value(logw[None, :])[0]
    gaussians = []
    for i in range(z.m):
        L = np.array([
            [diag[i, 0], 0.0, 0.0],
            [off[i, 0], diag[i, 1], 0.0],
            [off[i, 1], off[i, 2], diag[i, 2]],
        ])
        gaussians.append(Gaussian3(mu=mus[i], sigma=L @ L.T, pi=float(pis[i])))
    return ImplicitCode(gaussians, zp=rows[:, GAUSS_WIDTH:], reserved=rows[:, 10:16])


def encode_parts(code: ImplicitCode) -> PartLatent:
    """Inverse of decode_parts on the Gaussian-parameter subspace."""
    m = code.m
    d = GAUSS_WIDTH + code.zp.shape[1]
    rows = np.zeros((m, d))
    for i, gauss in enumerate(code.gaussians):
        L = np.linalg.cholesky(gauss.sigma)
        rows[i, 0:3] = gauss.mu
        rows[i, 3:6] = inv_softplus(np.diag(L))
        rows[i, 6:9] = (L[1, 0], L[2, 0], L[2, 1])
        rows[i, 9] = np.log(gauss.pi)
    rows[:, 10:16] = code.reserved
    rows[:, GAUSS_WIDTH:] = code.zp
    return PartLatent(rows)


def latent_from_parts(mus, semi_axes, radius: float = 2.0, d: int = 32,
                      log_weights=None) -> PartLatent:
    """Build a latent for axis-aligned ellipsoid parts.

    ``semi_axes`` are the solid half-extents; the stored Gaussian has
    sigma = diag((semi/radius)^2) so the decoded part boundary (Mahalanobis
    radius ``radius``) lands exactly on the ellipsoid surface.
    """
    mus = np.atleast_2d(np.asarray(mus, dtype=np.float64))
    semi = np.atleast_2d(np.asarray(semi_axes, dtype=np.float64))
    m = mus.shape[0]
    if d < GAUSS_WIDTH + 1:
        raise ContractError("latent width too small for a radius entry")
    rows = np.zeros((m, d))
    rows[:, 0:3] = mus
    rows[:, 3:6] = inv_softplus(semi / radius)
    if log_weights is None:
        log_weights = np.log(np.prod(semi, axis=1))
    rows[:, 9] = log_weights
    rows[:, GAUSS_WIDTH] = inv_softplus(radius)
    return PartLatent(rows)
