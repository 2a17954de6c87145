"""Recovering part-latents from observed occupancy samples.

Two stages: a seeded Gaussian-mixture EM fit on the occupied points puts
one Gaussian per part roughly in place, then gradient descent on the
binary cross-entropy between decoded and observed occupancy sharpens the
means, covariance factors, and radii jointly. The refinement gradient is
written by hand (the occupancy max routes each sample to its dominant
part) and is finite-difference checked in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from ..errors import ContractError
from ..numcore import AdamWState, adamw_step, inv_softplus, make_rng, sigmoid, softplus
from ..partspace import PartLatent
from .field import SHARPNESS
from .latent import GAUSS_WIDTH

_COV_REG = 1e-6


@dataclass(frozen=True)
class InvertResult:
    latent: PartLatent
    mean_bce: float
    em_reseeds: int


def _kmeans(pts: np.ndarray, k: int, rng) -> np.ndarray:
    """k-means++ seeding followed by a few Lloyd iterations; returns labels."""
    n = len(pts)
    centers = np.empty((k, 3))
    centers[0] = pts[rng.integers(n)]
    d2 = np.sum((pts - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(n, 1.0 / n)
        centers[j] = pts[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, np.sum((pts - centers[j]) ** 2, axis=1))
    labels = np.zeros(n, dtype=int)
    for _ in range(12):
        dists = np.sum((pts[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = dists.argmin(axis=1)
        for j in range(k):
            sel = labels == j
            if sel.any():
                centers[j] = pts[sel].mean(axis=0)
            else:
                centers[j] = pts[rng.integers(n)]
    return labels


def _em_fit(pts: np.ndarray, m: int, rng, iters: int = 35):
    """Full-covariance GMM fit; returns (weights, means, covs) or None if degenerate."""
    n = len(pts)
    labels = _kmeans(pts, m, rng)
    weights = np.full(m, 1.0 / m)
    means = np.empty((m, 3))
    covs = np.empty((m, 3, 3))
    for j in range(m):
        sel = pts[labels == j] if (labels == j).any() else pts[rng.integers(n)][None]
        means[j] = sel.mean(axis=0)
        diff = sel - means[j]
        covs[j] = diff.T @ diff / len(sel) + _COV_REG * np.eye(3)
        weights[j] = max(len(sel) / n, 1e-3)
    weights /= weights.sum()

    for _ in range(iters):
        vals, vecs = np.linalg.eigh(covs)
        if vals.min() < 1e-10:
            return None
        inv = np.einsum("mij,mj,mkj->mik", vecs, 1.0 / vals, vecs)
        logdet = np.log(vals).sum(axis=1)
        diff = pts[:, None, :] - means[None, :, :]
        q = np.einsum("nmi,mij,nmj->nm", diff, inv, diff)
        logp = np.log(weights)[None, :] - 0.5 * (q + logdet[None, :])
        logp -= logp.max(axis=1, keepdims=True)
        resp = np.exp(logp)
        resp /= resp.sum(axis=1, keepdims=True)
        nk = resp.sum(axis=0)
        if nk.min() < 1e-8 * n:
            return None
        weights = nk / n
        means = (resp.T @ pts) / nk[:, None]
        for j in range(m):
            d = pts - means[j]
            covs[j] = (resp[:, j][:, None] * d).T @ d / nk[j] + _COV_REG * np.eye(3)
    return weights, means, covs


def _decode_raw(params):
    """Raw refinement parameters -> (L, inv_sigma, radii) with softplus diagonals."""
    diag = softplus(params["diag"])
    m = diag.shape[0]
    L = np.zeros((m, 3, 3))
    L[:, 0, 0] = diag[:, 0]
    L[:, 1, 1] = diag[:, 1]
    L[:, 2, 2] = diag[:, 2]
    L[:, 1, 0] = params["off"][:, 0]
    L[:, 2, 0] = params["off"][:, 1]
    L[:, 2, 1] = params["off"][:, 2]
    radii = softplus(params["rad"])
    return L, radii


def refine_loss_and_grads(params: dict, pts: np.ndarray, targets: np.ndarray):
    """Mean occupancy BCE and its gradient w.r.t. the raw part parameters."""
    L, radii = _decode_raw(params)
    m = L.shape[0]
    n = len(pts)
    q = np.empty((n, m))
    ys = []
    for i in range(m):
        delta = (pts - params["mu"][i]).T  # (3, n)
        y = solve_triangular(L[i], delta, lower=True)
        ys.append(y)
        q[:, i] = np.sum(y * y, axis=0)
    margin = radii[None, :] ** 2 - q
    istar = margin.argmax(axis=1)
    u = SHARPNESS * margin[np.arange(n), istar]
    loss = float(np.mean(softplus(u) - u * targets))
    c = SHARPNESS * (sigmoid(u) - targets) / n  # d loss / d margin, per sample

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    sig_diag = sigmoid(params["diag"])
    sig_rad = sigmoid(params["rad"])
    for i in range(m):
        sel = istar == i
        if not sel.any():
            continue
        ci = c[sel]
        grads["rad"][i] = ci.sum() * 2.0 * radii[i] * sig_rad[i]
        y = ys[i][:, sel]
        uvec = solve_triangular(L[i].T, y, lower=False)  # sigma^{-1} delta
        delta = (pts[sel] - params["mu"][i]).T
        grads["mu"][i] = 2.0 * (uvec * ci).sum(axis=1)
        gL = 2.0 * (uvec * ci) @ y.T  # d loss / d L, before masking
        grads["diag"][i] = np.diag(gL) * sig_diag[i]
        grads["off"][i] = (gL[1, 0], gL[2, 0], gL[2, 1])
    return loss, grads


def invert_occupancy(samples, m: int, seed: int, refine_steps: int = 250,
                     d: int = 32, max_reseeds: int = 5) -> InvertResult:
    """Fit an m-part latent whose decoded occupancy matches the samples."""
    if isinstance(samples, tuple):
        pts, occ = samples
    else:
        pts = np.array([s[0] for s in samples], dtype=np.float64)
        occ = np.array([s[1] for s in samples], dtype=np.float64)
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    occ = np.asarray(occ, dtype=np.float64).reshape(-1)
    if len(pts) < 1000:
        raise ContractError(f"need at least 1000 samples, got {len(pts)}")
    inside = occ > 0.5
    if not inside.any():
        raise ContractError("no occupied sample points: nothing to fit")
    if inside.all():
        raise ContractError("no empty sample points: fit is unconstrained")

    occupied = pts[inside]
    fit = None
    reseeds = 0
    for attempt in range(max_reseeds + 1):
        fit = _em_fit(occupied, m, make_rng(seed, 0xE3, attempt))
        if fit is not None:
            reseeds = attempt
            break
    if fit is None:
        raise ContractError(f"EM degenerated on all {max_reseeds + 1} seedings")
    weights, means, covs = fit

    # a uniform solid ellipsoid has second moment (semi/2)^2 * 4/5 relative
    # to the decoded boundary at Mahalanobis radius 2, hence the 5/4 factor
    covs_lat = 1.25 * covs
    params = {
        "mu": means.copy(),
        "diag": np.empty((m, 3)),
        "off": np.empty((m, 3)),
        "rad": np.full(m, inv_softplus(2.0)),
    }
    for j in range(m):
        L = np.linalg.cholesky(covs_lat[j])
        params["diag"][j] = inv_softplus(np.diag(L))
        params["off"][j] = (L[1, 0], L[2, 0], L[2, 1])

    state = AdamWState(lr=0.02, weight_decay=0.0)
    loss = float("nan")
    for _ in range(refine_steps):
        loss, grads = refine_loss_and_grads(params, pts, occ)
        params = adamw_step(state, params, grads)
    loss, _ = refine_loss_and_grads(params, pts, occ)

    rows = np.zeros((m, d))
    rows[:, 0:3] = params["mu"]
    rows[:, 3:6] = params["diag"]
    rows[:, 6:9] = params["off"]
    rows[:, 9] = np.log(np.maximum(weights, 1e-12))
    rows[:, GAUSS_WIDTH] = params["rad"]
    return InvertResult(latent=PartLatent(rows), mean_bce=loss, em_reseeds=reseeds)
