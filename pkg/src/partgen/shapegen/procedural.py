"""Procedural shape families used as the training corpus.

Shapes are unions of axis-aligned ellipsoid parts built in a fixed
construction order (legs, seat, back, arms, stretchers for chairs). That
order is the ground-truth cross-shape part correspondence; the emitted
latents have their rows shuffled per shape so nothing downstream can rely
on it — recovering the correspondence is the alignment stage's job. Tests
may regenerate with ``shuffle_parts=False`` to obtain the canonical order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from ..numcore import make_rng
from ..partspace import PartLatent
from .latent import latent_from_parts

CATEGORIES = ("chair-like", "table-like", "free")
TEMPLATE_PARTS = 16


@dataclass(frozen=True)
class ShapeSpec:
    category: str = "chair-like"
    m: int = 16
    seed: int = 0
    jitter_pos: float = 0.04
    jitter_scale: float = 0.12

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ContractError(f"unknown category '{self.category}'")
        if self.m < 1:
            raise ContractError("part count must be >= 1")
        if self.jitter_pos < 0 or self.jitter_scale < 0:
            raise ContractError("jitter amplitudes must be >= 0")


def _vary(rng, base: float, rel: float) -> float:
    return base * (1.0 + rng.uniform(-1.0, 1.0) * rel)


def _chair_parts(rng, jitter_scale: float):
    js = jitter_scale
    floor = -1.0
    leg_h = _vary(rng, 0.37, js)
    leg_r = _vary(rng, 0.115, js)
    seat_t = _vary(rng, 0.10, js)
    sw = _vary(rng, 0.66, js)      # seat half-width
    sd = _vary(rng, 0.62, js)      # seat half-depth
    back_h = _vary(rng, 0.46, js)  # back half-height (per quadrant row pair)
    back_t = _vary(rng, 0.10, js)
    tilt = _vary(rng, 0.09, js)

    seat_c = floor + 2 * leg_h + seat_t
    seat_top = seat_c + seat_t
    leg_x, leg_z = sw - 0.14, sd - 0.14

    centers, semis = [], []
    # 4 legs: FL, FR, BL, BR (front = +z)
    for sx in (-1, 1):
        for sz in (1, -1):
            centers.append((sx * leg_x, floor + leg_h, sz * leg_z))
            semis.append((leg_r, leg_h, leg_r))
    # 4 seat quadrants
    for sx in (-1, 1):
        for sz in (1, -1):
            centers.append((sx * sw / 2, seat_c, sz * sd / 2))
            semis.append((0.56 * sw, seat_t, 0.56 * sd))
    # 4 backrest quadrants, upper row leans backward
    back_z = -(sd - 0.06)
    for level, zoff in ((0, 0.0), (1, tilt)):
        for sx in (-1, 1):
            centers.append((sx * sw / 2, seat_top + (0.5 + level) * back_h, back_z - zoff))
            semis.append((0.56 * sw, 0.56 * back_h, back_t))
    # 2 armrests
    for sx in (-1, 1):
        centers.append((sx * (sw + 0.05), seat_top + 0.20, 0.0))
        semis.append((0.10, 0.10, 0.78 * sd))
    # 2 side stretchers between front/back legs
    for sx in (-1, 1):
        centers.append((sx * leg_x, floor + 0.75 * leg_h, 0.0))
        semis.append((0.085, 0.085, 0.92 * leg_z))
    return np.array(centers), np.array(semis)


def _table_parts(rng, jitter_scale: float):
    js = jitter_scale
    floor = -1.0
    leg_h = _vary(rng, 0.50, js)
    leg_r = _vary(rng, 0.10, js)
    top_t = _vary(rng, 0.07, js)
    tw = _vary(rng, 0.82, js)
    td = _vary(rng, 0.62, js)
    top_c = floor + 2 * leg_h + top_t
    leg_x, leg_z = tw - 0.16, td - 0.16

    centers, semis = [], []
    for sx in (-1, 1):
        for sz in (1, -1):
            centers.append((sx * leg_x, floor + leg_h, sz * leg_z))
            semis.append((leg_r, leg_h, leg_r))
    for sx in (-1, 1):
        for sz in (1, -1):
            centers.append((sx * tw / 2, top_c, sz * td / 2))
            semis.append((0.56 * tw, top_t, 0.56 * td))
    apron_y = floor + 2 * leg_h - 0.08
    for sx in (-1, 1):  # side aprons
        centers.append((sx * leg_x, apron_y, 0.0))
        semis.append((0.06, 0.06, 0.9 * leg_z))
    for sz in (-1, 1):  # front/back aprons
        centers.append((0.0, apron_y, sz * leg_z))
        semis.append((0.9 * leg_x, 0.06, 0.06))
    stretch_y = floor + 0.6 * leg_h
    for sx in (-1, 1):
        centers.append((sx * leg_x, stretch_y, 0.0))
        semis.append((0.07, 0.07, 0.9 * leg_z))
    for sz in (-1, 1):
        centers.append((0.0, stretch_y, sz * leg_z))
        semis.append((0.9 * leg_x, 0.07, 0.07))
    return np.array(centers), np.array(semis)


def _free_parts(rng, m: int):
    centers = np.zeros((m, 3))
    placed = 0
    tries = 0
    while placed < m:
        cand = rng.uniform(-0.55, 0.55, size=3)
        tries += 1
        if placed == 0 or tries > 200 or np.min(np.linalg.norm(centers[:placed] - cand, axis=1)) > 0.38:
            centers[placed] = cand
            placed += 1
            tries = 0
    semis = rng.uniform(0.09, 0.26, size=(m, 3))
    return centers, semis


def _filler_parts(rng, count: int):
    centers = rng.uniform(-0.25, 0.25, size=(count, 3))
    semis = rng.uniform(0.05, 0.09, size=(count, 3))
    return centers, semis


def make_shape(spec: ShapeSpec, index: int, d: int = 32, shuffle_parts: bool = True) -> PartLatent:
    """Generate one shape of the family, normalized to the unit cube."""
    rng = make_rng(spec.seed, index)
    if spec.category == "free":
        centers, semis = _free_parts(rng, spec.m)
    else:
        builder = _chair_parts if spec.category == "chair-like" else _table_parts
        centers, semis = builder(rng, spec.jitter_scale)
        if spec.m < TEMPLATE_PARTS:
            raise ContractError(
                f"m={spec.m} smaller than template part count {TEMPLATE_PARTS} for {spec.category}")
        if spec.m > TEMPLATE_PARTS:
            extra_c, extra_s = _filler_parts(rng, spec.m - TEMPLATE_PARTS)
            centers = np.vstack([centers, extra_c])
            semis = np.vstack([semis, extra_s])

    centers = centers + rng.uniform(-spec.jitter_pos, spec.jitter_pos, size=centers.shape)
    semis = semis * (1.0 + rng.uniform(-spec.jitter_scale, spec.jitter_scale, size=semis.shape) * 0.5)
    semis = np.maximum(semis, 0.03)

    # scale so the farthest surface point touches the unit cube exactly
    reach = np.max(np.abs(centers) + semis)
    centers *= 1.0 / reach
    semis *= 1.0 / reach

    latent = latent_from_parts(centers, semis, d=d)
    if shuffle_parts:
        perm = make_rng(spec.seed, index, 0x5F).permutation(spec.m)
        latent = latent.permuted(perm)
    return latent


def make_dataset(spec: ShapeSpec, n: int, d: int = 32, shuffle_parts: bool = True):
    """n procedurally generated shapes, bit-reproducible for a fixed spec."""
    if n < 1:
        raise ContractError("dataset size must be >= 1")
    return [make_shape(spec, i, d=d, shuffle_parts=shuffle_parts) for i in range(n)]
