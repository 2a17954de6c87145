"""Localized shape editing and encoding-space morphing.

The edit loop: encode the original and the edited sketch, flag the parts
whose encoding rows moved (robust median + 3*MAD threshold), sample a
latent for each encoding with the same seed, then splice the flagged rows.
Same-seed sampling keeps the unedited rows maximally stable, so the splice
is the only place the shapes can diverge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .partspace import PartLatent
from .sketchnet import SketchEncoding

_ABS_FLOOR = 1e-6


@dataclass(frozen=True)
class EditReport:
    edited_part_indices: frozenset
    distances: np.ndarray  # per-part encoding L2 distances
    threshold: float

    def to_dict(self) -> dict:
        return {
            "edited_part_indices": sorted(int(i) for i in self.edited_part_indices),
            "distances": [float(x) for x in self.distances],
            "threshold": float(self.threshold),
        }


def detect_edited_parts(eta: SketchEncoding, eta_prime: SketchEncoding) -> EditReport:
    """Flag parts whose encoding moved beyond median + 3*MAD of all moves."""
    if eta.rows.shape != eta_prime.rows.shape:
        raise ContractError("encoding shapes differ")
    d = np.linalg.norm(eta.rows - eta_prime.rows, axis=1)
    med = float(np.median(d))
    mad = float(np.median(np.abs(d - med)))
    threshold = max(med + 3.0 * mad, _ABS_FLOOR)
    edited = frozenset(int(i) for i in np.nonzero(d > threshold)[0])
    return EditReport(edited_part_indices=edited, distances=d, threshold=threshold)


def part_swap(z: PartLatent, z_prime: PartLatent, indices) -> PartLatent:
    """Replace the rows named by ``indices`` with the corresponding rows of z'."""
    if z.rows.shape != z_prime.rows.shape:
        raise ContractError("latent shapes differ")
    idx = sorted(int(i) for i in indices)
    if idx and (idx[0] < 0 or idx[-1] >= z.m):
        raise ContractError(f"part index out of range 0..{z.m - 1}")
    rows = z.rows.copy()
    rows[idx] = z_prime.rows[idx]
    return PartLatent(rows)


def interpolate_encodings(a: SketchEncoding, b: SketchEncoding, lam: float) -> SketchEncoding:
    """(1 - lambda) * a + lambda * b, lambda in [0, 1]."""
    if a.rows.shape != b.rows.shape:
        raise ContractError("encoding shapes differ")
    if not (0.0 <= lam <= 1.0):
        raise ContractError(f"lambda {lam} outside [0, 1]")
    if lam == 0.0:
        return a
    if lam == 1.0:
        return b
    return SketchEncoding((1.0 - lam) * a.rows + lam * b.rows)
