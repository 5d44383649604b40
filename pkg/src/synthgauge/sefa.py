"""Closed-form latent directions (semantic factorisation) and w-space edits."""
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import ValidationError
from .toygen import synthesize

DEFAULT_ALPHAS = (-2.0, -1.0, 0.0, 1.0, 2.0)


@dataclass(frozen=True)
class DirectionBasis:
    directions: np.ndarray  # (k, latent_dim), one unit direction per row
    significances: np.ndarray  # (k,), descending

    def __len__(self):
        return self.directions.shape[0]

    def to_dict(self):
        return {"directions": self.directions.tolist(), "significances": self.significances.tolist()}


def factorize_weight(a):
    """Eigenvectors of A^T A for a weight matrix ``A`` of shape (out, in)."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValidationError(f"weight must be a matrix, got shape {a.shape}")
    if not np.any(a):
        raise ValidationError("cannot factorize an all-zero weight")
    eig = numerics.sym_eig(a.T @ a, "A^T A")
    # A^T A is PSD; tiny negative eigenvalues are roundoff
    return DirectionBasis(eig.vectors.T.copy(), np.clip(eig.values, 0.0, None))


def factorize(g):
    """Directions from the first synthesis layer of ``g`` (bias ignored)."""
    if not g.synthesis_layers:
        raise ValidationError("generator has no synthesis layer")
    return factorize_weight(g.synthesis_layers[0].weight)


def edit(w, basis, index, alpha):
    if not 0 <= index < len(basis):
        raise ValidationError(f"direction index {index} out of range [0, {len(basis)})")
    return np.asarray(w, dtype=np.float64) + alpha * basis.directions[index]


def edit_sweep(w, g, basis, indices, alphas=DEFAULT_ALPHAS):
    """Row-major grid of ``(index, alpha, sample)`` over ``indices`` x ``alphas``."""
    if 0.0 not in [float(a) for a in alphas]:
        raise ValidationError("alphas must include 0 so the unedited sample appears in every row")
    grid = []
    for i in indices:
        for a in alphas:
            grid.append((int(i), float(a), synthesize(edit(w, basis, i, a), g)))
    return grid
