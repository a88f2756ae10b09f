"""Seeded random unitaries, isometries and states.

Seeds are plain integers (or an existing ``numpy.random.Generator``).  Trial
generators are derived with :func:`trial_rng` so results do not depend on the
order in which trials run.
"""

from __future__ import annotations

import numpy as np

from .states import DensityMatrix, PureState, SystemLayout


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def trial_rng(seed: int, *index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, index)]))


def ginibre(rows: int, cols: int, rng) -> np.ndarray:
    rng = as_rng(rng)
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)


def haar_isometry(dim_out: int, dim_in: int, rng) -> np.ndarray:
    """Haar-distributed isometry ``C^dim_in -> C^dim_out`` (V^dagger V = I)."""
    if dim_out < dim_in:
        raise ValueError(f"no isometry from dim {dim_in} into dim {dim_out}")
    q, r = np.linalg.qr(ginibre(dim_out, dim_in, rng))
    # fix the phases so the distribution is Haar rather than QR-biased
    d = np.diagonal(r)
    phases = np.where(np.abs(d) > 0, d / np.abs(d), 1.0)
    return q * phases[None, :]


def haar_unitary(dim: int, rng) -> np.ndarray:
    return haar_isometry(dim, dim, rng)


def random_pure_state(layout, rng) -> PureState:
    layout = layout if isinstance(layout, SystemLayout) else SystemLayout(tuple(layout))
    return PureState(layout, haar_isometry(layout.dim, 1, rng)[:, 0])


def random_density_matrix(layout, rng, rank: int | None = None) -> DensityMatrix:
    """Random state of the given rank (full rank by default), Hilbert-Schmidt style."""
    layout = layout if isinstance(layout, SystemLayout) else SystemLayout(tuple(layout))
    rank = layout.dim if rank is None else rank
    g = ginibre(layout.dim, rank, rng)
    rho = g @ g.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(layout, rho / np.trace(rho).real)


def dirichlet(k: int, rng) -> np.ndarray:
    return as_rng(rng).dirichlet(np.ones(k))
