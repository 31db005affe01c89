"""Synthetic test tensors: a low-rank tensor plus a small random perturbation."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import SeedLike, TTTensor, formal_sum, from_vertical, norm_exact, random_gaussian_tt


def normalized_random_tt(mode_sizes: Sequence[int], rank: int, rng: np.random.Generator) -> TTTensor:
    """Gaussian TT with uniform inner rank, scaled to unit norm."""
    t = random_gaussian_tt(mode_sizes, [rank] * (len(mode_sizes) - 1), rng)
    return t.scaled(1.0 / norm_exact(t))


def perturbed_low_rank(d: int, n: int, rank: int, eps_pert: float, seed: SeedLike = None) -> TTTensor:
    """``X = Y + eps_pert * Z`` with unit-norm random TT tensors ``Y`` and ``Z``.

    Both have rank ``rank``; ``X`` is their formal sum, so its ranks are
    ``2 * rank`` while it stays within ``eps_pert`` of a rank-``rank`` tensor.
    """
    if d < 2 or n < 1 or rank < 1:
        raise ValueError("need d >= 2, n >= 1 and rank >= 1")
    if eps_pert < 0:
        raise ValueError("eps_pert must be non-negative")
    rng = np.random.default_rng(seed)
    modes = [n] * d
    y = normalized_random_tt(modes, rank, rng)
    z = normalized_random_tt(modes, rank, rng)
    return formal_sum([y, z], [1.0, eps_pert])


def decaying_tt(d: int, n: int, rank: int, ratio: float, seed: SeedLike = None) -> TTTensor:
    """Random TT whose unfoldings have geometrically decaying singular values.

    Cores ``1..d-1`` are random left-orthonormal cores with their ``j``-th
    right slice scaled by ``ratio**j``; the last core is Gaussian.  Rounding
    such a tensor to accuracy ``eps`` needs a rank of roughly
    ``log(eps) / log(ratio)`` in every mode.
    """
    if d < 2 or n < 1 or rank < 1:
        raise ValueError("need d >= 2, n >= 1 and rank >= 1")
    if not 0 < ratio <= 1:
        raise ValueError("ratio must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    ranks = [1] + [rank] * (d - 1) + [1]
    cores = []
    for k in range(d - 1):
        rows = ranks[k] * n
        q, _ = np.linalg.qr(rng.standard_normal((rows, min(rows, ranks[k + 1]))))
        ranks[k + 1] = q.shape[1]
        cores.append(from_vertical(q * ratio ** np.arange(q.shape[1]), n))
    cores.append(np.asfortranarray(rng.standard_normal((ranks[d - 1], n, 1))))
    return TTTensor(cores, copy=False)
