"""Adaptive randomized rounding of a sum of TT tensors.

With one set of Gaussian factors shared by all terms, the KRP sketch of the
sum is the sum of the per-term sketches, so the high-rank formal sum is never
formed.  The first working core is the concatenation of the first cores of
the terms, and the partial contractions of the terms are stacked vertically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import flops
from .core import SeedLike, TTTensor, check_same_modes, from_vertical, vertical, zeros_tt
from .errors import EmptyTermList
from .rounding import _cap, _expand_basis, compression_pass
from .sketch import GaussianFactorSet, PartialContractionSet, krp_partial_contractions_rl, residual_norm_estimate

ZERO_GUARD = 1e3 * np.finfo(np.float64).eps


@dataclass
class TTSum:
    """A list of TT tensors with equal mode sizes, standing for their sum."""

    terms: list[TTTensor]

    def __post_init__(self):
        self.terms = list(self.terms)
        if not self.terms:
            raise EmptyTermList("a TT sum needs at least one term")
        check_same_modes(self.terms)

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return self.terms[0].mode_sizes

    @property
    def ndim(self) -> int:
        return self.terms[0].ndim

    def __len__(self) -> int:
        return len(self.terms)


def _as_sum(terms) -> TTSum:
    return terms if isinstance(terms, TTSum) else TTSum(list(terms))


def sum_partial_contractions(terms, factors: GaussianFactorSet) -> list[PartialContractionSet]:
    """Per-term KRP partial contractions with one shared factor set."""
    return [krp_partial_contractions_rl(t, factors) for t in _as_sum(terms).terms]


def stacked_contraction(ws: Sequence[PartialContractionSet], k: int) -> np.ndarray:
    """``W_k`` of every term stacked vertically, matching concatenated cores."""
    return np.vstack([w[k] for w in ws])


def residual_sketch_sum(
    terms,
    z: np.ndarray,
    q: np.ndarray,
    ws: list[PartialContractionSet],
    k: int,
    block: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, list[PartialContractionSet]]:
    """Residual sketch for a sum; the counterpart of
    :func:`~ttround.rounding.generate_residual_sketch`.

    Missing columns are drawn once and contracted against every term, so
    all terms keep sharing their factors.
    """
    tsum = _as_sum(terms)
    used = q.shape[1]
    missing = used + block - ws[0].cols
    if missing > 0:
        fresh = GaussianFactorSet.draw(tsum.mode_sizes, k + 1, missing, rng)
        for t, w in zip(tsum.terms, ws):
            w.append(krp_partial_contractions_rl(t, fresh))
    stacked = np.vstack([w[k + 1][:, used : used + block] for w in ws])
    s = flops.matmul(z, stacked)
    if used:
        s = s - flops.matmul(q, flops.matmul(q.T, s))
    return s, ws


def _next_core(m: np.ndarray, cores: Sequence[np.ndarray], last: bool) -> np.ndarray:
    """Apply the column blocks of ``m`` to the matching term cores."""
    blocks = []
    offset = 0
    for c in cores:
        rl, n, rr = c.shape
        mi = m[:, offset : offset + rl]
        offset += rl
        prod = flops.matmul(mi, c.reshape(rl, n * rr, order="F")).reshape(m.shape[0], n, rr, order="F")
        blocks.append(prod)
    if last:
        return np.asfortranarray(sum(blocks[1:], blocks[0]))
    return np.asfortranarray(np.concatenate(blocks, axis=2))


def round_sum_adaptive_krp(
    terms,
    eps: float,
    f_inc: float = 0.05,
    seed: SeedLike = None,
    max_rank_cap: int | Sequence[int] | None = None,
    recompress: bool = False,
) -> TTTensor:
    """Round ``sum(terms)`` to relative accuracy ``eps`` (with high probability).

    The initial sketch width is the largest rank over all terms, and the
    initial block for mode ``k`` is the largest ``k``-th rank among the
    terms (capped by ``r_bar_k``).  The threshold uses the sketch estimate of
    the norm of the sum.  If that estimate is negligible against the term
    estimates, the rank-1 zero tensor is returned.
    """
    if not eps > 0:
        raise ValueError(f"tolerance must be positive, got {eps}")
    if not 0 < f_inc < 1:
        raise ValueError(f"f_inc must lie in (0, 1), got {f_inc}")
    tsum = _as_sum(terms)
    d = tsum.ndim
    if d < 2:
        return TTTensor([sum(t.cores[0] for t in tsum.terms)])
    rng = np.random.default_rng(seed)
    caps = _cap(max_rank_cap, d)
    width = max(max(t.ranks[1:-1]) for t in tsum.terms)
    factors = GaussianFactorSet.draw(tsum.mode_sizes, 2, width, rng)
    ws = sum_partial_contractions(tsum, factors)

    y = np.asfortranarray(np.concatenate([t.cores[0] for t in tsum.terms], axis=2))
    sketch = flops.matmul(vertical(y), stacked_contraction(ws, 2))
    nrm = residual_norm_estimate(sketch, width)
    term_est = max(
        residual_norm_estimate(flops.matmul(vertical(t.cores[0]), w[2]), width) for t, w in zip(tsum.terms, ws)
    )
    if nrm <= ZERO_GUARD * term_est:
        return zeros_tt(tsum.mode_sizes)
    tau = eps * nrm / math.sqrt(d - 1)

    out = []
    for k in range(1, d):
        n = y.shape[1]
        z = vertical(y)
        rbar = int(min(min(z.shape), caps[k - 1]))
        b_init = min(rbar, max(t.ranks[k] for t in tsum.terms))
        q = np.zeros((z.shape[0], 0))
        s, ws = residual_sketch_sum(tsum, z, q, ws, k, b_init, rng)
        q, _ = flops.qr(s)
        b_inc = max(1, math.ceil(rbar * f_inc))
        while q.shape[1] < rbar:
            b = min(b_inc, rbar - q.shape[1])
            s, ws = residual_sketch_sum(tsum, z, q, ws, k, b, rng)
            if residual_norm_estimate(s, b) <= tau:
                break
            q = np.hstack([q, _expand_basis(q, s)])
        out.append(from_vertical(q, n))
        m = flops.matmul(q.T, z)
        y = _next_core(m, [t.cores[k] for t in tsum.terms], last=(k == d - 1))
    out.append(y)
    result = TTTensor(out, copy=False)
    if recompress:
        result = compression_pass(result, tau)
    return result
