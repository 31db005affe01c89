"""Gaussian sketches and right-to-left partial contractions.

For Gaussian factors ``Omega_k`` (``n_k x c``) the KRP partial contractions are

    W_d = H(X_d) Omega_d
    W_k = H(X_k) [W_{k+1} (.) Omega_k]          (column-wise Khatri-Rao)

which equals ``H(X_{k:d}) (Omega_d (.) ... (.) Omega_k)`` without ever forming
the Khatri-Rao matrix.  The TT-structured variant contracts against a random
TT tensor instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import flops
from .core import SeedLike, TTTensor, check_same_modes, from_vertical, horizontal, vertical
from .errors import ModeSizeMismatch

# Column block width for the MTTKRP kernel; bounds the temporary to
# r_{k-1} * n_k * KRP_BLOCK entries.
KRP_BLOCK = 64


def gaussian_matrix(rows: int, cols: int, seed: SeedLike = None) -> np.ndarray:
    """``rows x cols`` matrix of i.i.d. standard normal entries."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    return np.random.default_rng(seed).standard_normal((rows, cols))


@dataclass
class GaussianFactorSet:
    """Factors ``Omega_t..Omega_d`` sharing a column count (1-based modes)."""

    factors: dict[int, np.ndarray]
    start: int

    @classmethod
    def draw(cls, mode_sizes: Sequence[int], start: int, cols: int, rng: np.random.Generator) -> "GaussianFactorSet":
        d = len(mode_sizes)
        factors = {k: rng.standard_normal((mode_sizes[k - 1], cols)) for k in range(start, d + 1)}
        return cls(factors, start)

    @property
    def cols(self) -> int:
        return next(iter(self.factors.values())).shape[1]

    def __getitem__(self, k: int) -> np.ndarray:
        return self.factors[k]


@dataclass
class PartialContractionSet:
    """Matrices ``W_t..W_d`` (1-based); ``W_k`` has ``r_{k-1}`` rows."""

    mats: dict[int, np.ndarray] = field(default_factory=dict)
    start: int = 2

    @property
    def cols(self) -> int:
        return next(iter(self.mats.values())).shape[1] if self.mats else 0

    def __getitem__(self, k: int) -> np.ndarray:
        return self.mats[k]

    def append(self, new: "PartialContractionSet") -> None:
        """Append the columns of ``new`` to every matrix it covers.

        Matrices below ``new.start`` are dropped so that all remaining
        matrices keep a common column count.
        """
        for k in list(self.mats):
            if k < new.start:
                del self.mats[k]
        for k, w in new.mats.items():
            self.mats[k] = np.hstack([self.mats[k], w]) if k in self.mats else w
        self.start = max(self.start, new.start)


def _factor_list(tt: TTTensor, factors, start: int | None) -> tuple[dict[int, np.ndarray], int]:
    d = tt.ndim
    if isinstance(factors, GaussianFactorSet):
        mats, start = dict(factors.factors), factors.start
    else:
        factors = list(factors)
        if start is None:
            start = d - len(factors) + 1
        mats = {start + i: f for i, f in enumerate(factors)}
    if start < 2 or set(mats) != set(range(start, d + 1)):
        raise ValueError(f"need factors for modes {start}..{d} with start >= 2")
    cols = {m.shape[1] for m in mats.values()}
    if len(cols) != 1:
        raise ValueError("all factors must have the same number of columns")
    for k, m in mats.items():
        if m.shape[0] != tt.mode_sizes[k - 1]:
            raise ModeSizeMismatch(f"factor {k} has {m.shape[0]} rows, mode size is {tt.mode_sizes[k - 1]}")
    return mats, start


def mttkrp(core: np.ndarray, w_next: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """``H(core) [w_next (.) omega]`` evaluated blockwise over columns."""
    rl, n, rr = core.shape
    c = w_next.shape[1]
    out = np.empty((rl, c))
    v = vertical(core)
    for j0 in range(0, c, KRP_BLOCK):
        cols = slice(j0, min(j0 + KRP_BLOCK, c))
        t = flops.matmul(v, w_next[:, cols]).reshape(rl, n, -1, order="F")
        out[:, cols] = np.einsum("anj,nj->aj", t, omega[:, cols])
        flops.add_flops("mttkrp", 2 * rl * n * t.shape[2])
    return out


def krp_partial_contractions_rl(
    tt: TTTensor,
    factors: GaussianFactorSet | Sequence[np.ndarray],
    start: int | None = None,
) -> PartialContractionSet:
    """KRP partial contractions ``W_t..W_d`` of ``tt``.

    ``factors`` is a :class:`GaussianFactorSet` or the list
    ``[Omega_t, ..., Omega_d]`` (``start`` inferred from its length).
    """
    mats, start = _factor_list(tt, factors, start)
    d = tt.ndim
    cores = tt.cores
    w = {d: flops.matmul(horizontal(cores[d - 1]), mats[d])}
    for k in range(d - 1, start - 1, -1):
        w[k] = mttkrp(cores[k - 1], w[k + 1], mats[k])
    return PartialContractionSet(dict(sorted(w.items())), start)


def tt_partial_contractions_rl(tt: TTTensor, sketch: TTTensor) -> dict[int, np.ndarray]:
    """``W_k = H(X_{k+1:d}) H(R_{k+1:d})^T`` for ``k = 1..d-1`` (1-based keys)."""
    check_same_modes([tt, sketch])
    d = tt.ndim
    xc, rc = tt.cores, sketch.cores
    w = {d - 1: flops.matmul(horizontal(xc[d - 1]), horizontal(rc[d - 1]).T)}
    for k in range(d - 1, 1, -1):
        z = from_vertical(flops.matmul(vertical(xc[k - 1]), w[k]), xc[k - 1].shape[1])
        w[k - 1] = flops.matmul(horizontal(z), horizontal(rc[k - 1]).T)
    return dict(sorted(w.items()))


def estimate_norm_krp(tt: TTTensor, width: int, seed: SeedLike = None) -> float:
    """Randomized norm estimate ``||V(X_1) W_2||_F / sqrt(width)``.

    Its square is an unbiased estimator of ``||X||^2``.
    """
    if width < 1:
        raise ValueError("width must be positive")
    if tt.ndim < 2:
        return float(np.linalg.norm(tt.cores[0]))
    rng = np.random.default_rng(seed)
    factors = GaussianFactorSet.draw(tt.mode_sizes, 2, width, rng)
    w = krp_partial_contractions_rl(tt, factors)
    return float(np.linalg.norm(flops.matmul(vertical(tt.cores[0]), w[2]))) / math.sqrt(width)


def residual_norm_estimate(sketch: np.ndarray, block: int) -> float:
    """``||S||_F / sqrt(b)`` for a residual sketch with ``b`` columns."""
    if block < 1:
        raise ValueError("block size must be positive")
    return float(np.linalg.norm(sketch)) / math.sqrt(block)
