"""Orthogonalization sweeps, truncated SVD and deterministic TT-rounding."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import flops
from .core import TTTensor, from_horizontal, from_vertical, horizontal, vertical
from .errors import InvalidRanks


@dataclass(frozen=True)
class TruncationRule:
    """Either an absolute Frobenius threshold ``tau`` or a rank cap.

    Build with :meth:`tolerance` or :meth:`rank`.
    """

    tau: float | None = None
    rank: int | None = None

    def __post_init__(self):
        if (self.tau is None) == (self.rank is None):
            raise ValueError("exactly one of tau and rank must be set")
        if self.tau is not None and not self.tau >= 0:
            raise ValueError(f"tau must be non-negative, got {self.tau}")
        if self.rank is not None and self.rank < 1:
            raise ValueError(f"rank must be positive, got {self.rank}")

    @classmethod
    def tolerance(cls, tau: float) -> "TruncationRule":
        return cls(tau=float(tau))

    @classmethod
    def fixed_rank(cls, rank: int) -> "TruncationRule":
        return cls(rank=int(rank))


def _direction(direction: str) -> str:
    key = direction.lower().replace("-", "").replace("_", "")
    if key in ("rl", "righttoleft", "right"):
        return "rl"
    if key in ("lr", "lefttoright", "left"):
        return "lr"
    raise ValueError(f"unknown sweep direction {direction!r}")


def orthogonalize(tt: TTTensor, direction: str = "rl") -> TTTensor:
    """Right-to-left (``"rl"``) or left-to-right (``"lr"``) orthogonalization.

    ``"rl"`` makes ``H(Y_k)`` row-orthonormal for ``k = 2..d``, so the whole
    norm sits in the first core.  ``"lr"`` makes ``V(Y_k)`` column-orthonormal
    for ``k = 1..d-1``.  Thin QR may lower a rank when an unfolding is wide.
    """
    cores = list(tt.cores)
    d = len(cores)
    if _direction(direction) == "rl":
        for k in range(d - 1, 0, -1):
            n = cores[k].shape[1]
            q, r = flops.qr(horizontal(cores[k]).T)
            cores[k] = from_horizontal(q.T, n)
            cores[k - 1] = from_vertical(flops.matmul(vertical(cores[k - 1]), r.T), cores[k - 1].shape[1])
    else:
        for k in range(d - 1):
            n = cores[k].shape[1]
            q, r = flops.qr(vertical(cores[k]))
            cores[k] = from_vertical(q, n)
            cores[k + 1] = from_horizontal(flops.matmul(r, horizontal(cores[k + 1])), cores[k + 1].shape[1])
    return TTTensor(cores, copy=False)


def truncated_svd(
    mat: np.ndarray, rule: TruncationRule
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Truncated thin SVD ``mat ~ U diag(s) Vt``; returns ``(U, s, Vt, rank)``.

    With a tolerance ``tau`` the kept rank is the smallest ``s`` whose
    discarded tail satisfies ``sqrt(sum_{j>s} sigma_j^2) <= tau``; with a rank
    rule it is ``min(rank, #sigma)``.  At least one triplet is always kept.
    """
    u, s, vt = flops.svd(np.asarray(mat, dtype=np.float64))
    if rule.rank is not None:
        keep = min(rule.rank, s.size)
    else:
        # tail[j] = sqrt(sum_{i>=j} s_i^2): error of keeping j triplets
        tail = np.sqrt(np.cumsum((s * s)[::-1]))[::-1]
        tail = np.append(tail, 0.0)
        keep = int(np.argmax(tail <= rule.tau))
    keep = max(1, keep)
    return u[:, :keep], s[:keep], vt[:keep], keep


def inner_ranks(ranks: int | Sequence[int], d: int) -> list[int]:
    """Expand a scalar rank or validate a list of ``d - 1`` target ranks."""
    if np.isscalar(ranks):
        ranks = [int(ranks)] * (d - 1)
    ranks = [int(r) for r in ranks]
    if len(ranks) != d - 1:
        raise InvalidRanks(f"expected {d - 1} target ranks for a {d}-way tensor, got {len(ranks)}")
    if min(ranks, default=1) < 1:
        raise InvalidRanks(f"target ranks must be positive, got {ranks}")
    return ranks


def round_deterministic(
    tt: TTTensor,
    eps: float | None = None,
    ranks: int | Sequence[int] | None = None,
) -> TTTensor:
    """Classical TT-rounding: RL orthogonalization then a truncated-SVD sweep.

    Exactly one of ``eps`` (relative accuracy, guaranteed ``||X - Y|| <=
    eps ||X||``) or ``ranks`` (target ranks, capped by the unfolding shapes)
    must be given.  The result is left-orthogonal except for its last core.
    """
    if (eps is None) == (ranks is None):
        raise ValueError("give exactly one of eps or ranks")
    d = tt.ndim
    if eps is not None and eps < 0:
        raise ValueError("eps must be non-negative")
    targets = inner_ranks(ranks, d) if ranks is not None else None
    y = orthogonalize(tt, "rl")
    cores = list(y.cores)
    if d == 1:
        return y
    tau = float(np.linalg.norm(cores[0])) / math.sqrt(d - 1) * eps if eps is not None else None
    for k in range(d - 1):
        n = cores[k].shape[1]
        q, r = flops.qr(vertical(cores[k]))
        rule = TruncationRule.tolerance(tau) if tau is not None else TruncationRule.fixed_rank(targets[k])
        u, s, vt, _ = truncated_svd(r, rule)
        cores[k] = from_vertical(flops.matmul(q, u), n)
        nxt = cores[k + 1]
        cores[k + 1] = from_horizontal(flops.matmul(s[:, None] * vt, horizontal(nxt)), nxt.shape[1])
    return TTTensor(cores, copy=False)


def orthogonality_defect(tt: TTTensor, side: str = "left") -> float:
    """Largest ``||V^T V - I||_F`` (left) or ``||H H^T - I||_F`` (right) over the
    cores that should be orthonormal."""
    worst = 0.0
    if side == "left":
        for c in tt.cores[:-1]:
            v = vertical(c)
            worst = max(worst, float(np.linalg.norm(v.T @ v - np.eye(v.shape[1]))))
    else:
        for c in tt.cores[1:]:
            h = horizontal(c)
            worst = max(worst, float(np.linalg.norm(h @ h.T - np.eye(h.shape[0]))))
    return worst
