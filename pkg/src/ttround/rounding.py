"""Randomized TT-rounding of a single TT tensor.

Randomize-then-orthogonalize with Khatri-Rao sketches (fixed rank and
adaptive with residual sketching), the reverse compression pass, and the two
baselines: randomize-then-orthogonalize with a Gaussian TT sketch and
orthogonalize-then-randomize (fixed rank or adaptive with exact residuals).
All randomized routines output a tensor whose cores ``1..d-1`` are
left-orthonormal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import flops
from .core import (
    SeedLike,
    TTTensor,
    from_horizontal,
    from_vertical,
    horizontal,
    random_gaussian_tt,
    vertical,
)
from .errors import NotLeftOrthogonal
from .orthogonalize import TruncationRule, inner_ranks, orthogonalize, truncated_svd
from .sketch import (
    GaussianFactorSet,
    PartialContractionSet,
    krp_partial_contractions_rl,
    residual_norm_estimate,
    tt_partial_contractions_rl,
)

ORTH_CHECK = 1e-8


@dataclass
class AdaptiveConfig:
    """Parameters of the adaptive KRP rounding.

    ``f_init``/``f_inc`` are the fractions of ``r_bar_k`` (the smaller
    dimension of ``V(Y_k)``) used for the initial and incremental block sizes.
    If ``known_norm`` is ``None`` the input norm is estimated from the initial
    sketch.  ``max_rank_cap`` optionally bounds every output rank (scalar) or
    each rank separately (sequence of ``d - 1`` values).
    """

    eps: float
    f_init: float = 0.1
    f_inc: float = 0.05
    seed: SeedLike = None
    known_norm: float | None = None
    max_rank_cap: int | Sequence[int] | None = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"tolerance must be positive, got {self.eps}")
        for name in ("f_init", "f_inc"):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")


def _cap(ranks, d: int) -> list[float]:
    if ranks is None:
        return [math.inf] * (d - 1)
    return [float(r) for r in inner_ranks(ranks, d)]


def _sketch_sweep(tt: TTTensor, sketches: dict[int, np.ndarray], targets: Sequence[int]) -> TTTensor:
    """Orthogonalization sweep shared by the fixed-rank randomize-first methods.

    ``sketches[k]`` (1-based) right-multiplies ``V(Y_k)``.
    """
    cores = list(tt.cores)
    d = len(cores)
    y = cores[0]
    out = []
    for k in range(1, d):
        z = vertical(y)
        keep = min(targets[k - 1], *z.shape)
        q, _ = flops.qr(flops.matmul(z, sketches[k][:, :keep]))
        m = flops.matmul(q.T, z)
        out.append(from_vertical(q, y.shape[1]))
        nxt = cores[k]
        y = from_horizontal(flops.matmul(m, horizontal(nxt)), nxt.shape[1])
    out.append(y)
    return TTTensor(out, copy=False)


def round_fixed_krp(tt: TTTensor, ranks: int | Sequence[int], seed: SeedLike = None) -> TTTensor:
    """Fixed-rank randomize-then-orthogonalize rounding with KRP sketches.

    Draws ``Omega_2..Omega_d`` with ``max(ranks)`` columns, forms the KRP
    partial contractions and sketches ``V(Y_k) W_{k+1}(:, 1:l_k)`` mode by
    mode.  Output ranks are ``min(l_k, r_bar_k)``.
    """
    d = tt.ndim
    targets = inner_ranks(ranks, d)
    rng = np.random.default_rng(seed)
    factors = GaussianFactorSet.draw(tt.mode_sizes, 2, max(targets), rng)
    w = krp_partial_contractions_rl(tt, factors)
    return _sketch_sweep(tt, {k: w[k + 1] for k in range(1, d)}, targets)


def round_rand_orth_tt(tt: TTTensor, ranks: int | Sequence[int], seed: SeedLike = None) -> TTTensor:
    """Fixed-rank randomize-then-orthogonalize with a Gaussian TT sketch."""
    d = tt.ndim
    targets = inner_ranks(ranks, d)
    sketch = random_gaussian_tt(tt.mode_sizes, targets, seed)
    w = tt_partial_contractions_rl(tt, sketch)
    return _sketch_sweep(tt, w, targets)


def generate_residual_sketch(
    tt: TTTensor,
    z: np.ndarray,
    q: np.ndarray,
    w: PartialContractionSet,
    k: int,
    block: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, PartialContractionSet]:
    """Residual sketch of ``z`` against the basis ``q`` for mode ``k`` (1-based).

    If ``W_{k+1}`` has fewer than ``cols(q) + block`` columns, fresh factors
    ``Omega_{k+1}..Omega_d`` are drawn and their contractions appended to
    ``w`` (in place).  Returns ``(S, w)`` with
    ``S = (I - q q^T) z W_{k+1}(:, cols(q)+1 : cols(q)+block)``.
    """
    used = q.shape[1]
    missing = used + block - w.cols
    if missing > 0:
        fresh = GaussianFactorSet.draw(tt.mode_sizes, k + 1, missing, rng)
        w.append(krp_partial_contractions_rl(tt, fresh))
    s = flops.matmul(z, w[k + 1][:, used : used + block])
    if used:
        s = s - flops.matmul(q, flops.matmul(q.T, s))
    return s, w


def _expand_basis(q: np.ndarray, s: np.ndarray) -> np.ndarray:
    """New orthonormal directions from a residual sketch, re-orthogonalized
    against ``q``."""
    qn, _ = flops.qr(s)
    if q.shape[1]:
        qn, _ = flops.qr(qn - flops.matmul(q, flops.matmul(q.T, qn)))
    return qn


def round_adaptive_krp(
    tt: TTTensor,
    cfg: AdaptiveConfig,
    recompress: bool = False,
    trace: list | None = None,
) -> TTTensor:
    """Adaptive-rank randomize-then-orthogonalize rounding with KRP sketches.

    Aims at ``||X - Y|| <= eps ||X||`` with high probability using the
    per-mode threshold ``tau = eps * ||X|| / sqrt(d - 1)`` and the residual
    estimate ``||S||_F / sqrt(b)`` as stopping test.  With ``recompress`` a
    :func:`compression_pass` at the same ``tau`` trims excess ranks.

    ``trace``, if given, receives one dict per mode describing the basis
    growth (used by diagnostics and tests).
    """
    d = tt.ndim
    if d < 2:
        return TTTensor(tt.cores)
    rng = np.random.default_rng(cfg.seed)
    caps = _cap(cfg.max_rank_cap, d)
    width = max(1, math.ceil(max(tt.ranks[1:-1]) * cfg.f_init))
    w = krp_partial_contractions_rl(tt, GaussianFactorSet.draw(tt.mode_sizes, 2, width, rng))
    if cfg.known_norm is None:
        nrmx = float(np.linalg.norm(flops.matmul(vertical(tt.cores[0]), w[2]))) / math.sqrt(width)
    else:
        nrmx = float(cfg.known_norm)
    tau = cfg.eps * nrmx / math.sqrt(d - 1)

    cores = tt.cores
    y = cores[0]
    out = []
    for k in range(1, d):
        n = y.shape[1]
        z = vertical(y)
        rbar = int(min(min(z.shape), caps[k - 1]))
        b_init = min(rbar, math.ceil(rbar * cfg.f_init))
        q = np.zeros((z.shape[0], 0))
        s, w = generate_residual_sketch(tt, z, q, w, k, b_init, rng)
        q, _ = flops.qr(s)
        h_next = flops.matmul(flops.matmul(q.T, z), horizontal(cores[k]))
        b_inc = max(1, math.ceil(rbar * cfg.f_inc))
        info = {"mode": k, "tau": tau, "rbar": rbar, "cols": [q.shape[1]], "estimates": [], "exit": "cap"}
        while q.shape[1] < rbar:
            b = min(b_inc, rbar - q.shape[1])
            s, w = generate_residual_sketch(tt, z, q, w, k, b, rng)
            estimate = residual_norm_estimate(s, b)
            info["estimates"].append(estimate)
            if estimate <= tau:
                info["exit"] = "estimate"
                break
            qn = _expand_basis(q, s)
            q = np.hstack([q, qn])
            h_next = np.vstack([h_next, flops.matmul(flops.matmul(qn.T, z), horizontal(cores[k]))])
            info["cols"].append(q.shape[1])
        if trace is not None:
            info["basis"] = q
            info["z"] = np.array(z)
            trace.append(info)
        out.append(from_vertical(q, n))
        y = from_horizontal(h_next, cores[k].shape[1])
    out.append(y)
    result = TTTensor(out, copy=False)
    if recompress:
        result = compression_pass(result, tau)
    return result


def compression_pass(tt: TTTensor, tau: float, check: bool = True) -> TTTensor:
    """Right-to-left truncated-SVD sweep over a left-orthogonal tensor.

    Each mode discards at most ``tau`` (Frobenius), so the added error is at
    most ``sqrt(d - 1) * tau``.  The output is right-orthogonal except for
    its first core.
    """
    cores = list(tt.cores)
    d = len(cores)
    if check:
        for k, c in enumerate(cores[:-1]):
            v = vertical(c)
            defect = float(np.linalg.norm(v.T @ v - np.eye(v.shape[1])))
            if defect >= ORTH_CHECK:
                raise NotLeftOrthogonal(f"core {k + 1} deviates from orthonormality by {defect:.3e}")
    rule = TruncationRule.tolerance(tau)
    for k in range(d - 1, 0, -1):
        u, s, vt, _ = truncated_svd(horizontal(cores[k]), rule)
        cores[k] = from_horizontal(vt, cores[k].shape[1])
        prev = cores[k - 1]
        cores[k - 1] = from_vertical(flops.matmul(vertical(prev), u * s), prev.shape[1])
    return TTTensor(cores, copy=False)


def round_orth_rand(
    tt: TTTensor,
    ranks: int | Sequence[int] | None = None,
    eps: float | None = None,
    seed: SeedLike = None,
    block_fraction: float = 0.05,
) -> TTTensor:
    """Orthogonalize-then-randomize rounding.

    After right-to-left orthogonalization each ``V(Y_k)`` is compressed by a
    randomized range finder: to the target ``ranks``, or adaptively until the
    exact residual ``||Z - Q Q^T Z||_F`` drops to ``eps ||X|| / sqrt(d-1)``
    (blocks of ``ceil(block_fraction * r_bar_k)`` columns).
    """
    if (eps is None) == (ranks is None):
        raise ValueError("give exactly one of eps or ranks")
    d = tt.ndim
    targets = inner_ranks(ranks, d) if ranks is not None else None
    rng = np.random.default_rng(seed)
    cores = list(orthogonalize(tt, "rl").cores)
    tau = None
    if eps is not None:
        tau = eps * float(np.linalg.norm(cores[0])) / math.sqrt(d - 1)
    for k in range(d - 1):
        n = cores[k].shape[1]
        z = vertical(cores[k])
        rbar = min(z.shape)
        if targets is not None:
            omega = rng.standard_normal((z.shape[1], min(targets[k], rbar)))
            q, _ = flops.qr(flops.matmul(z, omega))
        else:
            q = _adaptive_range_finder(z, tau, max(1, math.ceil(block_fraction * rbar)), rng)
        m = flops.matmul(q.T, z)
        cores[k] = from_vertical(q, n)
        nxt = cores[k + 1]
        cores[k + 1] = from_horizontal(flops.matmul(m, horizontal(nxt)), nxt.shape[1])
    return TTTensor(cores, copy=False)


def _adaptive_range_finder(z: np.ndarray, tau: float, block: int, rng: np.random.Generator) -> np.ndarray:
    """Blocked adaptive range finder with exact residual norms."""
    rbar = min(z.shape)
    q = np.zeros((z.shape[0], 0))
    residual = z
    while q.shape[1] < rbar and float(np.linalg.norm(residual)) > tau:
        b = min(block, rbar - q.shape[1])
        s = flops.matmul(residual, rng.standard_normal((z.shape[1], b)))
        qn = _expand_basis(q, s)
        q = np.hstack([q, qn])
        residual = z - flops.matmul(q, flops.matmul(q.T, z))
    if q.shape[1] == 0:
        # tolerance met by the empty basis; keep one direction for rank >= 1
        q, _ = flops.qr(flops.matmul(z, rng.standard_normal((z.shape[1], 1))))
    return q
