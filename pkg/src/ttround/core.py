"""Tensor-train representation and exact (non-truncating) operations.

A d-way tensor in TT format is a chain of 3-way cores ``X_k`` of shape
``(r_{k-1}, n_k, r_k)`` with ``r_0 = r_d = 1``.  Cores are stored as
Fortran-ordered numpy arrays, which makes both unfoldings of a core
zero-copy reshapes:

* vertical ``V(X)``, shape ``(r_{k-1} n_k, r_k)``, row ``i + r_{k-1} j``
* horizontal ``H(X)``, shape ``(r_{k-1}, n_k r_k)``, column ``j + n_k g``

Dense tensors are plain ``numpy`` arrays whose flattening in Fortran order
(first index fastest) matches every unfolding used here.  Entry indices at
the public boundary (:func:`tt_entry`) are 1-based; everything else uses
Python's 0-based sequences.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from . import flops
from .errors import (
    BoundaryRankNotOne,
    DenseTooLarge,
    EmptyCoreList,
    EmptyTermList,
    IndexOutOfRange,
    InvalidRankChain,
    ModeSizeMismatch,
    RankChainMismatch,
    TTError,
)

DENSE_LIMIT = 10**7

SeedLike = int | np.random.Generator | np.random.SeedSequence | None


def _freeze(core: np.ndarray, copy: bool) -> np.ndarray:
    arr = np.array(core, dtype=np.float64, order="F", copy=True if copy else None)
    arr.flags.writeable = False
    return arr


class TTTensor:
    """An immutable tensor in TT format.

    Parameters
    ----------
    cores : sequence of ndarray
        Cores of shape ``(r_{k-1}, n_k, r_k)``.  Two-dimensional arrays are
        not accepted; boundary cores must carry their unit rank explicitly.
    copy : bool
        Copy the core data (default).  Pass ``False`` only for freshly
        allocated arrays that nobody else references.
    """

    __slots__ = ("_cores",)

    def __init__(self, cores: Sequence[np.ndarray], copy: bool = True):
        cores = list(cores)
        if not cores:
            raise EmptyCoreList("a TT tensor needs at least one core")
        for k, c in enumerate(cores):
            if np.ndim(c) != 3:
                raise TTError(f"core {k + 1} must be 3-way, got shape {np.shape(c)}")
            if min(np.shape(c)) < 1:
                raise TTError(f"core {k + 1} has an empty dimension: {np.shape(c)}")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise BoundaryRankNotOne(
                f"boundary ranks must be 1, got r_0={cores[0].shape[0]}, "
                f"r_d={cores[-1].shape[2]}"
            )
        for k in range(len(cores) - 1):
            if cores[k].shape[2] != cores[k + 1].shape[0]:
                raise RankChainMismatch(
                    f"core {k + 1} has right rank {cores[k].shape[2]} but core "
                    f"{k + 2} has left rank {cores[k + 1].shape[0]}"
                )
        frozen = tuple(_freeze(c, copy) for c in cores)
        if not all(np.isfinite(c).all() for c in frozen):
            raise TTError("core entries must be finite")
        self._cores = frozen

    @property
    def cores(self) -> tuple[np.ndarray, ...]:
        return self._cores

    @property
    def ndim(self) -> int:
        return len(self._cores)

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self._cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        """Full rank chain ``(r_0, ..., r_d)``."""
        return (1,) + tuple(c.shape[2] for c in self._cores)

    @property
    def max_rank(self) -> int:
        return max(self.ranks)

    @property
    def size(self) -> int:
        """Number of stored parameters."""
        return sum(c.size for c in self._cores)

    def scaled(self, alpha: float) -> "TTTensor":
        """Return ``alpha * self`` (the first core absorbs the factor)."""
        cores = list(self._cores)
        cores[0] = alpha * cores[0]
        return TTTensor(cores, copy=False)

    def __neg__(self) -> "TTTensor":
        return self.scaled(-1.0)

    def __repr__(self) -> str:
        return f"TTTensor(mode_sizes={self.mode_sizes}, ranks={self.ranks})"


def build_tt(cores: Sequence[np.ndarray]) -> TTTensor:
    """Validate ``cores`` and wrap them in a :class:`TTTensor`."""
    return TTTensor(cores)


# -- unfoldings ---------------------------------------------------------------


def vertical(core: np.ndarray) -> np.ndarray:
    """``V(X)``: slices ``X(:, j, :)`` stacked vertically."""
    r0, n, r1 = core.shape
    return core.reshape(r0 * n, r1, order="F")


def horizontal(core: np.ndarray) -> np.ndarray:
    """``H(X)`` with ``H(X)[i, j + n*g] = X[i, j, g]``."""
    r0, n, r1 = core.shape
    return core.reshape(r0, n * r1, order="F")


def from_vertical(mat: np.ndarray, n: int) -> np.ndarray:
    rows, r1 = mat.shape
    return np.asfortranarray(mat).reshape(rows // n, n, r1, order="F")


def from_horizontal(mat: np.ndarray, n: int) -> np.ndarray:
    r0, cols = mat.shape
    return np.asfortranarray(mat).reshape(r0, n, cols // n, order="F")


def unfold_core(core: np.ndarray, direction: str = "vertical") -> np.ndarray:
    """Vertical or horizontal unfolding of a core (a view when possible)."""
    if direction in ("vertical", "V", "v"):
        return vertical(core)
    if direction in ("horizontal", "H", "h"):
        return horizontal(core)
    raise ValueError(f"unknown unfolding direction {direction!r}")


# -- evaluation ---------------------------------------------------------------


def tt_entry(tt: TTTensor, index: Sequence[int]) -> float:
    """Entry ``X(i_1, ..., i_d)`` for a 1-based multi-index."""
    if len(index) != tt.ndim:
        raise IndexOutOfRange(f"expected {tt.ndim} indices, got {len(index)}")
    row = np.ones((1, 1))
    for k, (i, c) in enumerate(zip(index, tt.cores)):
        if not 1 <= i <= c.shape[1]:
            raise IndexOutOfRange(f"index {i} out of range 1..{c.shape[1]} in mode {k + 1}")
        row = row @ c[:, i - 1, :]
    return float(row[0, 0])


def contract_to_dense(tt: TTTensor, max_entries: int | None = DENSE_LIMIT) -> np.ndarray:
    """Full array represented by ``tt``; guarded by ``max_entries``.

    Pass ``max_entries=None`` to disable the guard.
    """
    total = int(np.prod(tt.mode_sizes, dtype=np.int64))
    if max_entries is not None and total > max_entries:
        raise DenseTooLarge(f"{total} entries exceeds the limit of {max_entries}")
    mat = vertical(tt.cores[0])
    for c in tt.cores[1:]:
        mat = (mat @ horizontal(c)).reshape(-1, c.shape[2], order="F")
    return mat.reshape(tt.mode_sizes, order="F")


def tt_from_dense(arr: np.ndarray, tol: float = 0.0) -> TTTensor:
    """TT-SVD of a dense array (test helper; relative tolerance ``tol``)."""
    shape = arr.shape
    d = len(shape)
    delta = tol * np.linalg.norm(arr) / np.sqrt(max(d - 1, 1))
    cores = []
    rank = 1
    rest = np.asfortranarray(arr).reshape(shape[0], -1, order="F")
    for k in range(d - 1):
        rest = rest.reshape(rank * shape[k], -1, order="F")
        u, s, vt = np.linalg.svd(rest, full_matrices=False)
        tail = np.sqrt(np.cumsum((s**2)[::-1]))[::-1]
        keep = max(1, int(np.sum(tail > delta)))
        cores.append(from_vertical(u[:, :keep], shape[k]))
        rest = s[:keep, None] * vt[:keep]
        rank = keep
    cores.append(rest.reshape(rank, shape[-1], 1, order="F"))
    return TTTensor(cores, copy=False)


# -- arithmetic ---------------------------------------------------------------


def formal_sum(terms: Sequence[TTTensor], coefficients: Sequence[float] | None = None) -> TTTensor:
    """Exact TT representation of ``sum_i c_i X_i`` with summed ranks.

    First cores are concatenated along the right rank, last cores along the
    left rank and middle cores are block diagonal.  Coefficients, if given,
    scale the first core of each term.
    """
    terms = list(terms)
    if not terms:
        raise EmptyTermList("formal_sum needs at least one term")
    modes = terms[0].mode_sizes
    for t in terms[1:]:
        if t.mode_sizes != modes:
            raise ModeSizeMismatch(f"mode sizes {t.mode_sizes} != {modes}")
    if coefficients is None:
        coefficients = [1.0] * len(terms)
    if len(terms) == 1:
        return terms[0].scaled(coefficients[0]) if coefficients[0] != 1.0 else TTTensor(terms[0].cores)
    d = len(modes)
    if d == 1:
        core = sum(c * t.cores[0] for c, t in zip(coefficients, terms))
        return TTTensor([core], copy=False)
    cores = [np.concatenate([c * t.cores[0] for c, t in zip(coefficients, terms)], axis=2)]
    for k in range(1, d - 1):
        rl = sum(t.cores[k].shape[0] for t in terms)
        rr = sum(t.cores[k].shape[2] for t in terms)
        block = np.zeros((rl, modes[k], rr), order="F")
        i0 = j0 = 0
        for t in terms:
            a, _, b = t.cores[k].shape
            block[i0 : i0 + a, :, j0 : j0 + b] = t.cores[k]
            i0 += a
            j0 += b
        cores.append(block)
    cores.append(np.concatenate([t.cores[-1] for t in terms], axis=0))
    return TTTensor(cores, copy=False)


def inner(a: TTTensor, b: TTTensor) -> float:
    """Exact inner product ``<A, B>`` by a left-to-right contraction."""
    if a.mode_sizes != b.mode_sizes:
        raise ModeSizeMismatch(f"mode sizes {a.mode_sizes} != {b.mode_sizes}")
    w = np.ones((1, 1))
    for ca, cb in zip(a.cores, b.cores):
        # w: (ra, rb) -> (ra', rb')
        t = flops.matmul(w.T, horizontal(ca))  # (rb, n*ra')
        t = from_horizontal(t, ca.shape[1])  # (rb, n, ra')
        w = flops.matmul(vertical(t).T, vertical(cb))  # (ra', rb')
    return float(w[0, 0])


def norm_exact(tt: TTTensor) -> float:
    """``||X||`` via right-to-left orthogonalization (norm ends up in core 1)."""
    from .orthogonalize import orthogonalize

    y = orthogonalize(tt, "rl")
    return float(np.linalg.norm(y.cores[0]))


def zeros_tt(mode_sizes: Sequence[int]) -> TTTensor:
    """The zero tensor at rank one."""
    return TTTensor([np.zeros((1, n, 1), order="F") for n in mode_sizes], copy=False)


# -- random construction ------------------------------------------------------


def normalize_rank_chain(ranks: Sequence[int], d: int) -> tuple[int, ...]:
    """Accept either ``(r_0..r_d)`` or the inner ranks ``(r_1..r_{d-1})``."""
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) == d - 1:
        ranks = (1,) + ranks + (1,)
    if len(ranks) != d + 1:
        raise InvalidRankChain(f"expected {d + 1} ranks (or {d - 1} inner ranks), got {len(ranks)}")
    if ranks[0] != 1 or ranks[-1] != 1:
        raise InvalidRankChain("boundary ranks must be 1")
    if min(ranks) < 1:
        raise InvalidRankChain("ranks must be positive")
    return ranks


def random_gaussian_tt(mode_sizes: Sequence[int], ranks: Sequence[int], seed: SeedLike = None) -> TTTensor:
    """Random TT with i.i.d. ``N(0, 1/(r_{k-1} n_k r_k))`` core entries."""
    mode_sizes = tuple(int(n) for n in mode_sizes)
    if not mode_sizes or min(mode_sizes) < 1:
        raise InvalidRankChain("mode sizes must be positive")
    ranks = normalize_rank_chain(ranks, len(mode_sizes))
    rng = np.random.default_rng(seed)
    cores = []
    for k, n in enumerate(mode_sizes):
        shape = (ranks[k], n, ranks[k + 1])
        scale = 1.0 / np.sqrt(ranks[k] * n * ranks[k + 1])
        cores.append(np.asfortranarray(scale * rng.standard_normal(shape)))
    return TTTensor(cores, copy=False)


def check_same_modes(tensors: Iterable[TTTensor]) -> tuple[int, ...]:
    tensors = list(tensors)
    modes = tensors[0].mode_sizes
    for t in tensors[1:]:
        if t.mode_sizes != modes:
            raise ModeSizeMismatch(f"mode sizes {t.mode_sizes} != {modes}")
    return modes
