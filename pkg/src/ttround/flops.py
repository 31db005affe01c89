"""Instrumented dense kernels with floating-point operation counting.

Every GEMM, QR and SVD issued by the rounding algorithms goes through the
wrappers below so that cost claims can be checked from operation counts
rather than wall-clock time.  Counting is off unless a :func:`count_flops`
context is active.

The counts are the textbook leading-order formulas:

* GEMM ``(m x k) @ (k x n)``: ``2 m k n``
* thin Householder QR of ``m x n`` (R and explicit thin Q):
  ``2 (2 M K^2 - 2 K^3 / 3)`` with ``M = max(m, n)``, ``K = min(m, n)``
* thin SVD of ``m x n``: ``4 M K^2 + 22 K^3``
"""

from __future__ import annotations

from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import SVDFailure

_active: list["FlopCounter"] = []


@dataclass
class FlopCounter:
    """Accumulates flop counts, split by kernel kind."""

    by_kind: Counter = field(default_factory=Counter)

    @property
    def total(self) -> int:
        return int(sum(self.by_kind.values()))

    def add(self, kind: str, count: float) -> None:
        self.by_kind[kind] += int(count)


@contextmanager
def count_flops() -> Iterator[FlopCounter]:
    """Count flops of all instrumented kernels issued inside the block.

    Counters nest: an inner block's work is also charged to outer blocks.
    """
    counter = FlopCounter()
    _active.append(counter)
    try:
        yield counter
    finally:
        _active.remove(counter)


def add_flops(kind: str, count: float) -> None:
    for counter in _active:
        counter.add(kind, count)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if _active:
        add_flops("gemm", 2 * a.shape[0] * a.shape[1] * b.shape[-1])
    return a @ b


def qr(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Thin (reduced) QR factorization."""
    if _active:
        big, small = max(a.shape), min(a.shape)
        add_flops("qr", 2 * (2 * big * small**2 - 2 * small**3 / 3))
    return np.linalg.qr(a, mode="reduced")


def svd(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD; raises :class:`SVDFailure` when LAPACK does not converge."""
    if _active:
        big, small = max(a.shape), min(a.shape)
        add_flops("svd", 4 * big * small**2 + 22 * small**3)
    try:
        return np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        # gesdd occasionally fails where the slower gesvd driver succeeds
        try:
            import scipy.linalg

            return scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")
        except (np.linalg.LinAlgError, ValueError):
            raise SVDFailure(str(exc)) from exc
