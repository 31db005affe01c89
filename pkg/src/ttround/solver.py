"""TT-GMRES for Kronecker-sum operators and the parametric "cookie" problem.

The operator is ``A = sum_i A_{i,1} kron ... kron A_{i,d}`` acting on TT tensors
by mode products, so applying it to ``x`` yields a sum of ``s`` TT tensors
with the ranks of ``x``.  GMRES runs without restart, with modified
Gram-Schmidt, and rounds after every operator application and every linear
combination with one of three strategies.
"""

from __future__ import annotations

import csv
import enum
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import SeedLike, TTTensor, check_same_modes, formal_sum, inner, norm_exact
from .errors import Breakdown, InvalidGrid, ModeSizeMismatch
from .orthogonalize import round_deterministic
from .rounding import compression_pass, round_rand_orth_tt
from .sumround import TTSum, round_sum_adaptive_krp


class RoundingStrategy(str, enum.Enum):
    DETERMINISTIC = "deterministic"
    RAND_ORTH_TT = "rand-orth-tt"
    ADAPTIVE_KRP_SUM = "adaptive-krp-sum"


class KroneckerSumOperator:
    """``sum_i A_{i,1} kron ... kron A_{i,d}``; ``None`` marks an identity factor.

    ``mode_sizes`` is required only if some mode has identity factors in
    every term.
    """

    def __init__(self, terms: Sequence[Sequence[np.ndarray | None]], mode_sizes: Sequence[int] | None = None):
        terms = [list(t) for t in terms]
        if not terms:
            raise ValueError("operator needs at least one term")
        d = len(terms[0])
        if any(len(t) != d for t in terms):
            raise ModeSizeMismatch("all operator terms must have the same number of factors")
        sizes: list[int | None] = [None] * d if mode_sizes is None else [int(n) for n in mode_sizes]
        if len(sizes) != d:
            raise ModeSizeMismatch(f"expected {d} mode sizes, got {len(sizes)}")
        for t in terms:
            for k, a in enumerate(t):
                if a is None:
                    continue
                a = np.asarray(a, dtype=np.float64)
                t[k] = a
                if a.ndim != 2 or a.shape[0] != a.shape[1]:
                    raise ModeSizeMismatch(f"factor for mode {k + 1} must be square, got {a.shape}")
                if sizes[k] is None:
                    sizes[k] = a.shape[0]
                elif sizes[k] != a.shape[0]:
                    raise ModeSizeMismatch(f"mode {k + 1}: factor of size {a.shape[0]}, expected {sizes[k]}")
        if any(n is None for n in sizes):
            raise ModeSizeMismatch("mode sizes cannot be inferred from identity-only modes")
        self.terms = terms
        self.mode_sizes = tuple(sizes)

    @property
    def ndim(self) -> int:
        return len(self.mode_sizes)

    def __len__(self) -> int:
        return len(self.terms)

    def factor(self, i: int, k: int) -> np.ndarray:
        """Dense ``A_{i,k}`` (0-based indices), identity included."""
        a = self.terms[i][k]
        return np.eye(self.mode_sizes[k]) if a is None else a

    def to_dense(self) -> np.ndarray:
        """Explicit matrix acting on column-major vectorizations (test oracle)."""
        total = None
        for i in range(len(self.terms)):
            m = np.ones((1, 1))
            for k in range(self.ndim):
                m = np.kron(self.factor(i, k), m)
            total = m if total is None else total + m
        return total


def _mode_product(core: np.ndarray, a: np.ndarray | None) -> np.ndarray:
    if a is None:
        return core
    return np.asfortranarray(np.einsum("ij,ajb->aib", a, core))


def apply_operator(op: KroneckerSumOperator, x: TTTensor) -> TTSum:
    """The terms ``(A_{i,1} kron ... kron A_{i,d}) x`` as a rank-preserving TT sum."""
    if tuple(x.mode_sizes) != op.mode_sizes:
        raise ModeSizeMismatch(f"operator modes {op.mode_sizes} != tensor modes {x.mode_sizes}")
    out = []
    for t in op.terms:
        out.append(TTTensor([_mode_product(c, a) for c, a in zip(x.cores, t)], copy=False))
    return TTSum(out)


# -- cookie problem -------------------------------------------------------------


def _disc_centers(count: int) -> tuple[list[tuple[float, float]], float]:
    m = math.ceil(math.sqrt(count))
    centers = [((a + 0.5) / m, (b + 0.5) / m) for b in range(m) for a in range(m)]
    return centers[:count], 0.35 / m


def diffusion_matrix(grid_size: int, sigma) -> np.ndarray:
    """5-point finite-difference matrix of ``-div(sigma grad u)`` on the unit square.

    ``grid_size`` interior points per direction, homogeneous Dirichlet
    boundary, coefficient sampled at edge midpoints.  Unknown ``(i, j)`` has
    index ``i + grid_size * j``.
    """
    n = grid_size
    h = 1.0 / (n + 1)
    mat = np.zeros((n * n, n * n))
    for j in range(n):
        for i in range(n):
            row = i + n * j
            x, y = (i + 1) * h, (j + 1) * h
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                s = sigma(x + di * h / 2, y + dj * h / 2) / h**2
                mat[row, row] += s
                ii, jj = i + di, j + dj
                if 0 <= ii < n and 0 <= jj < n:
                    mat[row, ii + n * jj] -= s
    return mat


def build_cookie_problem(
    d_params: int,
    grid_size: int,
    n_param_samples: int,
    rho_range: tuple[float, float] = (1.0, 10.0),
) -> tuple[KroneckerSumOperator, TTTensor]:
    """Kronecker-sum system of a diffusion problem with ``d_params`` disc inclusions.

    The coefficient is ``1 + rho_i`` on disc ``i``.  Mode 1 is the spatial
    grid (``grid_size**2`` unknowns) and mode ``i + 1`` carries
    ``n_param_samples`` linearly spaced samples of ``rho_i``.  The right-hand
    side is the constant source as a rank-1 tensor.
    """
    if grid_size < 8:
        raise InvalidGrid(f"grid size must be at least 8, got {grid_size}")
    if d_params < 1 or n_param_samples < 1:
        raise InvalidGrid("need at least one parameter and one sample")
    centers, radius = _disc_centers(d_params)
    d = d_params + 1
    rho = np.linspace(rho_range[0], rho_range[1], n_param_samples)
    terms: list[list[np.ndarray | None]] = [[diffusion_matrix(grid_size, lambda x, y: 1.0)] + [None] * d_params]
    for i, (cx, cy) in enumerate(centers):
        def inside(x, y, cx=cx, cy=cy):
            return 1.0 if (x - cx) ** 2 + (y - cy) ** 2 <= radius**2 else 0.0

        term: list[np.ndarray | None] = [diffusion_matrix(grid_size, inside)] + [None] * d_params
        term[i + 1] = np.diag(rho)
        terms.append(term)
    op = KroneckerSumOperator(terms, [grid_size**2] + [n_param_samples] * d_params)
    rhs = TTTensor([np.ones((1, n, 1)) for n in op.mode_sizes])
    assert rhs.ndim == d
    return op, rhs


def mean_preconditioner(op: KroneckerSumOperator) -> np.ndarray:
    """``sum_i A_{i,1} prod_{k>1} mean(diag(A_{i,k}))``, a mode-1 preconditioner.

    Replacing every trailing factor by the mean of its diagonal gives an
    operator acting on mode 1 only, so right preconditioning keeps the
    Kronecker-sum structure and the TT ranks.
    """
    p = np.zeros((op.mode_sizes[0],) * 2)
    for i in range(len(op)):
        scale = 1.0
        for k in range(1, op.ndim):
            scale *= float(np.trace(op.factor(i, k))) / op.mode_sizes[k]
        p += scale * op.factor(i, 0)
    return p


# -- GMRES ------------------------------------------------------------------------


@dataclass
class GMRESConfig:
    """Solver settings.

    ``rounding_tol`` defaults to a tenth of ``tol``.  ``preconditioner`` is
    ``"none"`` or ``"mean"`` (right preconditioning with
    :func:`mean_preconditioner`).
    """

    tol: float = 1e-6
    max_iter: int = 100
    strategy: RoundingStrategy | str = RoundingStrategy.DETERMINISTIC
    rounding_tol: float | None = None
    seed: SeedLike = None
    preconditioner: str = "none"
    track_true_residual: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tolerance must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        self.strategy = RoundingStrategy(self.strategy)
        if self.rounding_tol is None:
            self.rounding_tol = 0.1 * self.tol
        if not self.rounding_tol > 0:
            raise ValueError("rounding tolerance must be positive")
        if self.preconditioner not in ("none", "mean"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class GMRESResult:
    solution: TTTensor
    residual_history: list[float]
    max_rank_history: list[int]
    true_residual_history: list[float] = field(default_factory=list)
    rounding_time: list[float] = field(default_factory=list)
    converged: bool = False
    final_residual: float = math.nan

    @property
    def iterations(self) -> int:
        return len(self.residual_history)


class _Rounder:
    """Sum+Round with a fixed strategy; accumulates wall time spent rounding."""

    def __init__(self, strategy: RoundingStrategy, tol: float, seed: SeedLike):
        self.strategy = strategy
        self.tol = tol
        self.rng = np.random.default_rng(seed)
        self.elapsed = 0.0

    def __call__(self, terms: Sequence[TTTensor], coefficients: Sequence[float] | None = None) -> TTTensor:
        start = time.perf_counter()
        try:
            return self._round(list(terms), coefficients)
        finally:
            self.elapsed += time.perf_counter() - start

    def _round(self, terms, coefficients) -> TTTensor:
        if coefficients is not None:
            terms = [t.scaled(c) for t, c in zip(terms, coefficients)]
        d = terms[0].ndim
        if self.strategy is RoundingStrategy.DETERMINISTIC:
            return round_deterministic(formal_sum(terms), eps=self.tol)
        if self.strategy is RoundingStrategy.ADAPTIVE_KRP_SUM:
            return round_sum_adaptive_krp(terms, self.tol, seed=self.rng, recompress=True)
        full = formal_sum(terms)
        # sketch rank: twice the largest term rank plus oversampling
        ranks = [
            max(1, min(full.ranks[k], 2 * max(t.ranks[k] for t in terms) + 10)) for k in range(1, d)
        ]
        y = round_rand_orth_tt(full, ranks, seed=self.rng)
        tau = self.tol * float(np.linalg.norm(y.cores[-1])) / math.sqrt(max(d - 1, 1))
        return compression_pass(y, tau)


def _precondition(op: KroneckerSumOperator, p_inv: np.ndarray) -> KroneckerSumOperator:
    terms = []
    for i, t in enumerate(op.terms):
        terms.append([op.factor(i, 0) @ p_inv] + list(t[1:]))
    return KroneckerSumOperator(terms, op.mode_sizes)


def _apply_mode1(x: TTTensor, mat: np.ndarray) -> TTTensor:
    cores = list(x.cores)
    cores[0] = _mode_product(cores[0], mat)
    return TTTensor(cores, copy=False)


def true_residual(op: KroneckerSumOperator, rhs: TTTensor, x: TTTensor) -> float:
    """``||rhs - A x|| / ||rhs||`` in exact TT arithmetic (formal sum)."""
    ax = apply_operator(op, x).terms
    res = formal_sum([rhs] + ax, [1.0] + [-1.0] * len(ax))
    return norm_exact(res) / norm_exact(rhs)


def tt_gmres(op: KroneckerSumOperator, rhs: TTTensor, cfg: GMRESConfig) -> GMRESResult:
    """Unrestarted TT-GMRES with rounded Krylov vectors.

    ``residual_history`` holds the relative residual of the projected
    least-squares problem after each iteration; ``final_residual`` is the
    true relative residual of the returned solution.
    """
    check_same_modes([rhs, TTTensor([np.zeros((1, n, 1)) for n in op.mode_sizes])])
    rounder = _Rounder(RoundingStrategy(cfg.strategy), cfg.rounding_tol, cfg.seed)
    p_inv = None
    work_op = op
    if cfg.preconditioner == "mean":
        p_inv = np.linalg.inv(mean_preconditioner(op))
        work_op = _precondition(op, p_inv)

    beta = norm_exact(rhs)
    if beta == 0.0:
        zero = rhs.scaled(0.0)
        return GMRESResult(zero, [0.0], [1], converged=True, final_residual=0.0)
    basis = [rhs.scaled(1.0 / beta)]
    hess = np.zeros((cfg.max_iter + 1, cfg.max_iter))
    result = GMRESResult(rhs, [], [])
    coeffs = np.zeros(1)

    def assemble(coeffs: np.ndarray) -> TTTensor:
        x = rounder(basis[: len(coeffs)], list(coeffs))
        return _apply_mode1(x, p_inv) if p_inv is not None else x

    for j in range(cfg.max_iter):
        w = rounder(apply_operator(work_op, basis[j]).terms)
        for i in range(j + 1):
            hess[i, j] = inner(w, basis[i])
            w = rounder([w, basis[i]], [1.0, -hess[i, j]])
        hess[j + 1, j] = norm_exact(w)
        rhs_vec = np.zeros(j + 2)
        rhs_vec[0] = beta
        coeffs, *_ = np.linalg.lstsq(hess[: j + 2, : j + 1], rhs_vec, rcond=None)
        rel = float(np.linalg.norm(hess[: j + 2, : j + 1] @ coeffs - rhs_vec)) / beta
        result.residual_history.append(rel)
        result.rounding_time.append(rounder.elapsed)
        converged = rel <= cfg.tol
        if not converged and hess[j + 1, j] <= 1e-14 * beta:
            raise Breakdown(f"Arnoldi vector vanished at iteration {j + 1}")
        if hess[j + 1, j] > 0:
            basis.append(w.scaled(1.0 / hess[j + 1, j]))
        else:
            basis.append(w)
        result.max_rank_history.append(basis[-1].max_rank)
        if cfg.track_true_residual:
            result.true_residual_history.append(true_residual(op, rhs, assemble(coeffs)))
        if converged:
            result.converged = True
            break

    result.solution = assemble(coeffs)
    result.final_residual = true_residual(op, rhs, result.solution)
    return result


def write_log(path, result: GMRESResult) -> None:
    """CSV log: iteration, relative residual, max TT rank, cumulative rounding time."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "relative_residual", "max_tt_rank", "rounding_time"])
        for it, (res, rank, t) in enumerate(
            zip(result.residual_history, result.max_rank_history, result.rounding_time), start=1
        ):
            writer.writerow([it, f"{res:.17g}", rank, f"{t:.17g}"])
