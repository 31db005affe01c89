"""Command-line interface: ``ttround {round,bench-synthetic,norm-study,cookie}``.

Single runs print one JSON record; sweeps write CSV files.  Floating-point
values are written with 17 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .core import TTTensor, formal_sum, norm_exact, random_gaussian_tt, zeros_tt
from .errors import TTError
from .flops import count_flops
from .orthogonalize import round_deterministic
from .rounding import AdaptiveConfig, round_adaptive_krp, round_fixed_krp, round_orth_rand, round_rand_orth_tt
from .sketch import estimate_norm_krp
from .synthetic import perturbed_low_rank
from .ttio import read_tt, write_tt

RANK_ALGOS = ("det", "rand-orth", "orth-rand", "krp-fix")
TOL_ALGOS = ("det", "orth-rand", "krp-adapt", "krp-adapt-r")

BENCH_FIELDS = ["algorithm", "mode", "target", "seed", "relative_error", "max_rank", "ranks", "wall_time", "flops"]
NORM_FIELDS = ["d", "width", "mean_estimate", "min_estimate", "max_estimate", "true_norm"]


def fmt(x: float) -> str:
    return f"{x:.17g}"


@dataclass
class BenchRecord:
    algorithm: str
    mode: str
    target: float | list[int]
    relative_error: float
    ranks: list[int]
    wall_time: float
    flops: float
    seed: int | None

    def __post_init__(self):
        if not self.relative_error >= 0:
            raise ValueError("relative error must be non-negative")
        if min(self.ranks) < 1:
            raise ValueError("ranks must be positive")

    def csv_row(self) -> dict[str, str]:
        target = self.target if isinstance(self.target, list) else [self.target]
        return {
            "algorithm": self.algorithm,
            "mode": self.mode,
            "target": " ".join(str(t) if self.mode == "rank" else fmt(t) for t in target),
            "seed": "" if self.seed is None else str(self.seed),
            "relative_error": fmt(self.relative_error),
            "max_rank": str(max(self.ranks)),
            "ranks": " ".join(map(str, self.ranks)),
            "wall_time": fmt(self.wall_time),
            "flops": fmt(self.flops),
        }


def relative_error(x: TTTensor, y: TTTensor) -> float:
    """``||x - y|| / ||x||`` evaluated in exact TT arithmetic."""
    nx = norm_exact(x)
    diff = norm_exact(formal_sum([x, y], [1.0, -1.0]))
    return diff / nx if nx > 0 else diff


def run_algorithm(
    x: TTTensor,
    algo: str,
    ranks: Sequence[int] | int | None = None,
    tol: float | None = None,
    seed: int | None = None,
    f_init: float = 0.1,
    f_inc: float = 0.05,
) -> tuple[TTTensor, BenchRecord]:
    """Round ``x`` with one algorithm and measure error, time and flops."""
    if (ranks is None) == (tol is None):
        raise ValueError("give exactly one of ranks or tol")
    if ranks is not None and algo not in RANK_ALGOS:
        raise ValueError(f"algorithm {algo!r} needs a tolerance")
    if tol is not None and algo not in TOL_ALGOS:
        raise ValueError(f"algorithm {algo!r} needs target ranks")
    start = time.perf_counter()
    with count_flops() as counter:
        if algo == "det":
            y = round_deterministic(x, eps=tol, ranks=ranks)
        elif algo == "orth-rand":
            y = round_orth_rand(x, ranks=ranks, eps=tol, seed=seed)
        elif algo == "rand-orth":
            y = round_rand_orth_tt(x, ranks, seed=seed)
        elif algo == "krp-fix":
            y = round_fixed_krp(x, ranks, seed=seed)
        else:
            cfg = AdaptiveConfig(tol, f_init=f_init, f_inc=f_inc, seed=seed)
            y = round_adaptive_krp(x, cfg, recompress=(algo == "krp-adapt-r"))
    elapsed = time.perf_counter() - start
    if ranks is not None:
        target = [int(r) for r in np.broadcast_to(ranks, (x.ndim - 1,))]
    else:
        target = float(tol)
    record = BenchRecord(
        algorithm=algo,
        mode="rank" if ranks is not None else "tol",
        target=target,
        relative_error=relative_error(x, y),
        ranks=list(y.ranks),
        wall_time=elapsed,
        flops=counter.total,
        seed=None if algo == "det" else seed,
    )
    return y, record


# -- subcommands ------------------------------------------------------------------


def cmd_round(args) -> int:
    x = read_tt(args.input)
    ranks = args.ranks
    if ranks is not None and len(ranks) == 1:
        ranks = ranks[0]
    y, record = run_algorithm(x, args.algo, ranks=ranks, tol=args.tol, seed=args.seed,
                              f_init=args.f_init, f_inc=args.f_inc)
    write_tt(args.output, y)
    print(json.dumps(asdict(record)))
    return 0


def cmd_bench_synthetic(args) -> int:
    for name in ("d", "n", "rank", "seeds"):
        if getattr(args, name) < 1:
            raise ValueError(f"--{name} must be positive")
    x = perturbed_low_rank(args.d, args.n, args.rank, args.eps_pert, seed=args.tensor_seed)
    rows = []
    if args.targets is not None:
        cells = [(algo, {"ranks": t}) for t in args.targets for algo in RANK_ALGOS]
    else:
        cells = [(algo, {"tol": t}) for t in args.tols for algo in TOL_ALGOS]
    for algo, target in cells:
        seeds = [None] if algo == "det" else range(args.seeds)
        for seed in seeds:
            _, record = run_algorithm(x, algo, seed=seed, **target)
            rows.append(record.csv_row())
    with open(args.csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
    return 0


def norm_study(ds: Sequence[int], widths: Sequence[int], trials: int, n: int = 10, rank: int = 5,
               seed: int = 0, zero: bool = False) -> list[dict[str, float]]:
    """Monte-Carlo statistics of the KRP norm estimate for random TT tensors."""
    out = []
    for d in ds:
        tensor_seed = np.random.SeedSequence([seed, d])
        x = zeros_tt([n] * d) if zero else random_gaussian_tt([n] * d, [rank] * (d - 1), tensor_seed)
        true = norm_exact(x)
        for width in widths:
            seeds = [np.random.SeedSequence([seed, d, width, t]) for t in range(trials)]
            est = np.array([estimate_norm_krp(x, width, s) for s in seeds])
            out.append({
                "d": d, "width": width, "mean_estimate": float(est.mean()),
                "min_estimate": float(est.min()), "max_estimate": float(est.max()), "true_norm": true,
            })
    return out


def cmd_norm_study(args) -> int:
    if args.trials < 100:
        raise ValueError("--trials must be at least 100")
    if min(args.d) < 2 or min(args.widths) < 1:
        raise ValueError("need d >= 2 and positive widths")
    rows = norm_study(args.d, args.widths, args.trials, n=args.n, rank=args.rank, seed=args.seed, zero=args.zero)
    with open(args.csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=NORM_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (fmt(v) if isinstance(v, float) else v) for k, v in row.items()})
    return 0


def cmd_cookie(args) -> int:
    from pathlib import Path

    from .solver import GMRESConfig, build_cookie_problem, tt_gmres, write_log

    op, rhs = build_cookie_problem(args.params, args.grid, args.samples)
    if args.log_dir:
        Path(args.log_dir).mkdir(parents=True, exist_ok=True)
    for strategy in args.strategies:
        for seed in range(args.seeds):
            cfg = GMRESConfig(tol=args.tol, max_iter=args.max_iter, strategy=strategy, seed=seed,
                              preconditioner=args.preconditioner, track_true_residual=args.true_residuals)
            start = time.perf_counter()
            res = tt_gmres(op, rhs, cfg)
            summary = {
                "strategy": strategy, "seed": seed, "iterations": res.iterations, "converged": res.converged,
                "final_residual": res.final_residual, "max_rank": max(res.max_rank_history),
                "rounding_time": res.rounding_time[-1], "wall_time": time.perf_counter() - start,
            }
            print(json.dumps(summary))
            if args.log_dir:
                write_log(Path(args.log_dir) / f"{strategy}_seed{seed}.csv", res)
    return 0


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ttround", description="Randomized tensor-train rounding.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("round", help="round a TTF1 file")
    p.add_argument("input")
    p.add_argument("output")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--ranks", type=int, nargs="+", help="target ranks (one value or d-1 values)")
    mode.add_argument("--tol", type=float, help="relative tolerance")
    p.add_argument("--algo", choices=sorted(set(RANK_ALGOS + TOL_ALGOS)), default="det")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--f-init", type=float, default=0.1)
    p.add_argument("--f-inc", type=float, default=0.05)
    p.set_defaults(func=cmd_round)

    p = sub.add_parser("bench-synthetic", help="perturbed low-rank benchmark")
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--rank", type=int, default=10)
    p.add_argument("--eps-pert", type=float, default=1e-5)
    grid = p.add_mutually_exclusive_group(required=True)
    grid.add_argument("--targets", type=int, nargs="+")
    grid.add_argument("--tols", type=float, nargs="+")
    p.add_argument("--seeds", type=int, default=10, help="number of seeds per randomized cell")
    p.add_argument("--tensor-seed", type=int, default=0)
    p.add_argument("--csv", required=True)
    p.set_defaults(func=cmd_bench_synthetic)

    p = sub.add_parser("norm-study", help="statistics of the KRP norm estimator")
    p.add_argument("--d", type=int, nargs="+", default=[3, 4, 5])
    p.add_argument("--widths", type=int, nargs="+", default=[8, 32, 128])
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--rank", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--zero", action="store_true", help="use the zero tensor")
    p.add_argument("--csv", required=True)
    p.set_defaults(func=cmd_norm_study)

    p = sub.add_parser("cookie", help="TT-GMRES on the parametric cookie problem")
    p.add_argument("--params", type=int, default=3)
    p.add_argument("--grid", type=int, default=16)
    p.add_argument("--samples", type=int, default=8)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--strategies", nargs="+", default=["deterministic", "adaptive-krp-sum"],
                   choices=["deterministic", "rand-orth-tt", "adaptive-krp-sum"])
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--preconditioner", choices=["none", "mean"], default="mean")
    p.add_argument("--true-residuals", action="store_true", help="also track true residuals per iteration")
    p.add_argument("--log-dir", help="directory for per-run CSV iteration logs")
    p.set_defaults(func=cmd_cookie)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (TTError, ValueError, ArithmeticError, OSError) as exc:
        print(f"ttround: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
