"""Tensor-train rounding with Khatri-Rao sketches."""

from .core import (
    TTTensor,
    build_tt,
    contract_to_dense,
    formal_sum,
    from_horizontal,
    from_vertical,
    horizontal,
    inner,
    norm_exact,
    random_gaussian_tt,
    tt_entry,
    unfold_core,
    vertical,
    zeros_tt,
)
from .errors import *  # noqa: F401,F403
from .flops import count_flops
from .orthogonalize import TruncationRule, orthogonalize, round_deterministic, truncated_svd
from .rounding import (
    AdaptiveConfig,
    compression_pass,
    generate_residual_sketch,
    round_adaptive_krp,
    round_fixed_krp,
    round_orth_rand,
    round_rand_orth_tt,
)
from .sketch import (
    GaussianFactorSet,
    PartialContractionSet,
    estimate_norm_krp,
    krp_partial_contractions_rl,
    tt_partial_contractions_rl,
)
from .sumround import TTSum, residual_sketch_sum, round_sum_adaptive_krp
from .ttio import read_tt, write_tt

__version__ = "0.1.0"
