import copy

import numpy as np
import pytest
from conftest import dense_rel_error, left_defect

from ttround.core import contract_to_dense, formal_sum, norm_exact, random_gaussian_tt, vertical
from ttround.errors import EmptyTermList, ModeSizeMismatch
from ttround.flops import count_flops
from ttround.orthogonalize import round_deterministic
from ttround.rounding import compression_pass, generate_residual_sketch
from ttround.sketch import GaussianFactorSet, krp_partial_contractions_rl
from ttround.sumround import (
    TTSum,
    residual_sketch_sum,
    round_sum_adaptive_krp,
    stacked_contraction,
    sum_partial_contractions,
)

MODES = [4, 5, 3, 4]


def make_terms(count, seed=0, rank=3):
    return [random_gaussian_tt(MODES, [rank, rank + 1, rank], seed=seed + i) for i in range(count)]


def test_ttsum_validation():
    with pytest.raises(EmptyTermList):
        TTSum([])
    with pytest.raises(ModeSizeMismatch):
        TTSum([random_gaussian_tt([3, 4], [2], 0), random_gaussian_tt([3, 5], [2], 0)])
    assert len(TTSum(make_terms(3))) == 3


def test_single_term_matches_single_sketch():
    (x,) = make_terms(1)
    factors = GaussianFactorSet.draw(x.mode_sizes, 2, 2, np.random.default_rng(0))
    w_single = krp_partial_contractions_rl(x, factors)
    w_sum = [copy.deepcopy(w_single)]
    z = vertical(x.cores[0])
    q = np.linalg.qr(np.random.default_rng(1).standard_normal((4, 1)))[0]
    s1, _ = generate_residual_sketch(x, z, q, w_single, 1, 3, np.random.default_rng(5))
    s2, _ = residual_sketch_sum([x], z, q, w_sum, 1, 3, np.random.default_rng(5))
    np.testing.assert_array_equal(s1, s2)


def test_two_identical_terms_double_sketch():
    (x,) = make_terms(1)
    factors = GaussianFactorSet.draw(x.mode_sizes, 2, 3, np.random.default_rng(0))
    ws = sum_partial_contractions([x, x], factors)
    z2 = np.hstack([vertical(x.cores[0])] * 2)
    s, _ = residual_sketch_sum([x, x], z2, np.zeros((4, 0)), ws, 1, 3, np.random.default_rng(0))
    single = vertical(x.cores[0]) @ ws[0][2]
    np.testing.assert_allclose(s, 2 * single, rtol=1e-14, atol=0)


def test_sum_sketch_matches_formal_sum():
    for inst in range(5):
        terms = make_terms(3, seed=10 * inst)
        full = formal_sum(terms)
        factors = GaussianFactorSet.draw(full.mode_sizes, 2, 4, np.random.default_rng(inst))
        ws = sum_partial_contractions(terms, factors)
        w_full = krp_partial_contractions_rl(full, factors)
        z = np.concatenate([vertical(t.cores[0]) for t in terms], axis=1)
        q = np.linalg.qr(np.random.default_rng(inst).standard_normal((4, 1)))[0]
        s_sum, _ = residual_sketch_sum(terms, z, q, ws, 1, 6, np.random.default_rng(99))
        s_full, _ = generate_residual_sketch(full, vertical(full.cores[0]), q, w_full, 1, 6, np.random.default_rng(99))
        assert np.linalg.norm(s_sum - s_full) <= 1e-13 * np.linalg.norm(s_full)
        for k in range(2, 5):
            assert np.linalg.norm(stacked_contraction(ws, k) - w_full[k]) <= 1e-13 * np.linalg.norm(w_full[k])


def test_cancelling_terms_give_zero():
    x = make_terms(1)[0]
    y = round_sum_adaptive_krp([x, x.scaled(-1.0)], 1e-6, seed=0)
    assert y.ranks == (1, 1, 1, 1, 1)
    assert np.abs(contract_to_dense(y)).max() <= 1e-10 * norm_exact(x)


def test_eight_terms_tolerance_and_ranks():
    terms = [random_gaussian_tt([8] * 4, [3] * 3, seed=s) for s in range(8)]
    full = formal_sum(terms)
    dense = sum(contract_to_dense(t) for t in terms)
    eps = 1e-6
    det = round_deterministic(full, eps=eps)
    ok = 0
    for seed in range(10):
        y = round_sum_adaptive_krp(terms, eps, seed=seed)
        assert left_defect(y) <= 1e-10
        err = dense_rel_error(dense, y)
        ok += err <= 1.5 * eps
        z = compression_pass(y, eps * norm_exact(y) / np.sqrt(3))
        assert max(a - b for a, b in zip(z.ranks, det.ranks)) <= 2
    assert ok >= 9


def test_single_term_reduction():
    x = random_gaussian_tt([6] * 4, [5] * 3, seed=3)
    dense = contract_to_dense(x)
    y = round_sum_adaptive_krp([x], 1e-8, seed=0)
    assert dense_rel_error(dense, y) <= 1.5e-8


def test_sum_round_determinism_and_recompress():
    terms = make_terms(4)
    a = round_sum_adaptive_krp(terms, 1e-4, seed=7)
    b = round_sum_adaptive_krp(terms, 1e-4, seed=7)
    for ca, cb in zip(a.cores, b.cores):
        np.testing.assert_array_equal(ca, cb)
    c = round_sum_adaptive_krp(terms, 1e-4, seed=7, recompress=True)
    assert all(u <= v for u, v in zip(c.ranks, a.ranks))


def test_validation():
    with pytest.raises(ValueError):
        round_sum_adaptive_krp(make_terms(2), 0.0)
    with pytest.raises(ValueError):
        round_sum_adaptive_krp(make_terms(2), 1e-3, f_inc=1.5)


def test_contraction_cost_linear_in_terms():
    terms = [random_gaussian_tt([16] * 5, [8] * 4, seed=s) for s in range(8)]
    factors = GaussianFactorSet.draw(terms[0].mode_sizes, 2, 8, np.random.default_rng(0))
    with count_flops() as one:
        sum_partial_contractions(terms[:1], factors)
    with count_flops() as eight:
        sum_partial_contractions(terms, factors)
    assert 6 <= eight.total / one.total <= 10
