import numpy as np
import pytest
from conftest import dense_h_tail, krp

from ttround.core import TTTensor, contract_to_dense, random_gaussian_tt, vertical, zeros_tt
from ttround.errors import ModeSizeMismatch
from ttround.flops import count_flops
from ttround.orthogonalize import orthogonalize
from ttround.sketch import (
    GaussianFactorSet,
    estimate_norm_krp,
    gaussian_matrix,
    krp_partial_contractions_rl,
    residual_norm_estimate,
    tt_partial_contractions_rl,
)


def test_gaussian_matrix():
    a = gaussian_matrix(3, 4, seed=5)
    np.testing.assert_array_equal(a, gaussian_matrix(3, 4, seed=5))
    assert not np.array_equal(a, gaussian_matrix(3, 4, seed=6))
    assert np.isfinite(gaussian_matrix(1, 1, seed=0)).all()
    big = gaussian_matrix(1000, 100, seed=1)
    assert abs(big.mean()) <= 0.02
    assert abs(big.var() - 1.0) <= 0.05
    with pytest.raises(ValueError):
        gaussian_matrix(0, 3)


def test_krp_rank_one_example():
    tt = TTTensor([np.array([1.0, 2.0]).reshape(1, 2, 1), np.array([3.0, 4.0]).reshape(1, 2, 1)])
    w = krp_partial_contractions_rl(tt, [np.ones((2, 1))])
    np.testing.assert_array_equal(w[2], [[7.0]])


def test_krp_zero_factors():
    tt = random_gaussian_tt([3, 3, 3], [2, 2], seed=0)
    w = krp_partial_contractions_rl(tt, [np.zeros((3, 2)), np.zeros((3, 2))])
    assert not w[2].any() and not w[3].any()


@pytest.mark.parametrize("d,n,r,c", [(2, 3, 2, 1), (3, 4, 3, 3), (4, 5, 4, 3), (5, 4, 3, 4), (5, 6, 4, 2)])
def test_krp_matches_dense(d, n, r, c):
    tt = random_gaussian_tt([n] * d, [r] * (d - 1), seed=d * 10 + c)
    rng = np.random.default_rng(c)
    omegas = [rng.standard_normal((n, c)) for _ in range(d - 1)]
    w = krp_partial_contractions_rl(tt, omegas)
    for k in range(2, d + 1):
        ref = dense_h_tail(tt.cores[k - 1 :]) @ krp(omegas[k - 2 :])
        assert np.linalg.norm(w[k] - ref) <= 1e-12 * np.linalg.norm(ref)


def test_krp_wide_block_matches_dense(monkeypatch):
    import ttround.sketch as sk

    monkeypatch.setattr(sk, "KRP_BLOCK", 3)
    tt = random_gaussian_tt([4, 3, 5], [3, 2], seed=2)
    rng = np.random.default_rng(0)
    omegas = [rng.standard_normal((3, 7)), rng.standard_normal((5, 7))]
    w = krp_partial_contractions_rl(tt, omegas)
    ref = dense_h_tail(tt.cores[1:]) @ krp(omegas)
    assert np.linalg.norm(w[2] - ref) <= 1e-12 * np.linalg.norm(ref)


def test_krp_validation():
    tt = random_gaussian_tt([3, 4], [2], seed=0)
    with pytest.raises(ModeSizeMismatch):
        krp_partial_contractions_rl(tt, [np.ones((3, 2))])
    with pytest.raises(ValueError):
        krp_partial_contractions_rl(tt, [np.ones((3, 2)), np.ones((4, 2))], start=1)


def test_krp_flop_count():
    tt = random_gaussian_tt([6] * 4, [5] * 3, seed=0)
    factors = GaussianFactorSet.draw(tt.mode_sizes, 2, 4, np.random.default_rng(0))
    with count_flops() as fc:
        krp_partial_contractions_rl(tt, factors)
    # W_4: 2*r*n*c; W_3, W_2: GEMM 2*(r n)*r*c plus the Hadamard-sum 2*r*n*c
    expected = 2 * 5 * 6 * 4 + 2 * (2 * 30 * 5 * 4 + 2 * 5 * 6 * 4)
    assert fc.total == expected


def test_append_matches_concatenated_factors():
    tt = random_gaussian_tt([4, 5, 3, 4], [3, 4, 2], seed=3)
    rng = np.random.default_rng(1)
    first = GaussianFactorSet.draw(tt.mode_sizes, 2, 3, rng)
    w = krp_partial_contractions_rl(tt, first)
    fresh = GaussianFactorSet.draw(tt.mode_sizes, 3, 2, rng)
    w.append(krp_partial_contractions_rl(tt, fresh))
    assert w.start == 3 and 2 not in w.mats and w.cols == 5
    combined = [np.hstack([first[k], fresh[k]]) for k in (3, 4)]
    once = krp_partial_contractions_rl(tt, combined)
    for k in (3, 4):
        np.testing.assert_array_equal(w[k], once[k])


def test_tt_contractions_self_orthogonal():
    tt = orthogonalize(random_gaussian_tt([3, 4, 3, 4], [3, 5, 3], seed=0), "rl")
    w = tt_partial_contractions_rl(tt, tt)
    for k, m in w.items():
        assert np.linalg.norm(m - np.eye(m.shape[0])) <= 1e-12


@pytest.mark.parametrize("d", [2, 4])
def test_tt_contractions_match_dense(d):
    x = random_gaussian_tt([3, 4, 5, 3][:d], [3, 4, 2][: d - 1], seed=1)
    r = random_gaussian_tt([3, 4, 5, 3][:d], [2, 3, 2][: d - 1], seed=2)
    w = tt_partial_contractions_rl(x, r)
    assert sorted(w) == list(range(1, d))
    for k in range(1, d):
        ref = dense_h_tail(x.cores[k:]) @ dense_h_tail(r.cores[k:]).T
        assert np.linalg.norm(w[k] - ref) <= 1e-12 * np.linalg.norm(ref)


def test_tt_contractions_mode_mismatch():
    with pytest.raises(ModeSizeMismatch):
        tt_partial_contractions_rl(random_gaussian_tt([3, 4], [2], 0), random_gaussian_tt([3, 5], [2], 0))


def test_norm_estimate_zero_and_formula():
    assert estimate_norm_krp(zeros_tt([3, 4, 5]), 8, seed=0) == 0.0
    tt = random_gaussian_tt([3, 4, 5], [2, 3], seed=0)
    factors = GaussianFactorSet.draw(tt.mode_sizes, 2, 6, np.random.default_rng(9))
    w = krp_partial_contractions_rl(tt, factors)
    expected = np.linalg.norm(vertical(tt.cores[0]) @ w[2]) / np.sqrt(6)
    assert estimate_norm_krp(tt, 6, seed=9) == pytest.approx(expected, rel=1e-14)


def test_residual_norm_estimate():
    assert residual_norm_estimate(np.zeros((4, 2)), 2) == 0.0
    v = np.array([[3.0], [4.0]])
    assert residual_norm_estimate(v, 1) == 5.0
    with pytest.raises(ValueError):
        residual_norm_estimate(v, 0)


def test_residual_estimate_unbiased_with_krp():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, 4 * 5))
    truth = np.linalg.norm(a) ** 2
    sq = []
    for _ in range(1000):
        omega = krp([rng.standard_normal((4, 3)), rng.standard_normal((5, 3))])
        sq.append(residual_norm_estimate(a @ omega, 3) ** 2)
    sq = np.array(sq)
    assert abs(sq.mean() - truth) <= 3 * sq.std(ddof=1) / np.sqrt(sq.size)


def test_norm_estimate_unbiased():
    tt = random_gaussian_tt([5] * 4, [3] * 3, seed=5)
    truth = np.linalg.norm(contract_to_dense(tt)) ** 2
    sq = np.array([estimate_norm_krp(tt, 16, seed=s) ** 2 for s in range(1000)])
    assert abs(sq.mean() - truth) <= 3 * sq.std(ddof=1) / np.sqrt(sq.size)
