import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tucker_denoise.errors import DomainError
from tucker_denoise.tensor import mode_product
from tucker_denoise.vbmf import (RankPair, evb_tau_bar, select_kernel_ranks, vb_cutoff,
                                 vbmf_select_rank)


def low_rank_plus_noise(rng, rows, cols, rank, sigma):
    b = rng.normal(size=(rows, rank))
    a = rng.normal(size=(cols, rank))
    return b @ a.T + sigma * rng.normal(size=(rows, cols))


def test_rank_three_recovered():
    hits = 0
    for seed in range(20):
        m = low_rank_plus_noise(np.random.default_rng(seed), 64, 576, 3, 1e-4)
        hits += vbmf_select_rank(m, 1e-8)[0] == 3
    assert hits >= 18


def test_pure_noise_clamps_to_one():
    clamps = 0
    for seed in range(20):
        m = np.random.default_rng(100 + seed).normal(size=(64, 576))
        rank, internals = vbmf_select_rank(m, 1.0)
        clamps += internals.raw_rank == 0 and rank == 1
    assert clamps >= 18


def test_dominant_component():
    rng = np.random.default_rng(1)
    u, _ = np.linalg.qr(rng.normal(size=(20, 20)))
    v, _ = np.linalg.qr(rng.normal(size=(30, 20)))
    s = np.concatenate([[100.0], rng.uniform(0, 0.01, 19)])
    m = (u * s) @ v.T
    assert vbmf_select_rank(m, 1e-4)[0] == 1


def test_invalid_noise():
    with pytest.raises(DomainError):
        vbmf_select_rank(np.eye(3), 0.0)
    with pytest.raises(DomainError):
        vbmf_select_rank(np.eye(3), -1.0)


def test_tau_bar_root():
    for alpha in (1 / 9, 0.5, 1.0):
        t = evb_tau_bar(alpha)
        phi = lambda z: math.log1p(z) / z - 0.5
        assert abs(phi(t) + phi(t / alpha)) < 1e-12
    # square case: 2 phi(t) = 0 at t ~= 2.5129
    assert evb_tau_bar(1.0) == pytest.approx(2.5129, abs=1e-4)


def test_internals_consistency():
    rng = np.random.default_rng(2)
    m = low_rank_plus_noise(rng, 16, 40, 4, 0.1)
    rank, it = vbmf_select_rank(m, 0.01)
    assert rank == 4
    assert np.all(np.diff(it.singular_values) <= 0)
    assert np.all(it.cutoffs > 0)
    kept = np.isfinite(it.cutoffs)
    # retained components sit above their own cutoff; the prior product matches
    # the EVB estimate gamma_hat * gamma / (L M)
    assert np.all(it.singular_values[kept] > it.cutoffs[kept])
    L, M = it.dims
    for i in np.nonzero(kept)[0]:
        g = it.singular_values[i]
        x = 1 - (L + M) * 0.01 / g**2
        g_hat = g / 2 * (x + math.sqrt(x * x - 4 * L * M * 1e-4 / g**4))
        assert it.prior_scales[i, 0] * it.prior_scales[i, 1] == pytest.approx(
            g_hat * g / (L * M), rel=1e-10)
    assert it.to_dict()["raw_rank"] == 4


def test_vb_cutoff_edge():
    assert vb_cutoff(4, 9, 1.0, 0.0) == math.inf
    # large prior product reduces to the noise-only edge sqrt(L sigma^2) + sqrt(M sigma^2)
    assert vb_cutoff(4, 9, 1.0, 1e12) == pytest.approx(math.sqrt((4 + 9) / 2 + math.sqrt(
        (13 / 2) ** 2 - 36)), rel=1e-9)


def test_determinism():
    m = np.random.default_rng(3).normal(size=(12, 30))
    a = vbmf_select_rank(m, 0.5)[1]
    b = vbmf_select_rank(m.copy(), 0.5)[1]
    for f in ("singular_values", "cutoffs", "prior_scales", "posterior_masses"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_rank_non_increasing_in_noise():
    m = low_rank_plus_noise(np.random.default_rng(4), 24, 60, 6, 0.5)
    ranks = [vbmf_select_rank(m, s2)[1].raw_rank for s2 in np.geomspace(1e-4, 1e3, 40)]
    assert all(a >= b for a, b in zip(ranks, ranks[1:]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 50.0))
def test_joint_scaling_invariance(seed, c):
    m = low_rank_plus_noise(np.random.default_rng(seed), 10, 25, 3, 0.3)
    r1, i1 = vbmf_select_rank(m, 0.09)
    r2, i2 = vbmf_select_rank(c * m, c * c * 0.09)
    np.testing.assert_allclose(i2.singular_values, c * i1.singular_values, rtol=1e-10)
    assert r1 == r2


def kernel_low_rank(rng, d, s, t, r3, r4):
    core = rng.normal(size=(d, d, r3, r4))
    u3, _ = np.linalg.qr(rng.normal(size=(s, r3)))
    u4, _ = np.linalg.qr(rng.normal(size=(t, r4)))
    return mode_product(mode_product(core, u3, 3), u4, 4)


def test_kernel_ranks_low_rank():
    rng = np.random.default_rng(5)
    w = kernel_low_rank(rng, 3, 16, 16, 2, 2) + 1e-6 * rng.normal(size=(3, 3, 16, 16))
    assert select_kernel_ranks(w, 1e-12) == RankPair(2, 2)


def test_kernel_ranks_zero_kernel_clamps():
    assert select_kernel_ranks(np.zeros((3, 3, 4, 5)), 1.0) == RankPair(1, 1)


def test_kernel_ranks_full_when_noise_negligible():
    rng = np.random.default_rng(6)
    w = rng.normal(size=(3, 3, 6, 5))
    pair, (i3, i4) = select_kernel_ranks(w, 1e-10, return_internals=True)
    # every singular value clears its cutoff by a wide margin
    assert np.all(i3.singular_values > i3.cutoffs) and np.all(i4.singular_values > i4.cutoffs)
    assert pair == RankPair(6, 5)


@pytest.mark.parametrize("rank", [0, 1, 3, 5])
def test_estimated_noise_variance_and_rank(rank):
    hits, est = 0, []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        m = low_rank_plus_noise(rng, 64, 576, rank, 0.3) if rank else 0.3 * rng.normal(size=(64, 576))
        r, info = vbmf_select_rank(m)
        hits += r == max(rank, 1)
        est.append(info.noise_variance)
        assert info.noise_estimated
    assert hits >= 18
    assert abs(np.mean(est) / 0.09 - 1) <= 0.05


def _free_energy(sigma2, gamma, L, M):
    # written out term by term from the EVB global solution for a full spectrum
    alpha = L / M
    tb = evb_tau_bar(alpha)
    xb = (1 + tb) * (1 + alpha / tb)
    total = 0.0
    for g in gamma:
        x = g * g / (M * sigma2)
        total += x - math.log(x)
        if x > xb:
            t = 0.5 * (x - 1 - alpha + math.sqrt((x - 1 - alpha) ** 2 - 4 * alpha))
            total += math.log(t + 1) + alpha * math.log(t / alpha + 1) - t
    return total


def test_noise_estimate_minimizes_free_energy():
    rng = np.random.default_rng(3)
    m = low_rank_plus_noise(rng, 16, 144, 4, 0.2)
    gamma = np.linalg.svd(m, compute_uv=False)
    _, info = vbmf_select_rank(m)
    grid = np.geomspace(info.noise_variance / 3, info.noise_variance * 3, 2001)
    best = grid[np.argmin([_free_energy(s, gamma, 16, 144) for s in grid])]
    assert info.noise_variance == pytest.approx(best, rel=2e-3)
    assert _free_energy(info.noise_variance, gamma, 16, 144) <= _free_energy(best, gamma, 16, 144) + 1e-9


def test_estimated_noise_scale_equivariant():
    m = low_rank_plus_noise(np.random.default_rng(4), 32, 288, 2, 0.5)
    _, a = vbmf_select_rank(m)
    _, b = vbmf_select_rank(7 * m)
    assert b.noise_variance == pytest.approx(49 * a.noise_variance, rel=1e-6)


def test_estimated_noise_zero_matrix():
    r, info = vbmf_select_rank(np.zeros((4, 9)))
    assert r == 1 and info.noise_variance == 0.0 and info.raw_rank == 0
    assert select_kernel_ranks(np.zeros((3, 3, 4, 4))) == RankPair(1, 1)
