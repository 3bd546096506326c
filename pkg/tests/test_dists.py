import math

import numpy as np
import pytest
import torch

from cwm.core.dists import CategoricalDist, kl_categorical, sample_onehot_st
from helpers import finite_diff_gradient_error, multinomial_3sigma_bound


def dist_from(logits):
    return CategoricalDist(torch.as_tensor(logits, dtype=torch.float64))


def test_logits_must_be_finite():
    bad = torch.tensor([[[0.0, float("nan")]]])
    with pytest.raises(ValueError):
        CategoricalDist(bad)
    with pytest.raises(ValueError):
        CategoricalDist(torch.tensor([[[0.0, float("inf")]]]))


def test_logits_shape_checked():
    with pytest.raises(ValueError):
        CategoricalDist(torch.zeros(3, 2))


def test_probs_normalized():
    d = dist_from(np.random.default_rng(0).normal(size=(4, 3, 5)))
    assert torch.allclose(d.probs().sum(-1), torch.ones(4, 3, dtype=torch.float64),
                          atol=1e-6)


def test_extreme_logits_pick_dominant_class():
    # softmax([10, -10]) puts >= 0.9999 on class 0
    d = dist_from([[[10.0, -10.0]]])
    assert float(d.probs()[0, 0, 0]) >= 0.9999
    rng = torch.Generator().manual_seed(0)
    for _ in range(20):
        s = sample_onehot_st(d, rng)
        assert float(s[0, 0, 0]) == 1.0


def test_sample_is_exactly_onehot():
    d = dist_from(np.random.default_rng(1).normal(size=(6, 3, 4)))
    rng = torch.Generator().manual_seed(0)
    s = sample_onehot_st(d, rng)
    assert torch.equal(s.sum(-1), torch.ones(6, 3, dtype=torch.float64))
    assert set(s.unique().tolist()) <= {0.0, 1.0}


def test_uniform_sampling_frequencies():
    k = 4
    n = 100_000
    d = CategoricalDist(torch.zeros(n, 1, k))
    rng = torch.Generator().manual_seed(7)
    s = sample_onehot_st(d, rng)
    freqs = s[:, 0, :].mean(0)
    bound = multinomial_3sigma_bound(n, 1.0 / k)
    assert torch.all((freqs - 1.0 / k).abs() < bound)


def test_straight_through_gradient_matches_softmax_fd():
    # gradient of sum(sample * w) wrt logits equals the finite-difference
    # gradient of sum(softmax * w)
    torch.manual_seed(3)
    logits = torch.randn(2, 3, 4, dtype=torch.float64, requires_grad=True)
    w = torch.randn(2, 3, 4, dtype=torch.float64)

    rng = torch.Generator().manual_seed(11)
    s = sample_onehot_st(CategoricalDist(logits), rng)
    (s * w).sum().backward()
    analytic = logits.grad.clone()

    h = 1e-6
    fd = torch.zeros_like(logits)
    with torch.no_grad():
        flat = logits.view(-1)
        for i in range(flat.numel()):
            orig = float(flat[i])
            flat[i] = orig + h
            up = float((torch.softmax(logits, -1) * w).sum())
            flat[i] = orig - h
            down = float((torch.softmax(logits, -1) * w).sum())
            flat[i] = orig
            fd.view(-1)[i] = (up - down) / (2 * h)
    rel = (fd - analytic).norm() / fd.norm()
    assert float(rel) < 1e-3


def test_mean_mode_passes_probs():
    d = dist_from(np.random.default_rng(2).normal(size=(2, 2, 3)))
    out = sample_onehot_st(d, None, mode="mean")
    assert torch.equal(out, d.probs())


def test_kl_zero_for_identical():
    d = dist_from(np.random.default_rng(3).normal(size=(2, 3, 4)))
    assert torch.allclose(kl_categorical(d, d),
                          torch.zeros(2, dtype=torch.float64), atol=1e-12)


def test_kl_hand_case_ln2():
    post = dist_from([[[200.0, -200.0]]])      # effectively (1, 0)
    prior = dist_from([[[0.0, 0.0]]])          # (0.5, 0.5)
    kl = float(kl_categorical(post, prior))
    assert abs(kl - math.log(2.0)) < 1e-9


def test_kl_uniform_pairs_zero():
    post = CategoricalDist(torch.zeros(1, 3, 5))
    prior = CategoricalDist(torch.zeros(1, 3, 5))
    assert float(kl_categorical(post, prior)) == 0.0


def test_kl_shape_mismatch():
    with pytest.raises(ValueError):
        kl_categorical(CategoricalDist(torch.zeros(1, 2, 3)),
                       CategoricalDist(torch.zeros(1, 2, 4)))


def test_kl_gradients_flow_to_both_sides():
    post_logits = torch.randn(1, 2, 3, requires_grad=True)
    prior_logits = torch.randn(1, 2, 3, requires_grad=True)
    kl = kl_categorical(CategoricalDist(post_logits),
                        CategoricalDist(prior_logits)).sum()
    kl.backward()
    assert post_logits.grad is not None and post_logits.grad.abs().sum() > 0
    assert prior_logits.grad is not None and prior_logits.grad.abs().sum() > 0


def test_kl_balance_blocks_posterior_gradient():
    post_logits = torch.randn(1, 2, 3, requires_grad=True)
    prior_logits = torch.randn(1, 2, 3, requires_grad=True)
    kl = kl_categorical(CategoricalDist(post_logits),
                        CategoricalDist(prior_logits), balance=1.0).sum()
    kl.backward()
    assert torch.all(post_logits.grad == 0)
    assert prior_logits.grad.abs().sum() > 0


def test_free_bits_clamp():
    d1 = dist_from(np.random.default_rng(4).normal(size=(1, 2, 3)))
    d2 = dist_from(np.random.default_rng(5).normal(size=(1, 2, 3)))
    raw = float(kl_categorical(d1, d2))
    clamped = float(kl_categorical(d1, d2, free_bits=raw + 1.0))
    assert clamped == pytest.approx(raw + 1.0)


def test_entropy_uniform_exact():
    # uniform (all-zero logits) gives the analytic entropy ln K; exactness
    # is limited only by the float reduction order
    for k in (4, 8):
        d = CategoricalDist(torch.zeros(1, 2, k, dtype=torch.float64))
        ent = d.entropy()
        assert torch.allclose(ent, torch.full_like(ent, math.log(k)),
                              atol=1e-12, rtol=0.0)
