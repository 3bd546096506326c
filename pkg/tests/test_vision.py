import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from cwm.config import ConfigError, CutoutParams, paper_vision
from cwm.vision import (
    ContextDecoder,
    CrossAttentionFuse,
    ResidualEncoder,
    cutout,
    preprocess,
    sample_context_index,
)
from helpers import multinomial_3sigma_bound, tiny_model, tiny_vision


# ---------------------------------------------------------------------- #
# preprocessing


def test_preprocess_endpoints():
    frame = np.zeros((3, 64, 64), dtype=np.uint8)
    assert float(preprocess(frame).min()) == -0.5
    frame[:] = 255
    assert float(preprocess(frame).max()) == 0.5


def test_preprocess_midpoint():
    frame = np.full((3, 64, 64), 128, dtype=np.uint8)
    expected = np.float32(128) / np.float32(255) - np.float32(0.5)
    assert float(preprocess(frame)[0, 0, 0]) == expected
    assert abs(float(expected) - 0.0019608) < 1e-6


def test_preprocess_all_256_values_bit_exact():
    values = np.arange(256, dtype=np.uint8)
    frame = np.broadcast_to(values[None, None, :], (3, 256, 256))[:, :, :256]
    # build a (3, 16, 16) frame covering all byte values
    frame = values.reshape(16, 16)
    frame = np.stack([frame, frame, frame]).astype(np.uint8)
    out = preprocess(frame).numpy()
    expected = values.reshape(16, 16).astype(np.float32) / np.float32(255) \
        - np.float32(0.5)
    assert np.array_equal(out[0], expected)


def test_preprocess_rejects_bad_input():
    with pytest.raises(ValueError):
        preprocess(np.zeros((4, 64, 64), dtype=np.uint8))
    with pytest.raises(ValueError):
        preprocess(np.zeros((3, 64, 64), dtype=np.float32))


# ---------------------------------------------------------------------- #
# encoder


def test_encoder_stage_shapes_match_reference_table():
    enc = ResidualEncoder(paper_vision())
    shapes = enc.stage_output_shapes(torch.zeros(1, 3, 64, 64))
    assert shapes == [(16, 16, 48), (8, 8, 96), (4, 4, 192)]


def test_encoder_flattened_width():
    enc = ResidualEncoder(paper_vision())
    out = enc(torch.zeros(2, 3, 64, 64))
    assert out.shape == (2, 4 * 4 * 192)


def test_encoder_batching():
    enc = ResidualEncoder(paper_vision())
    out = enc(torch.zeros(5, 3, 64, 64))
    assert out.shape == (5, 3072)


def test_context_features_shapes_and_determinism():
    torch.manual_seed(0)
    enc = ResidualEncoder(paper_vision())
    enc.eval()
    img = torch.rand(3, 3, 64, 64) - 0.5
    f1 = enc.context_features(img)
    f2 = enc.context_features(img)
    assert f1.mid.shape == (3, 96, 16, 16)
    assert f1.deep.shape == (3, 192, 8, 8)
    assert torch.equal(f1.mid, f2.mid) and torch.equal(f1.deep, f2.deep)


def test_encoder_rejects_wrong_side():
    enc = ResidualEncoder(tiny_vision())
    with pytest.raises(ValueError):
        enc(torch.zeros(1, 3, 16, 16))


# ---------------------------------------------------------------------- #
# cross-attention


def test_masking_keeps_exactly_quarter():
    for side in (4, 8, 16):
        fuse = CrossAttentionFuse(8, side, heads=2)
        assert fuse.kept_tokens() == (side * side) // 4


def test_zero_init_residual_identity_bit_exact():
    torch.manual_seed(0)
    fuse = CrossAttentionFuse(8, 4, heads=2)
    x = torch.randn(3, 8, 4, 4)
    z = torch.randn(3, 8, 4, 4)
    out = fuse(x, z, torch.Generator().manual_seed(0))
    assert torch.equal(out, torch.relu(x))


def test_token_permutation_invariance():
    torch.manual_seed(1)
    fuse = CrossAttentionFuse(8, 4, heads=2)
    # make the attention output nontrivial
    with torch.no_grad():
        for p in fuse.parameters():
            p.normal_(0, 0.3)
    fuse.eval()
    x = torch.randn(2, 8, 4, 4)
    z = torch.randn(2, 8, 4, 4)
    keep = torch.tensor([0, 5, 9, 14])
    perm = torch.tensor([9, 0, 14, 5])
    out1 = fuse(x, z, None, keep_idx=keep)
    out2 = fuse(x, z, None, keep_idx=perm)
    assert float((out1 - out2).abs().max()) < 1e-5


def test_heads_must_divide_channels():
    with pytest.raises(ConfigError):
        CrossAttentionFuse(6, 4, heads=4)


def test_fuse_shape_mismatch_raises():
    fuse = CrossAttentionFuse(8, 4, heads=2)
    with pytest.raises(ValueError):
        fuse(torch.zeros(1, 8, 4, 4), torch.zeros(1, 8, 2, 2), None)


# ---------------------------------------------------------------------- #
# decoder


def make_decoder(conditioning="cross"):
    torch.manual_seed(0)
    cfg = tiny_model()
    vis = tiny_vision(conditioning)
    enc = ResidualEncoder(vis)
    dec = ContextDecoder(cfg.feat_dim, vis)
    return cfg, vis, enc, dec


def test_decoder_output_shape():
    cfg, vis, enc, dec = make_decoder()
    feat = torch.randn(4, cfg.feat_dim)
    ctx = enc.context_features(torch.rand(4, 3, 8, 8) - 0.5)
    out = dec(feat, ctx, torch.Generator().manual_seed(0))
    assert out.shape == (4, 3, 8, 8)


def test_decoder_context_independent_at_zero_init():
    cfg, vis, enc, dec = make_decoder()
    enc.eval(), dec.eval()
    feat = torch.randn(2, cfg.feat_dim)
    c1 = enc.context_features(torch.rand(2, 3, 8, 8) - 0.5)
    c2 = enc.context_features(torch.rand(2, 3, 8, 8) - 0.5)
    rng1 = torch.Generator().manual_seed(0)
    rng2 = torch.Generator().manual_seed(0)
    assert torch.equal(dec(feat, c1, rng1), dec(feat, c2, rng2))


def test_decoder_requires_context_when_conditioned():
    cfg, vis, enc, dec = make_decoder()
    with pytest.raises(ValueError):
        dec(torch.randn(1, cfg.feat_dim), None, None)


def test_vanilla_decoder_ignores_context():
    cfg, vis, enc, dec = make_decoder("none")
    out = dec(torch.randn(2, cfg.feat_dim), None, None)
    assert out.shape == (2, 3, 8, 8)


def test_concat_decoder_runs():
    cfg, vis, enc, dec = make_decoder("concat")
    ctx = enc.context_features(torch.rand(2, 3, 8, 8) - 0.5)
    out = dec(torch.randn(2, cfg.feat_dim), ctx, None)
    assert out.shape == (2, 3, 8, 8)


# ---------------------------------------------------------------------- #
# context index and cutout


def test_sample_context_index_t1():
    rng = torch.Generator().manual_seed(0)
    assert all(sample_context_index(1, rng) == 1 for _ in range(10))


def test_sample_context_index_uniform():
    rng = torch.Generator().manual_seed(3)
    t = 25
    n = 100_000
    counts = np.zeros(t)
    for _ in range(n):
        counts[sample_context_index(t, rng) - 1] += 1
    bound = multinomial_3sigma_bound(n, 1.0 / t)
    assert np.all(np.abs(counts / n - 1.0 / t) < bound)


def test_sample_context_index_reproducible():
    a = [sample_context_index(10, torch.Generator().manual_seed(5))
         for _ in range(3)]
    assert len(set(a)) == 1


def test_sample_context_index_rejects_zero():
    with pytest.raises(ValueError):
        sample_context_index(0, torch.Generator())


def test_cutout_disabled_is_identity():
    frame = torch.rand(2, 3, 64, 64) - 0.5
    out = cutout(frame, CutoutParams(enabled=False), torch.Generator())
    assert torch.equal(out, frame)


def test_cutout_exact_pixel_count():
    params = CutoutParams(enabled=True, min_frac=0.5, max_frac=0.5)
    frame = torch.full((1, 3, 64, 64), 0.3)
    out = cutout(frame, params, torch.Generator().manual_seed(0))
    changed = (out != frame).any(dim=1)
    assert int(changed.sum()) == 32 * 32
    assert torch.all(out[(out != frame)] == 0.0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000),
       min_frac=st.floats(0.1, 0.5), span=st.floats(0.0, 0.4))
def test_cutout_stays_in_range(seed, min_frac, span):
    params = CutoutParams(enabled=True, min_frac=min_frac,
                          max_frac=min(0.9, min_frac + span))
    frame = torch.rand(2, 3, 32, 32) - 0.5
    out = cutout(frame, params, torch.Generator().manual_seed(seed))
    assert float(out.min()) >= -0.5 and float(out.max()) <= 0.5
