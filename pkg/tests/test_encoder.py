import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from videoqg import tensor as T
from videoqg.encoder import (
    CrossModalFusion,
    EncoderConfig,
    MultiHeadAttention,
    cmsa_fuse,
    multi_head_attention,
    positional_encoding,
    single_head_attention,
)
from videoqg.errors import ScenarioError
from videoqg.features import make_batch
from videoqg.tensor import Tensor


def all_weight_rows(maps):
    if isinstance(maps, Tensor):
        yield maps.data
    elif isinstance(maps, dict):
        for v in maps.values():
            yield from all_weight_rows(v)
    else:
        for v in maps:
            yield from all_weight_rows(v)


def test_single_head_known_values():
    Q = np.array([[1.0, 0.0]])
    K = np.array([[1.0, 0.0], [0.0, 1.0]])
    V = np.array([[1.0, 2.0], [3.0, 4.0]])
    out, w = single_head_attention(Tensor(Q), Tensor(K), Tensor(V))
    e = np.exp(1 / np.sqrt(2))
    expected = np.array([e, 1.0]) / (e + 1.0)
    np.testing.assert_allclose(w.data[0], expected, atol=1e-15)
    np.testing.assert_allclose(out.data[0], expected @ V, atol=1e-14)


def test_single_head_rejects_mismatched_dims():
    with pytest.raises(T.ShapeError):
        single_head_attention(np.ones((2, 3)), np.ones((2, 4)), np.ones((2, 4)))


def test_one_head_with_identity_projections_equals_single_head():
    rng = np.random.default_rng(0)
    d = 6
    mha = MultiHeadAttention(d, 1, rng)
    for p in (mha.heads[0].Wq, mha.heads[0].Wk, mha.heads[0].Wv, mha.Wo):
        p.data = np.eye(d)
    q, k = rng.normal(size=(2, 4, d)), rng.normal(size=(2, 5, d))
    mask = np.array([[True] * 5, [True, True, False, False, False]])
    a, _ = multi_head_attention(Tensor(q), Tensor(k), Tensor(k), mha, mask)
    b, _ = single_head_attention(Tensor(q), Tensor(k), Tensor(k), mask)
    np.testing.assert_allclose(a.data, b.data, rtol=0, atol=1e-12)


def test_masked_keys_get_zero_weight():
    rng = np.random.default_rng(1)
    mha = MultiHeadAttention(8, 2, rng)
    x = Tensor(rng.normal(size=(1, 4, 8)))
    mask = np.array([[True, True, False, True]])
    _, weights = mha(x, x, x, mask)
    for w in weights:
        assert np.all(w.data[..., 2] == 0.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12))
def test_cmsa_output_length_follows_frames(n_frame, n_sub):
    rng = np.random.default_rng(n_frame * 100 + n_sub)
    fusion = CrossModalFusion(8, 2, rng)
    out = cmsa_fuse(Tensor(rng.normal(size=(n_frame, 8))), Tensor(rng.normal(size=(n_sub, 8))), fusion)
    assert out.shape == (n_frame, 8)
    _, weights = fusion.attend(Tensor(rng.normal(size=(n_frame, 8))), Tensor(rng.normal(size=(n_sub, 8))))
    for w in weights:
        assert w.shape == (n_frame, n_sub)
        np.testing.assert_allclose(w.data.sum(axis=-1), 1.0, atol=1e-9)


def test_cmsa_rejects_empty_subtitles():
    fusion = CrossModalFusion(8, 2, np.random.default_rng(0))
    with pytest.raises(ScenarioError):
        cmsa_fuse(Tensor(np.ones((3, 8))), Tensor(np.ones((0, 8))), fusion)


def test_positional_encoding_values():
    pe = positional_encoding(3, 4)
    np.testing.assert_allclose(pe[0], [0.0, 1.0, 0.0, 1.0])
    np.testing.assert_allclose(pe[2], [np.sin(2), np.cos(2), np.sin(2 / 100), np.cos(2 / 100)])


def test_config_rejects_indivisible_heads():
    with pytest.raises(ValueError):
        EncoderConfig(d_model=10, n_heads=3)


def test_every_attention_row_in_the_encoder_sums_to_one(make_model, tiny_dataset):
    model = make_model()
    out = model.encode(make_batch(tiny_dataset.clips[:5]))
    rows = list(all_weight_rows(out.attn_maps))
    assert rows
    for w in rows:
        np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-9)
    assert out.fused.shape[:2] == out.frame_mask.shape


def test_padded_frames_do_not_change_real_outputs(make_model, tiny_dataset):
    model = make_model()
    clips = tiny_dataset.clips[:4]
    together = model.encode(make_batch(clips)).fused.data
    for b, c in enumerate(clips):
        alone = model.encode(make_batch([c])).fused.data[0]
        np.testing.assert_allclose(together[b, : c.n_frames], alone, atol=1e-10)


def test_full_model_requires_subtitles(make_model, tiny_dataset):
    model = make_model()
    clip = tiny_dataset.clips[0]
    silent = type(clip)(clip.clip_id, clip.frames, clip.objects, [], clip.question)
    with pytest.raises(ScenarioError):
        model.encode(make_batch([silent]))
    video_only = make_model(use_subtitles=False)
    assert video_only.encode(make_batch([silent])).sub_ctx is None
