"""Two-stream self-attention encoder with cross-modal fusion.

The video stream (frame features, optionally gated by object embeddings)
and the subtitle stream each run through their own stack of transformer
layers. The fusion step then lets every frame position query the subtitle
positions with multi-head attention.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .errors import ScenarioError
from .features import Batch, EmbeddingTables, pool_objects_batch, sre_fuse
from .layers import FeedForward, LayerNorm, Linear, Module, ModuleList, glorot
from .tensor import Parameter, ShapeError, Tensor


@dataclass
class EncoderConfig:
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    ffn_dim: int = 128
    use_subtitles: bool = True
    use_sre: bool = True
    dropout: float = 0.0

    def __post_init__(self):
        if self.n_heads < 1 or self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.n_layers < 1:
            raise ValueError("encoder needs at least one layer per stream")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EncoderOutput:
    fused: Tensor
    video_ctx: Tensor
    sub_ctx: Tensor | None
    frame_mask: np.ndarray
    subtitle_mask: np.ndarray | None
    attn_maps: dict[str, list] = field(default_factory=dict)


def positional_encoding(length: int, d_model: int) -> np.ndarray:
    """Sinusoidal position table, ``(length, d_model)``."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    pair = np.arange(0, d_model, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, pair / d_model)
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return pe


def _key_mask(mask: np.ndarray | None):
    # (B, n) -> (B, 1, n), broadcast over query rows
    if mask is None:
        return None
    return mask[..., None, :] if mask.ndim >= 2 else mask


def single_head_attention(Q: Tensor, K: Tensor, V: Tensor, key_mask: np.ndarray | None = None):
    """Scaled dot-product attention. Returns ``(output, weights)``."""
    Q, K, V = T.as_tensor(Q), T.as_tensor(K), T.as_tensor(V)
    if Q.shape[-1] != K.shape[-1]:
        raise ShapeError(f"query dim {Q.shape[-1]} != key dim {K.shape[-1]}")
    if K.shape[-2] != V.shape[-2]:
        raise ShapeError(f"{K.shape[-2]} keys but {V.shape[-2]} values")
    scores = T.scale(T.matmul(Q, T.transpose(K)), 1.0 / np.sqrt(Q.shape[-1]))
    weights = T.softmax_lastdim(scores, _key_mask(key_mask))
    return T.matmul(weights, V), weights


class AttentionHead(Module):
    def __init__(self, d_model: int, d_head: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.Wq = Parameter(glorot(rng, d_model, d_head))
        self.Wk = Parameter(glorot(rng, d_model, d_head))
        self.Wv = Parameter(glorot(rng, d_model, d_head))


class MultiHeadAttention(Module):
    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator) -> None:
        super().__init__()
        if n_heads < 1 or d_model % n_heads:
            raise ValueError(f"d_model={d_model} not divisible by n_heads={n_heads}")
        self.d_model = d_model
        self.n_heads = n_heads
        self.heads = ModuleList([AttentionHead(d_model, d_model // n_heads, rng) for _ in range(n_heads)])
        self.Wo = Parameter(glorot(rng, d_model, d_model))

    def __call__(self, q_in, k_in, v_in, key_mask=None):
        return multi_head_attention(q_in, k_in, v_in, self, key_mask)


def multi_head_attention(q_in, k_in, v_in, params: MultiHeadAttention, key_mask=None):
    """Project per head, attend, concatenate heads, project with ``Wo``.

    Returns ``(output, per-head weight tensors)``; output has the query's row count.
    """
    outs, weights = [], []
    for head in params.heads:
        out, w = single_head_attention(
            T.matmul(q_in, head.Wq), T.matmul(k_in, head.Wk), T.matmul(v_in, head.Wv), key_mask
        )
        outs.append(out)
        weights.append(w)
    return T.matmul(T.concat_lastdim(outs), params.Wo), weights


class EncoderLayer(Module):
    def __init__(self, d_model: int, n_heads: int, ffn_dim: int, rng: np.random.Generator, dropout: float = 0.0):
        super().__init__()
        self.attn = MultiHeadAttention(d_model, n_heads, rng)
        self.norm1 = LayerNorm(d_model)
        self.ffn = FeedForward(d_model, ffn_dim, rng)
        self.norm2 = LayerNorm(d_model)
        self.dropout = dropout

    def __call__(self, x: Tensor, key_mask=None, rng=None):
        a, weights = self.attn(x, x, x, key_mask)
        y = self.norm1(x + T.dropout(a, self.dropout, rng))
        z = self.norm2(y + T.dropout(self.ffn(y), self.dropout, rng))
        return z, weights


class SelfAttentionStack(Module):
    """Positional encoding once at the input, then ``n_layers`` transformer layers."""

    def __init__(self, d_model: int, n_heads: int, n_layers: int, ffn_dim: int, rng: np.random.Generator,
                 dropout: float = 0.0) -> None:
        super().__init__()
        self.d_model = d_model
        self.layers = ModuleList([EncoderLayer(d_model, n_heads, ffn_dim, rng, dropout) for _ in range(n_layers)])

    def __call__(self, x: Tensor, key_mask=None, rng=None):
        x = x + positional_encoding(x.shape[-2], self.d_model)
        maps = []
        for layer in self.layers:
            x, w = layer(x, key_mask, rng)
            maps.append(w)
        return x, maps


class CrossModalFusion(Module):
    """Frame positions query the subtitle positions; residual + layer norm."""

    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator, dropout: float = 0.0) -> None:
        super().__init__()
        self.attn = MultiHeadAttention(d_model, n_heads, rng)
        self.norm = LayerNorm(d_model)
        self.dropout = dropout

    def attend(self, video_ctx: Tensor, sub_ctx: Tensor, sub_mask=None):
        """Pre-residual cross-attention output and per-head weights."""
        if sub_ctx.shape[-2] == 0 or (sub_mask is not None and not sub_mask.any(axis=-1).all()):
            raise ScenarioError("cross-modal fusion needs at least one subtitle token per clip")
        return self.attn(video_ctx, sub_ctx, sub_ctx, sub_mask)

    def __call__(self, video_ctx: Tensor, sub_ctx: Tensor, sub_mask=None, rng=None):
        a, weights = self.attend(video_ctx, sub_ctx, sub_mask)
        return self.norm(video_ctx + T.dropout(a, self.dropout, rng)), weights


def cmsa_fuse(video_ctx: Tensor, sub_ctx: Tensor, params: CrossModalFusion, sub_mask=None) -> Tensor:
    return params(video_ctx, sub_ctx, sub_mask)[0]


class CMSAEncoder(Module):
    def __init__(self, config: EncoderConfig, frame_dim: int, n_objects: int, n_subtitle_tokens: int,
                 d_embed: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.config = config
        c = config
        self.tables = EmbeddingTables(n_objects, n_subtitle_tokens, d_embed, rng)
        self.W_proj = Parameter(glorot(rng, frame_dim, d_embed))
        self.video_in = Linear(d_embed, c.d_model, rng)
        self.video_stack = SelfAttentionStack(c.d_model, c.n_heads, c.n_layers, c.ffn_dim, rng, c.dropout)
        if c.use_subtitles:
            self.sub_in = Linear(d_embed, c.d_model, rng)
            self.sub_stack = SelfAttentionStack(c.d_model, c.n_heads, c.n_layers, c.ffn_dim, rng, c.dropout)
            self.fusion = CrossModalFusion(c.d_model, c.n_heads, rng, c.dropout)

    def encode(self, batch: Batch, rng: np.random.Generator | None = None) -> EncoderOutput:
        frames = Tensor(batch.frames)
        if self.config.use_sre:
            src = sre_fuse(frames, pool_objects_batch(batch, self.tables), self.W_proj)
        else:
            src = T.matmul(frames, self.W_proj)
        video_ctx, video_maps = self.video_stack(self.video_in(src), batch.frame_mask, rng)
        maps = {"video": video_maps}
        if not self.config.use_subtitles:
            return EncoderOutput(video_ctx, video_ctx, None, batch.frame_mask, None, maps)
        if not batch.has_subtitles:
            raise ScenarioError("this encoder configuration needs subtitles for every clip")
        subs = T.embedding_lookup(self.tables.subtitle_table, batch.subtitle_ids)
        sub_ctx, sub_maps = self.sub_stack(self.sub_in(subs), batch.subtitle_mask, rng)
        fused, cross_maps = self.fusion(video_ctx, sub_ctx, batch.subtitle_mask, rng)
        maps["subtitle"] = sub_maps
        maps["cross"] = [cross_maps]
        return EncoderOutput(fused, video_ctx, sub_ctx, batch.frame_mask, batch.subtitle_mask, maps)


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over real rows of a padded ``(B, n, d)`` tensor, ``(B, d)``."""
    w = mask.astype(np.float64)
    w = w / w.sum(axis=1, keepdims=True)
    out = T.matmul(Tensor(w[:, None, :]), x)
    return T.reshape(out, (x.shape[0], x.shape[2]))
