"""Model input streams: frame features, pooled object embeddings, subtitles.

Also holds the semantic-rich fusion of frames with objects and the padding
logic that turns a list of clips into one batch.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .layers import Module
from .tensor import Parameter, ShapeError, Tensor
from .vocab import BOS, EOS, PAD

NO_OBJECT = 0


@dataclass
class MultimodalClip:
    clip_id: str
    frames: np.ndarray
    objects: list[list[int]]
    subtitle: list[int]
    question: list[int] = field(default_factory=list)

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    def validate(self, n_object_vocab: int, n_subtitle_vocab: int, n_question_vocab: int | None = None) -> None:
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ValueError(f"{self.clip_id}: frames must be (n_frame >= 1, d), got {self.frames.shape}")
        if len(self.objects) != self.n_frames:
            raise ValueError(f"{self.clip_id}: {len(self.objects)} object lists for {self.n_frames} frames")
        for frame_objs in self.objects:
            for oid in frame_objs:
                if not 0 <= oid < n_object_vocab:
                    raise IndexError(f"{self.clip_id}: object id {oid} outside vocabulary of {n_object_vocab}")
        for tid in self.subtitle:
            if not 0 <= tid < n_subtitle_vocab:
                raise IndexError(f"{self.clip_id}: subtitle id {tid} outside vocabulary of {n_subtitle_vocab}")
        if n_question_vocab is not None:
            for qid in self.question:
                if not 0 <= qid < n_question_vocab:
                    raise IndexError(f"{self.clip_id}: question id {qid} outside vocabulary of {n_question_vocab}")


def filter_short_clips(clips: list[MultimodalClip], min_frames: int = 8) -> list[MultimodalClip]:
    return [c for c in clips if c.n_frames >= min_frames]


class EmbeddingTables(Module):
    """Learned object and subtitle embeddings. Object row 0 is the no-object embedding."""

    def __init__(self, n_objects: int, n_subtitle_tokens: int, d_embed: int, rng: np.random.Generator) -> None:
        super().__init__()
        # centred on ones so the elementwise product starts close to the plain projected frame
        self.object_table = Parameter(1.0 + rng.normal(0.0, 0.1, size=(n_objects, d_embed)))
        self.subtitle_table = Parameter(rng.normal(0.0, 1.0, size=(n_subtitle_tokens, d_embed)))

    @property
    def d_embed(self) -> int:
        return self.object_table.shape[1]


def object_pooling(object_lists: list[list[list[int]]], n_frames: int) -> tuple[np.ndarray, np.ndarray]:
    """Flattened object ids and the ``(B * n_frames, n_ids)`` averaging matrix.

    Frames without objects, including padded frames, average over the single
    no-object id.
    """
    ids: list[int] = []
    rows: list[int] = []
    weights: list[float] = []
    for b, frames in enumerate(object_lists):
        for i in range(n_frames):
            objs = frames[i] if i < len(frames) and frames[i] else [NO_OBJECT]
            w = 1.0 / len(objs)
            for oid in objs:
                rows.append(b * n_frames + i)
                ids.append(oid)
                weights.append(w)
    pool = np.zeros((len(object_lists) * n_frames, len(ids)))
    pool[rows, np.arange(len(ids))] = weights
    return np.asarray(ids, dtype=np.int64), pool


def pool_objects(clip: MultimodalClip, tables: EmbeddingTables) -> Tensor:
    """Per-frame mean of object embeddings, ``(n_frame, d_e)``."""
    ids, pool = object_pooling([clip.objects], clip.n_frames)
    return T.matmul(Tensor(pool), T.embedding_lookup(tables.object_table, ids))


def sre_fuse(frames: Tensor, object_embs: Tensor, W_proj: Tensor) -> Tensor:
    """Project frame features into the embedding space and gate them by the object embedding."""
    frames, object_embs = T.as_tensor(frames), T.as_tensor(object_embs)
    if frames.shape[-1] != W_proj.shape[0] or object_embs.shape != frames.shape[:-1] + (W_proj.shape[1],):
        raise ShapeError(
            f"sre_fuse shapes: frames {frames.shape}, objects {object_embs.shape}, W_proj {W_proj.shape}"
        )
    return T.matmul(frames, W_proj) * object_embs


def embed_subtitles(clip: MultimodalClip, tables: EmbeddingTables) -> Tensor:
    return T.embedding_lookup(tables.subtitle_table, np.asarray(clip.subtitle, dtype=np.int64))


@dataclass
class Batch:
    """Padded arrays for a list of clips; masks are True on real positions."""

    clip_ids: list[str]
    frames: np.ndarray
    frame_mask: np.ndarray
    object_ids: np.ndarray
    object_pool: np.ndarray
    subtitle_ids: np.ndarray
    subtitle_mask: np.ndarray
    question_in: np.ndarray
    question_out: np.ndarray
    question_mask: np.ndarray

    @property
    def size(self) -> int:
        return len(self.clip_ids)

    @property
    def has_subtitles(self) -> bool:
        return bool(self.subtitle_mask.any(axis=1).all()) if self.size else False


def make_batch(clips: list[MultimodalClip]) -> Batch:
    if not clips:
        raise ValueError("cannot batch zero clips")
    n_batch = len(clips)
    n_frames = max(c.n_frames for c in clips)
    d_frame = clips[0].frames.shape[1]
    frames = np.zeros((n_batch, n_frames, d_frame))
    frame_mask = np.zeros((n_batch, n_frames), dtype=bool)
    for b, c in enumerate(clips):
        frames[b, : c.n_frames] = c.frames
        frame_mask[b, : c.n_frames] = True
    object_ids, object_pool = object_pooling([c.objects for c in clips], n_frames)

    n_sub = max(len(c.subtitle) for c in clips)
    subtitle_ids = np.full((n_batch, n_sub), PAD, dtype=np.int64)
    subtitle_mask = np.zeros((n_batch, n_sub), dtype=bool)
    for b, c in enumerate(clips):
        subtitle_ids[b, : len(c.subtitle)] = c.subtitle
        subtitle_mask[b, : len(c.subtitle)] = True

    n_q = max(len(c.question) for c in clips)
    length = n_q + 1 if n_q else 0
    question_in = np.full((n_batch, length), PAD, dtype=np.int64)
    question_out = np.full((n_batch, length), PAD, dtype=np.int64)
    question_mask = np.zeros((n_batch, length), dtype=bool)
    if length:
        for b, c in enumerate(clips):
            q = list(c.question)
            question_in[b, : len(q) + 1] = [BOS] + q
            question_out[b, : len(q) + 1] = q + [EOS]
            question_mask[b, : len(q) + 1] = True
    return Batch(
        clip_ids=[c.clip_id for c in clips],
        frames=frames,
        frame_mask=frame_mask,
        object_ids=object_ids,
        object_pool=object_pool,
        subtitle_ids=subtitle_ids,
        subtitle_mask=subtitle_mask,
        question_in=question_in,
        question_out=question_out,
        question_mask=question_mask,
    )


def pool_objects_batch(batch: Batch, tables: EmbeddingTables) -> Tensor:
    """Batched :func:`pool_objects`, ``(B, n_frame, d_e)``."""
    n_batch, n_frames = batch.frame_mask.shape
    pooled = T.matmul(Tensor(batch.object_pool), T.embedding_lookup(tables.object_table, batch.object_ids))
    return T.reshape(pooled, (n_batch, n_frames, tables.d_embed))
