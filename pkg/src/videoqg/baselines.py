"""Recurrent comparison models: a frames-only seq2seq and a two-encoder multimodal model."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .decoder import AttentiveDecoder, DecoderContext
from .errors import ScenarioError
from .features import Batch
from .layers import Linear, LSTMStack
from .models import ModelSpec, QGModel
from .tensor import Parameter, Tensor


class S2VTModel(QGModel):
    """Stacked LSTM over projected frame features; the decoder attends over its outputs.

    Subtitles are ignored entirely.
    """

    kind = "s2vt"

    def __init__(self, spec: ModelSpec) -> None:
        super().__init__(spec)
        rng = np.random.default_rng(spec.init_seed)
        cfg = spec.baseline
        self.frame_in = Linear(spec.frame_dim, cfg.d_hidden, rng)
        self.frame_encoder = LSTMStack(cfg.d_hidden, cfg.d_hidden, cfg.n_layers, rng)
        self.decoder = AttentiveDecoder(spec.vocab_size, cfg.d_hidden, cfg.d_hidden, spec.decoder, rng)

    def context(self, batch: Batch, rng=None) -> DecoderContext:
        outputs, final = self.frame_encoder.run(self.frame_in(Tensor(batch.frames)), batch.frame_mask)
        return DecoderContext(outputs, batch.frame_mask, final[-1][0])


class IMGDModel(QGModel):
    """Separate LSTM encoders for frames and subtitles.

    The decoder's initial state is a learned projection of the two encoders'
    concatenated final hidden states; decoding attends over frame outputs.
    """

    kind = "imgd"

    def __init__(self, spec: ModelSpec) -> None:
        super().__init__(spec)
        rng = np.random.default_rng(spec.init_seed)
        cfg = spec.baseline
        self.frame_in = Linear(spec.frame_dim, cfg.d_hidden, rng)
        self.frame_encoder = LSTMStack(cfg.d_hidden, cfg.d_hidden, cfg.n_layers, rng)
        self.subtitle_table = Parameter(rng.normal(0.0, 1.0, size=(spec.n_subtitle_tokens, spec.d_embed)))
        self.subtitle_encoder = LSTMStack(spec.d_embed, cfg.d_hidden, cfg.n_layers, rng)
        self.decoder = AttentiveDecoder(spec.vocab_size, cfg.d_hidden, 2 * cfg.d_hidden, spec.decoder, rng)

    def context(self, batch: Batch, rng=None) -> DecoderContext:
        if not batch.has_subtitles:
            raise ScenarioError("IMGD needs a non-empty subtitle for every clip")
        outputs, final = self.frame_encoder.run(self.frame_in(Tensor(batch.frames)), batch.frame_mask)
        subs = T.embedding_lookup(self.subtitle_table, batch.subtitle_ids)
        _, sub_final = self.subtitle_encoder.run(subs, batch.subtitle_mask)
        summary = T.concat_lastdim([final[-1][0], sub_final[-1][0]])
        return DecoderContext(outputs, batch.frame_mask, summary)
