"""Model specification, the shared model interface and the SRCMSA model."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .decoder import AttentiveDecoder, BeamHypothesis, DecoderConfig, DecoderContext
from .encoder import CMSAEncoder, EncoderConfig, EncoderOutput, masked_mean
from .errors import ConfigError
from .features import Batch, MultimodalClip, make_batch
from .layers import Module
from .tensor import Tensor

MODEL_KINDS = ("srcmsa", "s2vt", "imgd")


@dataclass
class BaselineConfig:
    kind: str = "s2vt"
    d_hidden: int = 128
    n_layers: int = 2

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ModelSpec:
    """Everything needed to rebuild a model: input sizes, sub-configs, init seed."""

    kind: str
    frame_dim: int
    n_objects: int
    n_subtitle_tokens: int
    vocab_size: int
    d_embed: int = 32
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    init_seed: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if isinstance(self.encoder, dict):
            self.encoder = EncoderConfig(**self.encoder)
        if isinstance(self.decoder, dict):
            self.decoder = DecoderConfig(**self.decoder)
        if isinstance(self.baseline, dict):
            self.baseline = BaselineConfig(**self.baseline)
        if self.kind != "srcmsa":
            self.baseline.kind = self.kind

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


class QGModel(Module):
    """Interface every question generator implements so one harness trains them all."""

    kind = ""

    def __init__(self, spec: ModelSpec) -> None:
        super().__init__()
        self.spec = spec

    def context(self, batch: Batch, rng: np.random.Generator | None = None) -> DecoderContext:
        raise NotImplementedError

    def logits(self, batch: Batch, rng: np.random.Generator | None = None) -> Tensor:
        """Teacher-forced logits ``(B, T, V)`` for the batch's gold questions."""
        return self.decoder.teacher_forced_logits(self.context(batch, rng), batch.question_in)

    def generate(self, clips: list[MultimodalClip], beam_size: int = 1, max_len: int = 30,
                 alpha: float = 0.0) -> list[list[int]]:
        if beam_size == 1:
            return self.decoder.greedy_decode(self.context(make_batch(clips)), max_len)
        return [self.beam(clip, beam_size, max_len, alpha).question for clip in clips]

    def beam(self, clip: MultimodalClip, beam_size: int = 5, max_len: int = 30, alpha: float = 0.0) -> BeamHypothesis:
        return self.decoder.beam_search(self.context(make_batch([clip])), beam_size, max_len, alpha)


class SRCMSAModel(QGModel):
    """Two-stream self-attention encoder, cross-modal fusion, attentive LSTM decoder."""

    kind = "srcmsa"

    def __init__(self, spec: ModelSpec) -> None:
        super().__init__(spec)
        rng = np.random.default_rng(spec.init_seed)
        enc = spec.encoder
        self.encoder = CMSAEncoder(enc, spec.frame_dim, spec.n_objects, spec.n_subtitle_tokens, spec.d_embed, rng)
        self.decoder = AttentiveDecoder(spec.vocab_size, enc.d_model, enc.d_model, spec.decoder, rng)

    def encode(self, batch: Batch, rng: np.random.Generator | None = None) -> EncoderOutput:
        return self.encoder.encode(batch, rng)

    def context(self, batch: Batch, rng: np.random.Generator | None = None) -> DecoderContext:
        out = self.encode(batch, rng)
        return DecoderContext(out.fused, out.frame_mask, masked_mean(out.fused, out.frame_mask))


def build_model(spec: ModelSpec) -> QGModel:
    from .baselines import IMGDModel, S2VTModel

    return {"srcmsa": SRCMSAModel, "s2vt": S2VTModel, "imgd": IMGDModel}[spec.kind](spec)
