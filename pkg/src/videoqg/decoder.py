"""Attentive LSTM question decoder with greedy and beam-search inference."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .layers import Linear, LSTMStack, Module, ModuleList
from .tensor import Parameter, Tensor
from .vocab import BOS, EOS, PAD


@dataclass
class DecoderConfig:
    d_word: int = 64
    d_dec: int = 128
    n_layers: int = 2

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DecoderContext:
    """What any encoder hands the decoder.

    ``memory`` is attended at every step, ``mask`` marks its real rows and
    ``summary`` seeds the initial LSTM state.
    """

    memory: Tensor
    mask: np.ndarray
    summary: Tensor

    def select(self, rows: np.ndarray) -> "DecoderContext":
        return DecoderContext(self.memory[rows], self.mask[rows], self.summary[rows])


@dataclass
class _Prepared:
    values: Tensor
    keys: Tensor
    mask: np.ndarray

    def select(self, rows: np.ndarray) -> "_Prepared":
        return _Prepared(self.values[rows], self.keys[rows], self.mask[rows])


class DecoderState:
    """Per-layer ``(h, c)`` pairs, each ``(B, d_dec)``."""

    def __init__(self, layers: list[tuple[Tensor, Tensor]]) -> None:
        self.layers = layers

    def as_array(self) -> np.ndarray:
        """``(n_layers, 2, B, d_dec)``."""
        return np.stack([np.stack([h.data, c.data]) for h, c in self.layers])

    def select(self, rows: np.ndarray) -> "DecoderState":
        return DecoderState([(h[rows], c[rows]) for h, c in self.layers])


@dataclass
class BeamHypothesis:
    tokens: tuple[int, ...]
    log_prob: float
    state: DecoderState | None = None
    finished: bool = False

    @property
    def question(self) -> list[int]:
        return [t for t in self.tokens if t != EOS]

    def score(self, alpha: float = 0.0) -> float:
        if alpha == 0.0:
            return self.log_prob
        return self.log_prob / max(len(self.tokens), 1) ** alpha


class AttentiveDecoder(Module):
    """Stacked LSTM over question tokens with bilinear attention over the memory.

    One step: embed the previous token, advance the LSTM stack, score each
    memory row as ``h . (W_att m_i)``, take the attention-weighted memory as
    context, combine ``tanh(W_c [h; context])`` and project to the vocabulary.
    """

    def __init__(self, vocab_size: int, d_memory: int, d_summary: int, config: DecoderConfig,
                 rng: np.random.Generator) -> None:
        super().__init__()
        self.config = config
        self.vocab_size = vocab_size
        self.embed = Parameter(rng.normal(0.0, 0.1, size=(vocab_size, config.d_word)))
        self.lstm = LSTMStack(config.d_word, config.d_dec, config.n_layers, rng)
        self.init_h = ModuleList([Linear(d_summary, config.d_dec, rng) for _ in range(config.n_layers)])
        self.init_c = ModuleList([Linear(d_summary, config.d_dec, rng) for _ in range(config.n_layers)])
        self.W_att = Parameter(rng.normal(0.0, 1.0 / np.sqrt(d_memory), size=(d_memory, config.d_dec)))
        self.combine = Linear(config.d_dec + d_memory, config.d_dec, rng)
        self.out = Linear(config.d_dec, vocab_size, rng)

    def init_state(self, ctx: DecoderContext) -> DecoderState:
        s = ctx.summary
        return DecoderState([(ph(s), pc(s)) for ph, pc in zip(self.init_h, self.init_c)])

    def prepare(self, ctx: DecoderContext) -> _Prepared:
        return _Prepared(ctx.memory, T.matmul(ctx.memory, self.W_att), ctx.mask)

    def _hidden_step(self, state: DecoderState, x: Tensor, mem: _Prepared):
        h, layers = self.lstm.step(x, state.layers)
        batch = h.shape[0]
        scores = T.matmul(T.reshape(h, (batch, 1, h.shape[1])), T.transpose(mem.keys))
        attn = T.softmax_lastdim(scores, mem.mask[:, None, :])
        ctx = T.reshape(T.matmul(attn, mem.values), (batch, mem.values.shape[2]))
        combined = T.tanh(self.combine(T.concat_lastdim([h, ctx])))
        return combined, DecoderState(layers), T.reshape(attn, (batch, attn.shape[2]))

    def decode_step(self, state: DecoderState, prev_ids, mem: _Prepared | DecoderContext):
        """Returns ``(logits (B, V), new_state, attention (B, n))``."""
        if isinstance(mem, DecoderContext):
            mem = self.prepare(mem)
        prev_ids = np.atleast_1d(np.asarray(prev_ids, dtype=np.int64))
        x = T.embedding_lookup(self.embed, prev_ids)
        combined, new_state, attn = self._hidden_step(state, x, mem)
        return self.out(combined), new_state, attn

    def teacher_forced_logits(self, ctx: DecoderContext, inputs: np.ndarray) -> Tensor:
        """Logits ``(B, T, V)`` when fed the gold previous tokens ``inputs (B, T)``."""
        mem = self.prepare(ctx)
        state = self.init_state(ctx)
        emb = T.embedding_lookup(self.embed, inputs)
        outs = []
        for t in range(inputs.shape[1]):
            combined, state, _ = self._hidden_step(state, emb[:, t], mem)
            outs.append(combined)
        return self.out(T.stack(outs, axis=1))

    def score_sequence(self, ctx: DecoderContext, tokens) -> float:
        """Sum of step log-probabilities of ``tokens`` for a single-clip context."""
        tokens = list(tokens)
        if not tokens:
            return 0.0
        with T.no_grad():
            logits = self.teacher_forced_logits(ctx, np.asarray([[BOS] + tokens[:-1]]))
            logp = T.log_softmax_lastdim(logits).data[0]
        return float(sum(logp[t, tok] for t, tok in enumerate(tokens)))

    def _step_log_probs(self, state, prev_ids, mem):
        logits, new_state, _ = self.decode_step(state, prev_ids, mem)
        logp = T.log_softmax_lastdim(logits).data.copy()
        logp[:, PAD] = -np.inf
        logp[:, BOS] = -np.inf
        return logp, new_state

    def greedy_decode(self, ctx: DecoderContext, max_len: int = 30) -> list[list[int]]:
        """Argmax decoding from BOS for every row; ties go to the lowest id."""
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        with T.no_grad():
            mem = self.prepare(ctx)
            state = self.init_state(ctx)
            batch = ctx.mask.shape[0]
            prev = np.full(batch, BOS, dtype=np.int64)
            done = np.zeros(batch, dtype=bool)
            out: list[list[int]] = [[] for _ in range(batch)]
            for _ in range(max_len):
                logp, state = self._step_log_probs(state, prev, mem)
                prev = logp.argmax(axis=1)
                for b in np.flatnonzero(~done):
                    if prev[b] == EOS:
                        done[b] = True
                    else:
                        out[b].append(int(prev[b]))
                if done.all():
                    break
        return out

    def beam_search(self, ctx: DecoderContext, beam_size: int = 5, max_len: int = 30,
                    alpha: float = 0.0) -> BeamHypothesis:
        """Beam search for a single-clip context.

        The live beam is refilled to ``beam_size`` non-finished hypotheses
        each step; a candidate ending in EOS that ranks inside the top
        ``beam_size`` is finished. Search stops once ``beam_size`` hypotheses
        finished, at ``max_len``, or (``alpha == 0``) when no live
        hypothesis can still beat the best finished one. Ties rank by
        lexicographic token ids.
        """
        if beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        finished: list[BeamHypothesis] = []
        with T.no_grad():
            mem = self.prepare(ctx)
            live = [BeamHypothesis((), 0.0)]
            state = self.init_state(ctx)
            for _ in range(max_len):
                prev = np.array([h.tokens[-1] if h.tokens else BOS for h in live], dtype=np.int64)
                logp, new_state = self._step_log_probs(state, prev, mem.select(np.zeros(len(live), dtype=np.int64)))
                width = min(2 * beam_size, logp.shape[1])
                cands = []
                for i, hyp in enumerate(live):
                    # stable sort keeps lower ids first among equal log-probs
                    for v in np.argsort(-logp[i], kind="stable")[:width]:
                        if np.isfinite(logp[i, v]):
                            cands.append((hyp.log_prob + float(logp[i, v]), hyp.tokens + (int(v),), i))
                cands.sort(key=lambda c: (-c[0], c[1]))
                next_live, parents = [], []
                for rank, (lp, toks, parent) in enumerate(cands):
                    if toks[-1] == EOS:
                        if rank < beam_size:
                            finished.append(BeamHypothesis(toks, lp, None, True))
                    elif len(next_live) < beam_size:
                        next_live.append(BeamHypothesis(toks, lp))
                        parents.append(parent)
                    if len(next_live) == beam_size and rank >= beam_size - 1:
                        break
                if len(finished) >= beam_size or not next_live:
                    break
                live = next_live
                state = new_state.select(np.asarray(parents, dtype=np.int64))
                if len(live[0].tokens) == max_len:
                    finished.extend(BeamHypothesis(h.tokens, h.log_prob, None, True) for h in live)
                    break
                if alpha == 0.0 and finished and max(h.log_prob for h in finished) > live[0].log_prob:
                    break
        finished.sort(key=lambda h: (-h.score(alpha), h.tokens))
        return finished[0]
