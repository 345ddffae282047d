"""BLEU, ROUGE-L, CIDEr and a resource-free METEOR over tokenised text.

A corpus is a sequence of ``(hypothesis, references)`` pairs where the
hypothesis is a token list and references is a non-empty list of token lists.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Sequence

from .text import ngrams, tokenize

BLEU_EPSILON = 1e-9
ROUGE_BETA = 1.2
CIDER_SCALE = 10.0
_STEM_SUFFIXES = ("ing", "ed", "es", "s", "ly")


@dataclass
class EvalPair:
    hypothesis: list[str]
    references: list[list[str]]

    def __post_init__(self):
        if not self.references:
            raise ValueError("an evaluation pair needs at least one reference")


@dataclass
class MetricReport:
    """Corpus-level scores; bleu/rouge/meteor in [0, 1], cider >= 0."""

    bleu1: float
    bleu4: float
    rouge_l: float
    cider: float
    meteor: float

    def to_dict(self) -> dict:
        return asdict(self)

    def display(self) -> dict:
        """Scores x100, the scale of published caption tables."""
        return {k: 100.0 * v for k, v in asdict(self).items()}


def _pairs(corpus) -> list[EvalPair]:
    out = []
    for item in corpus:
        out.append(item if isinstance(item, EvalPair) else EvalPair(list(item[0]), [list(r) for r in item[1]]))
    return out


# ---------------------------------------------------------------- BLEU


def _closest_ref_len(hyp_len: int, refs) -> int:
    return min((abs(len(r) - hyp_len), len(r)) for r in refs)[1]


def modified_precision_counts(hyp, refs, n: int) -> tuple[int, int]:
    """(clipped matches, total hypothesis n-grams) for one pair."""
    counts = ngrams(hyp, n)
    max_ref: Counter = Counter()
    for r in refs:
        for g, c in ngrams(r, n).items():
            max_ref[g] = max(max_ref[g], c)
    return sum(min(c, max_ref[g]) for g, c in counts.items()), sum(counts.values())


def bleu(corpus, max_n: int = 4) -> float:
    """Corpus BLEU with uniform weights over orders 1..max_n.

    A zero match count becomes ``BLEU_EPSILON`` matches. Orders for which
    the corpus has no hypothesis n-grams at all are left out of the
    geometric mean. The brevity penalty uses the closest reference length
    (shorter one on ties).
    """
    if not 1 <= max_n <= 4:
        raise ValueError("max_n must be in 1..4")
    pairs = _pairs(corpus)
    if not pairs:
        raise ValueError("empty corpus")
    matched = [0] * max_n
    total = [0] * max_n
    hyp_len = ref_len = 0
    for p in pairs:
        hyp_len += len(p.hypothesis)
        ref_len += _closest_ref_len(len(p.hypothesis), p.references)
        for n in range(1, max_n + 1):
            m, t = modified_precision_counts(p.hypothesis, p.references, n)
            matched[n - 1] += m
            total[n - 1] += t
    logs = [math.log(max(m, BLEU_EPSILON) / t) for m, t in zip(matched, total) if t > 0]
    if not logs or hyp_len == 0:
        return 0.0
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(sum(logs) / len(logs))


# ---------------------------------------------------------------- ROUGE-L


def lcs_length(a: Sequence, b: Sequence) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_pair(hyp, ref, beta: float = ROUGE_BETA) -> float:
    if not hyp or not ref:
        raise ValueError("ROUGE-L needs non-empty hypothesis and reference")
    lcs = lcs_length(hyp, ref)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(hyp), lcs / len(ref)
    return (1 + beta ** 2) * p * r / (r + beta ** 2 * p)


def rouge_l(corpus, beta: float = ROUGE_BETA) -> float:
    """Mean over pairs of the best LCS F-measure across references."""
    pairs = _pairs(corpus)
    if not pairs:
        raise ValueError("empty corpus")
    return sum(max(rouge_l_pair(p.hypothesis, r, beta) for r in p.references) for p in pairs) / len(pairs)


# ---------------------------------------------------------------- CIDEr


def _tfidf(tokens, n: int, df: Counter, log_docs: float) -> dict:
    counts = ngrams(tokens, n)
    total = sum(counts.values())
    return {g: c / total * (log_docs - math.log(max(1, df[g]))) for g, c in counts.items()}


def _cosine(u: dict, v: dict) -> float:
    nu = math.sqrt(sum(x * x for x in u.values()))
    nv = math.sqrt(sum(x * x for x in v.values()))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return sum(x * v.get(g, 0.0) for g, x in u.items()) / (nu * nv)


def cider_scores(corpus, max_n: int = 4) -> list[float]:
    pairs = _pairs(corpus)
    if len(pairs) < 2:
        raise ValueError("CIDEr needs at least 2 corpus items to estimate document frequencies")
    log_docs = math.log(len(pairs))
    dfs = []
    for n in range(1, max_n + 1):
        df: Counter = Counter()
        for p in pairs:
            df.update(set().union(*(ngrams(r, n).keys() for r in p.references)))
        dfs.append(df)
    scores = []
    for p in pairs:
        per_n = []
        for n, df in zip(range(1, max_n + 1), dfs):
            h = _tfidf(p.hypothesis, n, df, log_docs)
            per_n.append(sum(_cosine(h, _tfidf(r, n, df, log_docs)) for r in p.references) / len(p.references))
        scores.append(CIDER_SCALE * sum(per_n) / max_n)
    return scores


def cider(corpus, max_n: int = 4) -> float:
    """tf-idf n-gram cosine (document frequencies from the references), x10, corpus mean."""
    scores = cider_scores(corpus, max_n)
    return sum(scores) / len(scores)


# ---------------------------------------------------------------- METEOR-lite


def stem(word: str) -> str:
    """Strip the first matching suffix of ing/ed/es/s/ly, keeping at least 3 characters."""
    for suf in _STEM_SUFFIXES:
        if word.endswith(suf) and len(word) - len(suf) >= 3:
            return word[: -len(suf)]
    return word


def best_alignment(hyp, ref) -> tuple[int, int]:
    """(matches, chunks) of the alignment with most matches, then fewest chunks.

    Two words match when they are equal or share a stem. A chunk is a run of
    matches adjacent in both the hypothesis and the reference.
    """
    hs = [stem(w) for w in hyp]
    rs = [stem(w) for w in ref]
    options = [tuple(j for j, r in enumerate(rs) if r == h or ref[j] == hyp[i]) for i, h in enumerate(hs)]

    @lru_cache(maxsize=None)
    def best(i: int, used: int, prev: int) -> tuple[int, int]:
        # returns (matches, -chunks) maximised lexicographically
        if i == len(hyp):
            return (0, 0)
        top = best(i + 1, used, -1)
        for j in options[i]:
            if used >> j & 1:
                continue
            m, neg_c = best(i + 1, used | (1 << j), j)
            cand = (m + 1, neg_c - (0 if prev >= 0 and j == prev + 1 else 1))
            if cand > top:
                top = cand
        return top

    m, neg_c = best(0, 0, -1)
    return m, -neg_c


def meteor_pair(hyp, ref) -> float:
    if not hyp or not ref:
        raise ValueError("METEOR needs non-empty hypothesis and reference")
    m, chunks = best_alignment(tuple(hyp), tuple(ref))
    if m == 0:
        return 0.0
    p, r = m / len(hyp), m / len(ref)
    f_mean = 10 * p * r / (r + 9 * p)
    return f_mean * (1 - 0.5 * (chunks / m) ** 3)


def meteor_lite(corpus) -> float:
    """Mean over pairs of the best score across references."""
    pairs = _pairs(corpus)
    if not pairs:
        raise ValueError("empty corpus")
    return sum(max(meteor_pair(p.hypothesis, r) for r in p.references) for p in pairs) / len(pairs)


def evaluate(corpus) -> MetricReport:
    pairs = _pairs(corpus)
    return MetricReport(
        bleu1=bleu(pairs, 1),
        bleu4=bleu(pairs, 4),
        rouge_l=rouge_l(pairs) if all(p.hypothesis for p in pairs) else _safe_mean(pairs, rouge_l_pair),
        cider=cider(pairs),
        meteor=meteor_lite(pairs) if all(p.hypothesis for p in pairs) else _safe_mean(pairs, meteor_pair),
    )


def _safe_mean(pairs, pair_fn) -> float:
    # generated questions can be empty; they score 0 rather than abort the corpus
    return sum(max(pair_fn(p.hypothesis, r) for r in p.references) if p.hypothesis else 0.0 for p in pairs) / len(pairs)


def read_corpus(hyp_path, ref_path) -> list[EvalPair]:
    """Pair a hypothesis file with a references file (tab-separated references per line)."""
    with open(hyp_path, encoding="utf-8") as f:
        hyps = f.read().splitlines()
    with open(ref_path, encoding="utf-8") as f:
        refs = f.read().splitlines()
    if len(hyps) != len(refs):
        raise ValueError(f"{hyp_path} has {len(hyps)} lines but {ref_path} has {len(refs)}")
    pairs = []
    for lineno, (h, r) in enumerate(zip(hyps, refs), 1):
        references = [tokenize(x) for x in r.split("\t") if x.strip()]
        if not references:
            raise ValueError(f"{ref_path}:{lineno}: no reference")
        pairs.append(EvalPair(tokenize(h), references))
    return pairs
