"""Correctness (n-gram overlap) and diversity (frequent word coverage) metrics."""
from .correctness import MetricReport, bleu, cider, evaluate, meteor_lite, rouge_l
from .diversity import CorpusStats, PosTag, build_stats, coverage_grid, frequent_word_coverage, lexicon_tagger
from .text import tokenize

__all__ = [
    "MetricReport",
    "bleu",
    "cider",
    "evaluate",
    "meteor_lite",
    "rouge_l",
    "CorpusStats",
    "PosTag",
    "build_stats",
    "coverage_grid",
    "frequent_word_coverage",
    "lexicon_tagger",
    "tokenize",
]
