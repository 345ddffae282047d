from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from videoqg.metrics.diversity import (
    CATEGORIES,
    CorpusStats,
    PosTag,
    UndefinedMetricError,
    build_stats,
    coverage_grid,
    frequent_word_coverage,
    lexicon,
    lexicon_tagger,
    parse_tagged,
    top_k,
)

corpora = st.lists(st.lists(st.sampled_from("abcdefghij"), min_size=1, max_size=8), min_size=1, max_size=12)
percents = st.floats(0.01, 100.0, allow_nan=False)


def unigram_stats(counts):
    s = CorpusStats()
    s.tables["unigram"] = Counter(counts)
    return s


def test_counting_example():
    s = build_stats([["a", "b"], ["a"]], tagger=lambda t: PosTag.OTHER)
    assert s.tables["unigram"] == Counter(a=2, b=1)
    assert s.tables["bigram"] == Counter({("a", "b"): 1})
    assert not s.tables["noun"] and not s.tables["verb"]
    assert s.total("unigram") == 3


def test_single_token_sentences_have_no_bigrams():
    assert not build_stats([["a"], ["b"]]).tables["bigram"]


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        build_stats([])


def test_identical_tokens_cover_everything():
    s = unigram_stats({"a": 7})
    for p in (0.1, 1, 10, 100):
        assert frequent_word_coverage(s, "unigram", p) == 1.0


def test_uniform_distribution():
    s = unigram_stats({f"w{i:04d}": 3 for i in range(1000)})
    assert frequent_word_coverage(s, "unigram", 10) == pytest.approx(0.10, abs=1e-15)
    assert frequent_word_coverage(s, "unigram", 0.1) == pytest.approx(0.001, abs=1e-15)


def test_hand_ranked_example():
    s = unigram_stats({"a": 5, "b": 3, "c": 1, "d": 1})
    assert frequent_word_coverage(s, "unigram", 25) == 0.5
    assert frequent_word_coverage(s, "unigram", 50) == 0.8


def test_ties_break_lexicographically():
    s = unigram_stats({"b": 2, "a": 2, "c": 1})
    ref = unigram_stats({"c": 9, "a": 1})
    # top-1 of the reference is "c"
    assert frequent_word_coverage(s, "unigram", 50, reference=ref) == pytest.approx(1 / 5)


def test_k_is_exact_for_decimal_percents():
    assert top_k(0.1, 1000) == 1
    assert top_k(1, 1000) == 10
    assert top_k(10, 1) == 1
    with pytest.raises(ValueError):
        top_k(0, 10)


def test_empty_category_is_undefined():
    s = build_stats([["zxqv"]])
    with pytest.raises(UndefinedMetricError):
        frequent_word_coverage(s, "noun", 10)
    assert coverage_grid(s)["noun"][10.0] is None


@settings(max_examples=100, deadline=None)
@given(corpora, percents, percents)
def test_monotone_in_percent(corpus, p, q):
    s = build_stats(corpus)
    lo, hi = sorted((p, q))
    assert frequent_word_coverage(s, "unigram", lo) <= frequent_word_coverage(s, "unigram", hi)


@settings(max_examples=50, deadline=None)
@given(corpora)
def test_full_percent_is_one(corpus):
    s = build_stats(corpus)
    assert frequent_word_coverage(s, "unigram", 100) == 1.0
    if s.tables["bigram"]:
        assert frequent_word_coverage(s, "bigram", 100) == 1.0


@settings(max_examples=50, deadline=None)
@given(corpora, st.randoms(use_true_random=False))
def test_sentence_order_does_not_matter(corpus, rnd):
    shuffled = list(corpus)
    rnd.shuffle(shuffled)
    assert coverage_grid(build_stats(corpus)) == coverage_grid(build_stats(shuffled))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 20), min_size=2, max_size=10), percents)
def test_flatter_counts_never_cover_more(counts, p):
    # averaging the counts of the two largest types gives a majorised vector
    counts = sorted(counts, reverse=True)
    total = counts[0] + counts[1]
    flat = [total // 2, total - total // 2] + counts[2:]
    steep = unigram_stats({f"t{i:02d}": c for i, c in enumerate(counts)})
    flatter = unigram_stats({f"t{i:02d}": c for i, c in enumerate(flat)})
    assert frequent_word_coverage(flatter, "unigram", p) <= frequent_word_coverage(steep, "unigram", p)


def test_tagger_examples():
    assert lexicon_tagger("running") is PosTag.VERB
    assert lexicon_tagger("table") is PosTag.NOUN
    assert lexicon_tagger("zxqv") is PosTag.OTHER
    assert lexicon_tagger("happiness") is PosTag.NOUN
    assert lexicon_tagger("thing") is PosTag.NOUN
    assert lexicon_tagger("during") is PosTag.OTHER
    assert lexicon_tagger("ate") is PosTag.VERB


def test_lexicon_size():
    assert len(lexicon()) > 2000


def test_parse_tagged():
    tokens, tags = parse_tagged("Run/NOUN run/VERB the/DET")
    assert tokens == ["run", "run", "the"]
    assert tags == [PosTag.NOUN, PosTag.VERB, PosTag.OTHER]
    with pytest.raises(ValueError):
        parse_tagged("plain")


def test_one_token_tagged_corpus_is_fully_covered():
    tokens, tags = parse_tagged("run/NOUN run/VERB")
    grid = coverage_grid(build_stats([tokens], tags=[tags]))
    assert all(v == 1.0 for cat in CATEGORIES for v in grid[cat].values())
