"""Frequent word coverage: how much of a corpus the most frequent word types account for.

Types are ranked by descending count within a category (unigram, bigram,
noun, verb), ties lexicographic. Coverage at ``p`` percent is the share of
all occurrences held by the top ``ceil(p / 100 * n_types)`` types (at least
one). Lower coverage means a more diverse generator.
"""
from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from typing import Callable, Iterable, Sequence

CATEGORIES = ("unigram", "bigram", "noun", "verb")
DEFAULT_PERCENTS = (0.1, 1.0, 10.0)


class PosTag(enum.Enum):
    NOUN = "NOUN"
    VERB = "VERB"
    OTHER = "OTHER"


class UndefinedMetricError(ValueError):
    """Coverage asked for a category with no occurrences."""


@dataclass
class CorpusStats:
    tables: dict[str, Counter] = field(default_factory=lambda: {c: Counter() for c in CATEGORIES})

    def total(self, category: str) -> int:
        return sum(self.table(category).values())

    def table(self, category: str) -> Counter:
        if category not in self.tables:
            raise KeyError(f"unknown category {category!r}; expected one of {CATEGORIES}")
        return self.tables[category]


Tagger = Callable[[str], PosTag]


def build_stats(corpus: Sequence[Sequence[str]], tagger: Tagger | None = None,
                tags: Sequence[Sequence[PosTag]] | None = None) -> CorpusStats:
    """Count unigrams, within-sentence bigrams, and tagged nouns and verbs.

    ``tags`` (parallel to ``corpus``) overrides ``tagger`` for pre-tagged input.
    """
    if not corpus:
        raise ValueError("empty corpus")
    if tagger is None and tags is None:
        tagger = lexicon_tagger
    stats = CorpusStats()
    uni, bi = stats.tables["unigram"], stats.tables["bigram"]
    for i, sent in enumerate(corpus):
        uni.update(sent)
        bi.update(zip(sent, sent[1:]))
        sent_tags = tags[i] if tags is not None else [tagger(tok) for tok in sent]
        for tok, tag in zip(sent, sent_tags):
            if tag is PosTag.NOUN:
                stats.tables["noun"][tok] += 1
            elif tag is PosTag.VERB:
                stats.tables["verb"][tok] += 1
    return stats


def ranked_types(table: Counter) -> list:
    return sorted(table, key=lambda t: (-table[t], t))


def top_k(p: float, n_types: int) -> int:
    if not 0 < p <= 100:
        raise ValueError(f"percent must be in (0, 100], got {p}")
    # Fraction(str(p)) keeps 0.1 exactly one tenth, so k does not drift on float error
    return max(1, math.ceil(Fraction(str(p)) / 100 * n_types))


def frequent_word_coverage(stats: CorpusStats, category: str, p: float,
                           reference: CorpusStats | None = None) -> float:
    """Share of ``category`` occurrences covered by the top ``p`` percent of types.

    With ``reference`` the ranking (and the number of types) comes from
    that corpus instead, e.g. the training questions, while occurrences are
    still counted in ``stats``.
    """
    table = stats.table(category)
    total = sum(table.values())
    if total == 0:
        raise UndefinedMetricError(f"no {category} occurrences: coverage is undefined")
    ranking_table = table
    if reference is not None:
        ranking_table = reference.table(category)
        if not ranking_table:
            raise UndefinedMetricError(f"reference corpus has no {category} occurrences")
    ranking = ranked_types(ranking_table)
    k = top_k(p, len(ranking))
    return sum(table[t] for t in ranking[:k]) / total


def coverage_grid(stats: CorpusStats, percents: Iterable[float] = DEFAULT_PERCENTS,
                  reference: CorpusStats | None = None) -> dict[str, dict[float, float | None]]:
    """``category -> percent -> coverage``; ``None`` where a category is empty."""
    grid: dict[str, dict[float, float | None]] = {}
    for cat in CATEGORIES:
        row: dict[float, float | None] = {}
        for p in percents:
            try:
                row[p] = frequent_word_coverage(stats, cat, p, reference)
            except UndefinedMetricError:
                row[p] = None
        grid[cat] = row
    return grid


def format_grid(grid: dict[str, dict[float, float | None]], label: str = "") -> str:
    """Aligned table, categories as column groups and percents as sub-columns, values x100."""
    percents = list(next(iter(grid.values())).keys())
    header = ["", *[f"{cat} {p:g}%" for cat in grid for p in percents]]
    row = [label, *["n/a" if v is None else f"{100 * v:.1f}" for cat in grid for v in grid[cat].values()]]
    widths = [max(len(a), len(b)) for a, b in zip(header, row)]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(line, widths)) for line in (header, row))


# ---------------------------------------------------------------- tagging


def _inflect_noun(w: str) -> list[str]:
    if w.endswith(("s", "x", "z", "ch", "sh")):
        return [w, w + "es"]
    if w.endswith("y") and w[-2:-1] not in "aeiou":
        return [w, w[:-1] + "ies"]
    return [w, w + "s"]


def _inflect_verb(w: str) -> tuple[list[str], list[str]]:
    """(base and third person forms, -ing and -ed forms)."""
    if w.endswith(("s", "x", "z", "ch", "sh")):
        third = w + "es"
    elif w.endswith("y") and w[-2:-1] not in "aeiou":
        third = w[:-1] + "ies"
    else:
        third = w + "s"
    if w.endswith("ie"):
        ing = w[:-2] + "ying"
    elif w.endswith("e") and not w.endswith(("ee", "ye", "oe")):
        ing = w[:-1] + "ing"
    else:
        ing = w + "ing"
    if w.endswith("e"):
        past = w + "d"
    elif w.endswith("y") and w[-2:-1] not in "aeiou":
        past = w[:-1] + "ied"
    else:
        past = w + "ed"
    forms = [ing, past]
    # doubled final consonant (stop -> stopping) for short consonant-vowel-consonant verbs
    if len(w) <= 4 and w[-1] not in "aeiouwxy" and w[-2] in "aeiou" and w[-3:-2] not in "aeiou":
        forms += [w + w[-1] + "ing", w + w[-1] + "ed"]
    return [w, third], forms


@lru_cache(maxsize=1)
def lexicon() -> dict[str, PosTag]:
    """Surface form -> tag from the bundled lemma lists.

    Precedence: closed-class words, then verb -ing/-ed/past forms, then
    nouns, then remaining verb forms.
    """
    text = resources.files(__package__).joinpath("lexicon.txt").read_text(encoding="utf-8")
    nouns: set[str] = set()
    verb_base: set[str] = set()
    verb_derived: set[str] = set()
    other: set[str] = set()
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        kind, *words = line.split()
        if kind == "NOUN":
            for w in words:
                nouns.update(_inflect_noun(w))
        elif kind == "VERB":
            for w in words:
                base, derived = _inflect_verb(w)
                verb_base.update(base)
                verb_derived.update(derived)
        elif kind == "IRREGULAR":
            lemma, past, participle = words
            base, derived = _inflect_verb(lemma)
            verb_base.update(base)
            verb_derived.update([derived[0], past, participle])
        elif kind == "OTHER":
            other.update(words)
        else:
            raise ValueError(f"bad lexicon line: {line!r}")
    table = {w: PosTag.VERB for w in verb_base}
    table.update({w: PosTag.NOUN for w in nouns})
    table.update({w: PosTag.VERB for w in verb_derived})
    table.update({w: PosTag.OTHER for w in other})
    return table


_SUFFIX_RULES = (("ing", PosTag.VERB), ("ed", PosTag.VERB), ("tion", PosTag.NOUN), ("ness", PosTag.NOUN))


def lexicon_tagger(token: str) -> PosTag:
    """Lexicon lookup, then suffix rules (-ing/-ed verb, -tion/-ness noun), else OTHER."""
    token = token.lower()
    tag = lexicon().get(token)
    if tag is not None:
        return tag
    for suffix, suffix_tag in _SUFFIX_RULES:
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            return suffix_tag
    return PosTag.OTHER


def parse_tagged(line: str) -> tuple[list[str], list[PosTag]]:
    """Split a ``token/TAG`` line; unknown tag names count as OTHER."""
    tokens, tags = [], []
    for item in line.split():
        tok, sep, tag = item.rpartition("/")
        if not sep or not tok:
            raise ValueError(f"expected token/TAG, got {item!r}")
        tokens.append(tok.lower())
        tags.append(PosTag.__members__.get(tag.upper(), PosTag.OTHER))
    return tokens, tags
