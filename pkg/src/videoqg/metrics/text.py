"""Tokenisation shared by every metric.

Version 1: lowercase, put spaces around every ASCII punctuation character,
split on whitespace. Changing this changes every reported score, so bump
``TOKENIZER_VERSION`` with it.
"""
from __future__ import annotations

import re
import string
from collections import Counter

TOKENIZER_VERSION = 1
_PUNCT = re.compile("([" + re.escape(string.punctuation) + "])")


def tokenize(text: str) -> list[str]:
    return _PUNCT.sub(r" \1 ", text.lower()).split()


def ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))
