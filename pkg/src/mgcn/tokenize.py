"""Whitespace/punctuation tokenizer shared by preprocessing and statistics."""

import re

PUNCTUATION = ".,;:!?()\"'"
PLACEHOLDER_RE = re.compile(r"^(MAIN|TOPIC)_\d+$")
_PUNCT_RE = re.compile("([" + re.escape(PUNCTUATION) + "])")


def is_placeholder(token):
    return PLACEHOLDER_RE.match(token) is not None


def tokenize(text):
    """Lowercase ``text``, split on whitespace and detach punctuation.

    Delexicalization placeholders (``MAIN_0``, ``TOPIC_3``) pass through
    untouched so tokenizing already-delexicalized text is idempotent.

    >>> tokenize("Bruno Mars.")
    ['bruno', 'mars', '.']
    """
    tokens = []
    for chunk in text.split():
        if is_placeholder(chunk):
            tokens.append(chunk)
            continue
        tokens.extend(_PUNCT_RE.sub(r" \1 ", chunk.lower()).split())
    return tokens
