import re
import unicodedata

import pytest

from causalspan.corpus import (
    CausalRelation,
    Role,
    Sentence,
    Span,
    plain_sentence,
    sentence_from_tagged,
)


def reference_token_texts(text):
    """Independent whitespace+punctuation splitter used as a tokenizer oracle."""
    out = []
    for m in re.finditer(r"\S+", text):
        chunk = m.group(0)
        left, right = [], []
        while chunk and unicodedata.category(chunk[0]).startswith("P"):
            left.append(chunk[0])
            chunk = chunk[1:]
        while chunk and unicodedata.category(chunk[-1]).startswith("P"):
            right.append(chunk[-1])
            chunk = chunk[:-1]
        out.extend(left)
        if chunk:
            out.append(chunk)
        out.extend(reversed(right))
    return out


def make_sentence(words, relations=(), sid="s"):
    """Build a sentence from plain words with given (role-keyed) token spans.

    relations: iterable of dicts {"cause": (lo, hi), "effect": (lo, hi),
    "signal": (lo, hi) or None}.
    """
    text = " ".join(words)
    sent = plain_sentence(sid, text, is_causal=bool(relations))
    assert sent.token_texts() == list(words), "fixture words must be single tokens"
    rels = []
    for spec in relations:
        signal = spec.get("signal")
        rels.append(
            CausalRelation(
                cause=Span(*spec["cause"], Role.CAUSE),
                effect=Span(*spec["effect"], Role.EFFECT),
                signal=Span(*signal, Role.SIGNAL) if signal else None,
            )
        )
    return Sentence(
        id=sid,
        text=sent.text,
        tokens=sent.tokens,
        relations=tuple(rels),
        is_causal=bool(rels),
    )


@pytest.fixture
def clash_sentence():
    """Two relations sharing "the clash" with opposite roles.

    Layer 0: cause "the clash" -> effect "one person dead and 17 injured".
    Layer 1: cause "the use of a village field" -> effect "the clash",
    signalled by "over".
    """
    words = (
        "Villagers said the clash over the use of a village field "
        "left one person dead and 17 injured ."
    ).split()
    return make_sentence(
        words,
        relations=[
            {"cause": (2, 4), "effect": (12, 18)},
            {"cause": (5, 11), "effect": (2, 4), "signal": (4, 5)},
        ],
        sid="clash",
    )
