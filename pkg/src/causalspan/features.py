"""Sparse token features for the sequence tagger.

Template strings are interned into integer ids by a FeatureMap.  Once the
map is frozen (after the first pass over training data) unknown templates
simply produce no feature, so dev/test sentences cannot grow the model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .corpus import Sentence
from .errors import DimensionMismatch


def word_shape(text: str) -> str:
    """Case/digit pattern: "1.46" -> "d.dd", "Beijing" -> "Xxxxxxx"."""
    out = []
    for ch in text:
        if ch.isupper():
            out.append("X")
        elif ch.islower():
            out.append("x")
        elif ch.isdigit():
            out.append("d")
        else:
            out.append(ch)
    return "".join(out)


def feature_templates(words: Sequence[str], position: int) -> list[str]:
    """Instantiate the feature templates for one token position."""
    if not (0 <= position < len(words)):
        raise IndexError(f"position {position} out of range")
    w = words[position]
    lw = w.lower()
    feats = [f"w={w}", f"lw={lw}", f"shape={word_shape(w)}"]
    for n in (1, 2, 3):
        if len(lw) >= n:
            feats.append(f"pre{n}={lw[:n]}")
            feats.append(f"suf{n}={lw[-n:]}")
    if position == 0:
        feats.append("first")
    if position == len(words) - 1:
        feats.append("last")
    for off in (-2, -1, 1, 2):
        j = position + off
        if 0 <= j < len(words):
            feats.append(f"c[{off:+d}]={words[j].lower()}")
    if position > 0:
        feats.append(f"bg[-1]={words[position - 1].lower()}_{lw}")
    if position < len(words) - 1:
        feats.append(f"bg[+1]={lw}_{words[position + 1].lower()}")
    return feats


@dataclass
class FeatureMap:
    """Injective template-string -> id mapping with a freeze switch."""

    _index: dict[str, int] = field(default_factory=dict)
    frozen: bool = False

    def __len__(self) -> int:
        return len(self._index)

    def intern(self, template: str) -> Optional[int]:
        fid = self._index.get(template)
        if fid is None and not self.frozen:
            fid = len(self._index)
            self._index[template] = fid
        return fid

    def freeze(self) -> None:
        self.frozen = True

    def templates(self) -> list[str]:
        """Template strings in id order (for serialization)."""
        out = [""] * len(self._index)
        for template, fid in self._index.items():
            out[fid] = template
        return out

    @classmethod
    def from_templates(cls, templates: Sequence[str],
                       frozen: bool = True) -> "FeatureMap":
        return cls(_index={t: i for i, t in enumerate(templates)}, frozen=frozen)


@dataclass(frozen=True)
class FeatureVector:
    """Sorted sparse binary feature ids plus an optional dense block."""

    indices: tuple[int, ...]
    dense: Optional[np.ndarray] = None


def extract_features(fm: FeatureMap, sentence: Sentence, position: int,
                     dense_row: Optional[np.ndarray] = None) -> FeatureVector:
    words = sentence.token_texts()
    ids = {fid for t in feature_templates(words, position)
           if (fid := fm.intern(t)) is not None}
    return FeatureVector(indices=tuple(sorted(ids)), dense=dense_row)


def featurize_sentence(fm: FeatureMap, sentence: Sentence,
                       dense_rows: Optional[np.ndarray] = None
                       ) -> list[FeatureVector]:
    """Feature vectors for every token; dense_rows is [n_tokens, dim]."""
    if dense_rows is not None and len(dense_rows) != len(sentence.tokens):
        raise DimensionMismatch(
            f"sentence {sentence.id}: {len(sentence.tokens)} tokens but "
            f"{len(dense_rows)} dense vectors"
        )
    return [
        extract_features(
            fm, sentence, t,
            dense_rows[t].astype(np.float64) if dense_rows is not None else None,
        )
        for t in range(len(sentence.tokens))
    ]
