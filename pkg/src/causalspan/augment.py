"""Synthetic training data: lexical augmentation, oversampling, templates.

Four classic lexical operations (synonym replacement, random insertion,
random swap, random deletion) work on plain token lists for the sentence
classifier.  Span-annotated data goes through a tag-protected variant
where the role markers are atomic tokens that are never replaced, moved,
or deleted; every augmented sample is re-parsed and dropped if invalid.
Multi-relation sentences can be oversampled with replacement, and a
template generator produces fully annotated cause-signal-effect /
effect-signal-cause sentences.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import (
    Corpus,
    Sentence,
    parse_annotated,
    plain_sentence,
    render_annotated,
    sentence_from_tagged,
)
from .errors import ConsistencyError, EmptyLexicon, MalformedAnnotation, \
    NoMultiRelationInstances, OverlapError

logger = logging.getLogger(__name__)

_MARKER_RE = re.compile(r"</?(?:ARG0|ARG1|SIG0)>")


@dataclass(frozen=True)
class EdaConfig:
    alpha_sr: float = 0.4
    alpha_ri: float = 0.1
    alpha_rs: float = 0.6
    p_rd: float = 0.0
    n_aug: int = 4
    seed: int = 0

    def __post_init__(self):
        for name in ("alpha_sr", "alpha_ri", "alpha_rs", "p_rd"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.n_aug < 0:
            raise ValueError("n_aug must be >= 0")


def span_eda_config(seed: int = 0) -> EdaConfig:
    """Defaults for annotation-aware augmentation: sr and ri only."""
    return EdaConfig(alpha_sr=0.4, alpha_ri=0.5, alpha_rs=0.0, p_rd=0.0,
                     n_aug=1, seed=seed)


def _data_text(name: str) -> str:
    return resources.files("causalspan.data").joinpath(name).read_text("utf-8")


def load_stopwords(path=None) -> set[str]:
    text = Path(path).read_text("utf-8") if path else _data_text("stopwords.txt")
    return {line.strip().lower() for line in text.splitlines() if line.strip()}


def load_synonym_lexicon(path=None) -> dict[str, list[str]]:
    """TSV lexicon: word<TAB>synonym1,synonym2,...  No word maps to itself."""
    text = Path(path).read_text("utf-8") if path else _data_text("synonyms.tsv")
    lexicon: dict[str, list[str]] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        word, _, syns = line.partition("\t")
        word = word.strip().lower()
        entries = [s.strip() for s in syns.split(",")
                   if s.strip() and s.strip().lower() != word]
        if entries:
            lexicon[word] = entries
    return lexicon


@dataclass(frozen=True)
class SlotLexicons:
    cause_phrases: tuple[str, ...]
    effect_phrases: tuple[str, ...]
    signals_forward: tuple[str, ...]
    signals_backward: tuple[str, ...]


def load_slot_lexicons(path=None) -> SlotLexicons:
    raw = Path(path).read_text("utf-8") if path else _data_text(
        "template_slots.json")
    obj = json.loads(raw)
    return SlotLexicons(
        cause_phrases=tuple(obj["cause_phrases"]),
        effect_phrases=tuple(obj["effect_phrases"]),
        signals_forward=tuple(obj["signals_forward"]),
        signals_backward=tuple(obj["signals_backward"]),
    )


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _is_marker(token: str) -> bool:
    return _MARKER_RE.fullmatch(token) is not None


def _sr_eligible(tokens: Sequence[str], lexicon, stopwords) -> list[int]:
    return [
        i for i, tok in enumerate(tokens)
        if not _is_marker(tok)
        and tok.lower() not in stopwords
        and tok.lower() in lexicon
    ]


def eda_sr(tokens: Sequence[str], alpha_sr: float, lexicon: dict,
           rng: np.random.Generator,
           stopwords: Optional[set[str]] = None) -> list[str]:
    """Replace n distinct eligible tokens with random synonyms.

    n = max(1, round(alpha_sr * eligible count)); tokens without a lexicon
    entry and stopwords are never touched.
    """
    stopwords = stopwords if stopwords is not None else load_stopwords()
    out = list(tokens)
    eligible = _sr_eligible(out, lexicon, stopwords)
    if not eligible:
        return out
    n = min(max(1, _round_half_up(alpha_sr * len(eligible))), len(eligible))
    chosen = rng.choice(len(eligible), size=n, replace=False)
    for pos in sorted(int(c) for c in chosen):
        idx = eligible[pos]
        synonyms = lexicon[out[idx].lower()]
        out[idx] = synonyms[int(rng.integers(len(synonyms)))]
    return out


def eda_ri(tokens: Sequence[str], alpha_ri: float, lexicon: dict,
           rng: np.random.Generator,
           stopwords: Optional[set[str]] = None) -> list[str]:
    """Insert n synonyms of random eligible tokens at random positions."""
    stopwords = stopwords if stopwords is not None else load_stopwords()
    out = list(tokens)
    if not _sr_eligible(out, lexicon, stopwords):
        return out
    n = max(1, _round_half_up(alpha_ri * len(tokens)))
    for _ in range(n):
        eligible = _sr_eligible(out, lexicon, stopwords)
        if not eligible:
            break
        src = out[eligible[int(rng.integers(len(eligible)))]].lower()
        synonyms = lexicon[src]
        word = synonyms[int(rng.integers(len(synonyms)))]
        out.insert(int(rng.integers(len(out) + 1)), word)
    return out


def eda_rs(tokens: Sequence[str], alpha_rs: float,
           rng: np.random.Generator) -> list[str]:
    """Swap two distinct positions, n = max(1, round(alpha_rs * len)) times."""
    out = list(tokens)
    if len(out) < 2:
        return out
    n = max(1, _round_half_up(alpha_rs * len(tokens)))
    for _ in range(n):
        i, j = (int(x) for x in rng.choice(len(out), size=2, replace=False))
        out[i], out[j] = out[j], out[i]
    return out


def eda_rd(tokens: Sequence[str], p_rd: float,
           rng: np.random.Generator) -> list[str]:
    """Delete each token independently with probability p_rd; keep one."""
    out = [tok for tok in tokens if rng.random() >= p_rd]
    if not out and tokens:
        out = [tokens[int(rng.integers(len(tokens)))]]
    return out


def augment_st1(corpus: Corpus, config: EdaConfig,
                lexicon: Optional[dict] = None,
                stopwords: Optional[set[str]] = None) -> Corpus:
    """Classifier-side augmentation: sr, ri, rs applied in that order.

    Emits the original plus n_aug lexical variants per sentence, so the
    default n_aug=4 yields a corpus five times the input size.  Variants
    inherit the causality label; span annotations are not carried over.
    """
    lexicon = lexicon if lexicon is not None else load_synonym_lexicon()
    stopwords = stopwords if stopwords is not None else load_stopwords()
    sentences: list[Sentence] = []
    for si, sentence in enumerate(corpus):
        sentences.append(sentence)
        words = sentence.token_texts()
        for k in range(1, config.n_aug + 1):
            rng = np.random.default_rng((config.seed, si, k))
            toks = eda_sr(words, config.alpha_sr, lexicon, rng, stopwords)
            toks = eda_ri(toks, config.alpha_ri, lexicon, rng, stopwords)
            toks = eda_rs(toks, config.alpha_rs, rng)
            sentences.append(
                plain_sentence(f"{sentence.id}-eda{k}", " ".join(toks),
                               is_causal=sentence.is_causal)
            )
    return Corpus(tuple(sentences), split_name=corpus.split_name)


def tagged_tokens(sentence: Sentence, relation_index: int) -> list[str]:
    """Sentence tokens with the relation's role markers as standalone tokens."""
    rendered = render_annotated(sentence, relation_index)
    parts: list[str] = []
    pos = 0
    for m in _MARKER_RE.finditer(rendered):
        parts.extend(rendered[pos : m.start()].split())
        parts.append(m.group(0))
        pos = m.end()
    parts.extend(rendered[pos:].split())
    return parts


def augment_st2(corpus: Corpus, config: Optional[EdaConfig] = None,
                lexicon: Optional[dict] = None,
                stopwords: Optional[set[str]] = None) -> Corpus:
    """Annotation-aware augmentation: one sr+ri variant per single-relation
    sentence, with role markers protected as atomic tokens.

    Multi-relation sentences pass through untouched.  Every variant is
    re-parsed; samples that no longer satisfy the annotation scheme are
    discarded (counted and logged).
    """
    config = config if config is not None else span_eda_config()
    lexicon = lexicon if lexicon is not None else load_synonym_lexicon()
    stopwords = stopwords if stopwords is not None else load_stopwords()
    added: list[Sentence] = []
    discarded = 0
    for si, sentence in enumerate(corpus):
        if len(sentence.relations) != 1:
            continue
        rng = np.random.default_rng((config.seed, si))
        toks = tagged_tokens(sentence, 0)
        marker_order = [t for t in toks if _is_marker(t)]
        toks = eda_sr(toks, config.alpha_sr, lexicon, rng, stopwords)
        toks = eda_ri(toks, config.alpha_ri, lexicon, rng, stopwords)
        tagged = " ".join(toks)
        try:
            augmented = sentence_from_tagged(
                f"{sentence.id}-aug", [tagged], is_causal=True
            )
        except (MalformedAnnotation, ConsistencyError, OverlapError) as e:
            discarded += 1
            logger.info("discarding augmented %s: %s", sentence.id, e)
            continue
        if [t for t in tagged.split() if _is_marker(t)] != marker_order:
            discarded += 1
            logger.info("discarding augmented %s: marker order changed",
                        sentence.id)
            continue
        added.append(augmented)
    if discarded:
        logger.warning("augment_st2 discarded %d invalid samples", discarded)
    return Corpus(corpus.sentences + tuple(added), split_name=corpus.split_name)


def oversample_multirel(corpus: Corpus, n: int = 400,
                        rng: Optional[np.random.Generator] = None) -> Corpus:
    """Add n multi-relation sentences drawn uniformly with replacement."""
    if n == 0:
        return corpus
    rng = rng if rng is not None else np.random.default_rng(0)
    pool = corpus.multi_relation()
    if not pool:
        raise NoMultiRelationInstances(
            "corpus has no sentence with two or more relations"
        )
    added = []
    for i in range(n):
        source = pool[int(rng.integers(len(pool)))]
        added.append(
            Sentence(
                id=f"{source.id}-dup{i}",
                text=source.text,
                tokens=source.tokens,
                relations=source.relations,
                is_causal=source.is_causal,
            )
        )
    return Corpus(corpus.sentences + tuple(added), split_name=corpus.split_name)


def synth_templates(n: int, slot_lexicons: Optional[SlotLexicons] = None,
                    rng: Optional[np.random.Generator] = None) -> Corpus:
    """Generate n fully annotated single-relation sentences.

    Structures alternate cause-signal-effect and effect-signal-cause;
    spans never overlap and the signal is always present.
    """
    slots = slot_lexicons if slot_lexicons is not None else load_slot_lexicons()
    if n == 0:
        return Corpus((), split_name="synth")
    for name in ("cause_phrases", "effect_phrases", "signals_forward",
                 "signals_backward"):
        if not getattr(slots, name):
            raise EmptyLexicon(f"slot lexicon {name!r} is empty")
    rng = rng if rng is not None else np.random.default_rng(0)
    sentences = []
    for i in range(n):
        cause = slots.cause_phrases[int(rng.integers(len(slots.cause_phrases)))]
        effect = slots.effect_phrases[int(rng.integers(len(slots.effect_phrases)))]
        if i % 2 == 0:
            signal = slots.signals_forward[
                int(rng.integers(len(slots.signals_forward)))]
            tagged = (f"<ARG0>{_capitalize(cause)}</ARG0> <SIG0>{signal}</SIG0> "
                      f"<ARG1>{effect}</ARG1>.")
        else:
            signal = slots.signals_backward[
                int(rng.integers(len(slots.signals_backward)))]
            tagged = (f"<ARG1>{_capitalize(effect)}</ARG1> <SIG0>{signal}</SIG0> "
                      f"<ARG0>{cause}</ARG0>.")
        sentences.append(sentence_from_tagged(f"synth-{i:04d}", [tagged]))
    return Corpus(tuple(sentences), split_name="synth")


def _capitalize(phrase: str) -> str:
    return phrase[0].upper() + phrase[1:] if phrase else phrase
