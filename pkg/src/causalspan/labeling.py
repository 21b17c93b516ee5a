"""Stacked three-layer BILOU tagging over cause/effect/signal spans.

Each sentence token carries one tag per layer; a layer encodes one
relation's spans in the BILOU scheme (Begin, Inside, Last, Unit, Outside).
The three layer tags are joined with "|" into a single stacked label, e.g.
``L-ARG0|L-ARG1|O``, which is the canonical string format used in model
files and debug dumps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .corpus import (
    CausalRelation,
    Corpus,
    Role,
    Sentence,
    Span,
    canonical_relation_key,
)
from .errors import OverlapError, TooManyRelations

logger = logging.getLogger(__name__)

N_LAYERS = 3
O_TAG = "O"
ROLE_TAGS = ("ARG0", "ARG1", "SIG0")
ROLE_BY_TAG = {r.tag: r for r in Role}

#: The 13 single-layer tags: O plus {B,I,L,U} x {ARG0, ARG1, SIG0}.
LAYER_TAGS = (O_TAG,) + tuple(
    f"{prefix}-{role}" for prefix in "BILU" for role in ROLE_TAGS
)

ALL_O = "|".join([O_TAG] * N_LAYERS)


def split_tag(tag: str) -> tuple[str, str]:
    """Split a layer tag into (marker, role_tag); O yields ("O", "")."""
    if tag == O_TAG:
        return O_TAG, ""
    marker, role = tag.split("-", 1)
    return marker, role


def split_stacked(stacked: str) -> tuple[str, ...]:
    layers = tuple(stacked.split("|"))
    if len(layers) != N_LAYERS:
        raise ValueError(f"stacked tag {stacked!r} does not have {N_LAYERS} layers")
    return layers


def join_layers(layers: Sequence[str]) -> str:
    if len(layers) != N_LAYERS:
        raise ValueError(f"expected {N_LAYERS} layers, got {len(layers)}")
    return "|".join(layers)


def encode_relation(sentence: Sentence, relation: CausalRelation) -> list[str]:
    """BILOU-encode one relation over the sentence's tokens."""
    n = len(sentence.tokens)
    spans = relation.spans()
    for i in range(len(spans)):
        if spans[i].end_tok > n:
            raise ValueError(
                f"span [{spans[i].start_tok},{spans[i].end_tok}) exceeds "
                f"sentence length {n}"
            )
        for j in range(i + 1, len(spans)):
            if spans[i].overlaps(spans[j]):
                raise OverlapError(
                    f"{spans[i].role.tag} and {spans[j].role.tag} overlap "
                    f"within one relation"
                )
    tags = [O_TAG] * n
    for span in spans:
        role = span.role.tag
        if span.end_tok - span.start_tok == 1:
            tags[span.start_tok] = f"U-{role}"
        else:
            tags[span.start_tok] = f"B-{role}"
            for t in range(span.start_tok + 1, span.end_tok - 1):
                tags[t] = f"I-{role}"
            tags[span.end_tok - 1] = f"L-{role}"
    return tags


def canonical_order(relations: Iterable[CausalRelation]) -> list[CausalRelation]:
    """Deterministic relation-to-layer ordering.

    Sorted by cause start, then effect start, then signal start (absent
    signals sort last), then original position.
    """
    indexed = list(enumerate(relations))
    indexed.sort(key=lambda pair: canonical_relation_key(pair[1], pair[0]))
    return [rel for _, rel in indexed]


def stack_layers(sentence: Sentence, relations: Sequence[CausalRelation]) -> list[str]:
    """Stack up to three relation encodings into per-token "X|Y|Z" labels.

    Callers pass relations in canonical order (see truncate_relations);
    missing layers are padded with O.
    """
    if len(relations) > N_LAYERS:
        raise TooManyRelations(
            f"{len(relations)} relations cannot be stacked into {N_LAYERS} layers"
        )
    n = len(sentence.tokens)
    layers = [encode_relation(sentence, rel) for rel in relations]
    while len(layers) < N_LAYERS:
        layers.append([O_TAG] * n)
    return [join_layers([layers[k][t] for k in range(N_LAYERS)]) for t in range(n)]


def truncate_relations(sentence: Sentence) -> Sentence:
    """Canonically order relations and keep at most three."""
    ordered = canonical_order(sentence.relations)
    if len(ordered) > N_LAYERS:
        for rel in ordered[N_LAYERS:]:
            logger.warning(
                "sentence %s: dropping relation with cause at token %d "
                "(more than %d relations)",
                sentence.id, rel.cause.start_tok, N_LAYERS,
            )
        ordered = ordered[:N_LAYERS]
    return replace(sentence, relations=tuple(ordered))


def _layer_spans(tags: Sequence[str]) -> list[Span]:
    """Extract spans from a BILOU-valid layer, in left-to-right order."""
    spans: list[Span] = []
    start = None
    role = None
    for t, tag in enumerate(tags):
        marker, role_tag = split_tag(tag)
        if marker == "B":
            start, role = t, role_tag
        elif marker == "U":
            spans.append(Span(t, t + 1, ROLE_BY_TAG[role_tag]))
        elif marker == "L":
            assert start is not None and role == role_tag
            spans.append(Span(start, t + 1, ROLE_BY_TAG[role_tag]))
            start = role = None
    return spans


def decode_stacked(stacked: Sequence[str]) -> list[CausalRelation]:
    """Split stacked labels into layers and read one relation per layer.

    Each layer must be BILOU-valid (run repair_layer first on raw model
    output).  A layer yields a relation only when it contains at least one
    cause and one effect span; the first span of each role is used and any
    extras are logged.
    """
    relations: list[CausalRelation] = []
    if not stacked:
        return relations
    per_layer = [ [split_stacked(tag)[k] for tag in stacked] for k in range(N_LAYERS) ]
    for k, layer in enumerate(per_layer):
        spans = _layer_spans(layer)
        by_role: dict[Role, list[Span]] = {r: [] for r in Role}
        for span in spans:
            by_role[span.role].append(span)
        for role, found in by_role.items():
            if len(found) > 1:
                logger.info(
                    "layer %d: %d %s spans, keeping the leftmost",
                    k, len(found), role.tag,
                )
        if not by_role[Role.CAUSE] or not by_role[Role.EFFECT]:
            if spans:
                logger.info(
                    "layer %d: spans without a cause/effect pair, no relation", k
                )
            continue
        signal = by_role[Role.SIGNAL][0] if by_role[Role.SIGNAL] else None
        relations.append(
            CausalRelation(
                cause=by_role[Role.CAUSE][0],
                effect=by_role[Role.EFFECT][0],
                signal=signal,
            )
        )
    return relations


def repair_layer(tags: Sequence[str]) -> list[str]:
    """Coerce a layer-tag sequence into BILOU-valid form.

    Orphan I/L open or close a span as needed, unclosed spans are closed at
    the last position, and a role change closes the previous span.  The
    result always satisfies the grammar and the repair is idempotent.
    """
    spans: list[tuple[int, int, str]] = []  # [start, end) with role tag
    open_start = None
    open_role = None

    def close(end: int) -> None:
        nonlocal open_start, open_role
        if open_start is not None:
            spans.append((open_start, end, open_role))
            open_start = open_role = None

    for t, tag in enumerate(tags):
        marker, role = split_tag(tag)
        if marker == "O":
            close(t)
        elif marker == "B":
            close(t)
            open_start, open_role = t, role
        elif marker == "I":
            if open_role != role:
                close(t)
                open_start, open_role = t, role
        elif marker == "L":
            if open_role == role:
                close(t + 1)
            else:
                close(t)
                spans.append((t, t + 1, role))
        elif marker == "U":
            close(t)
            spans.append((t, t + 1, role))
    close(len(tags))

    out = [O_TAG] * len(tags)
    for start, end, role in spans:
        if end - start == 1:
            out[start] = f"U-{role}"
        else:
            out[start] = f"B-{role}"
            for t in range(start + 1, end - 1):
                out[t] = f"I-{role}"
            out[end - 1] = f"L-{role}"
    return out


def is_valid_layer(tags: Sequence[str]) -> bool:
    """Check the per-layer BILOU grammar: O* ((B-x I-x* L-x | U-x) O*)*."""
    open_role = None
    for tag in tags:
        marker, role = split_tag(tag)
        if marker == "O":
            if open_role is not None:
                return False
        elif marker == "B":
            if open_role is not None:
                return False
            open_role = role
        elif marker == "I":
            if open_role != role:
                return False
        elif marker == "L":
            if open_role != role:
                return False
            open_role = None
        elif marker == "U":
            if open_role is not None:
                return False
        else:
            return False
    return open_role is None


@dataclass(frozen=True)
class LabelVocabulary:
    """Ordered stacked-label strings observed in data, plus the all-O label."""

    labels: tuple[str, ...]
    index: dict[str, int]

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "LabelVocabulary":
        ordered = tuple(sorted(set(labels) | {ALL_O}))
        return cls(labels=ordered, index={lab: i for i, lab in enumerate(ordered)})

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self.index


def build_vocabulary(corpora: Sequence[Corpus]) -> LabelVocabulary:
    """Collect every stacked label occurring in the given corpora.

    Only observed combinations enter the vocabulary; sentences whose
    relations cannot be encoded (same-relation overlap) are skipped with a
    warning.
    """
    seen: set[str] = {ALL_O}
    for corpus in corpora:
        for sentence in corpus:
            truncated = truncate_relations(sentence)
            try:
                seen.update(stack_layers(truncated, truncated.relations))
            except OverlapError as e:
                logger.warning("sentence %s not encodable: %s", sentence.id, e)
    return LabelVocabulary.from_labels(seen)
