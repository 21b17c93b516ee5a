"""Data model and I/O for causally annotated sentences.

Sentences carry clean (tag-free) text, character-offset tokens, and up to
four cause/effect/signal relations expressed as token ranges.  Annotated
input uses XML-like role tags (``<ARG0>`` cause, ``<ARG1>`` effect,
``<SIG0>`` signal) embedded in the sentence text.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import re
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

from .errors import ConsistencyError, FormatError, MalformedAnnotation, OverlapError

logger = logging.getLogger(__name__)

MAX_RELATIONS_PER_SENTENCE = 4


class Role(Enum):
    CAUSE = "ARG0"
    EFFECT = "ARG1"
    SIGNAL = "SIG0"

    @property
    def tag(self) -> str:
        return self.value


ROLE_ORDER = {Role.CAUSE: 0, Role.EFFECT: 1, Role.SIGNAL: 2}


@dataclass(frozen=True)
class Token:
    text: str
    start_char: int
    end_char: int

    def __post_init__(self):
        if not (0 <= self.start_char < self.end_char):
            raise ValueError(f"bad token offsets [{self.start_char},{self.end_char})")


@dataclass(frozen=True)
class Span:
    """Contiguous token range [start_tok, end_tok) with a role."""

    start_tok: int
    end_tok: int
    role: Role

    def __post_init__(self):
        if not (0 <= self.start_tok < self.end_tok):
            raise ValueError(f"bad span [{self.start_tok},{self.end_tok})")

    def overlaps(self, other: "Span") -> bool:
        return self.start_tok < other.end_tok and other.start_tok < self.end_tok


@dataclass(frozen=True)
class CausalRelation:
    cause: Span
    effect: Span
    signal: Optional[Span] = None

    def __post_init__(self):
        if self.cause.role is not Role.CAUSE:
            raise ValueError("cause span must have role CAUSE")
        if self.effect.role is not Role.EFFECT:
            raise ValueError("effect span must have role EFFECT")
        if self.signal is not None and self.signal.role is not Role.SIGNAL:
            raise ValueError("signal span must have role SIGNAL")

    def spans(self) -> tuple[Span, ...]:
        if self.signal is None:
            return (self.cause, self.effect)
        return (self.cause, self.effect, self.signal)


@dataclass(frozen=True)
class Sentence:
    id: str
    text: str
    tokens: tuple[Token, ...]
    relations: tuple[CausalRelation, ...] = ()
    is_causal: bool = False

    def __len__(self) -> int:
        return len(self.tokens)

    def token_texts(self) -> list[str]:
        return [t.text for t in self.tokens]

    def span_text(self, span: Span) -> str:
        toks = self.tokens[span.start_tok : span.end_tok]
        return self.text[toks[0].start_char : toks[-1].end_char]


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[Sentence, ...]
    split_name: str = ""

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def by_id(self) -> dict[str, Sentence]:
        return {s.id: s for s in self.sentences}

    def causal(self) -> list[Sentence]:
        return [s for s in self.sentences if s.relations]

    def multi_relation(self) -> list[Sentence]:
        return [s for s in self.sentences if len(s.relations) >= 2]


# ---------------------------------------------------------------------------
# Tokenization
# ---------------------------------------------------------------------------


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> tuple[Token, ...]:
    """Whitespace split with leading/trailing punctuation peeled off.

    Each peeled punctuation character becomes its own single-char token, so
    the token offsets always partition the non-space text exactly.  Interior
    punctuation (hyphens, apostrophes) stays attached to its word.
    """
    tokens: list[Token] = []
    i = 0
    n = len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        # peel leading punctuation
        lo = i
        while lo < j and _is_punct(text[lo]):
            tokens.append(Token(text[lo], lo, lo + 1))
            lo += 1
        # find trailing punctuation run
        hi = j
        while hi > lo and _is_punct(text[hi - 1]):
            hi -= 1
        if lo < hi:
            tokens.append(Token(text[lo:hi], lo, hi))
        for k in range(hi, j):
            tokens.append(Token(text[k], k, k + 1))
        i = j
    return tuple(tokens)


# ---------------------------------------------------------------------------
# Annotated-string parsing and rendering
# ---------------------------------------------------------------------------

_TAG_RE = re.compile(r"<(/?)(ARG0|ARG1|SIG0)>")


@dataclass(frozen=True)
class CharSpans:
    """Character ranges into a clean text, one per annotated role."""

    cause: tuple[int, int]
    effect: tuple[int, int]
    signal: Optional[tuple[int, int]] = None

    def items(self) -> list[tuple[Role, tuple[int, int]]]:
        out = [(Role.CAUSE, self.cause), (Role.EFFECT, self.effect)]
        if self.signal is not None:
            out.append((Role.SIGNAL, self.signal))
        return out


def parse_annotated(tagged: str) -> tuple[str, CharSpans]:
    """Parse one tagged relation string into clean text plus char ranges.

    Raises MalformedAnnotation on duplicated, unbalanced, or missing tags;
    the error carries the offending position in the raw string.
    """
    clean_parts: list[str] = []
    clean_len = 0
    open_at: dict[str, int] = {}
    ranges: dict[str, tuple[int, int]] = {}
    pos = 0
    for m in _TAG_RE.finditer(tagged):
        closing, role_tag = m.group(1) == "/", m.group(2)
        chunk = tagged[pos : m.start()]
        clean_parts.append(chunk)
        clean_len += len(chunk)
        if not closing:
            if role_tag in open_at or role_tag in ranges:
                raise MalformedAnnotation(f"duplicate <{role_tag}>", m.start())
            open_at[role_tag] = clean_len
        else:
            if role_tag not in open_at:
                raise MalformedAnnotation(f"</{role_tag}> without opener", m.start())
            start = open_at.pop(role_tag)
            if clean_len == start:
                raise MalformedAnnotation(f"empty <{role_tag}> span", m.start())
            ranges[role_tag] = (start, clean_len)
        pos = m.end()
    if open_at:
        tag = sorted(open_at)[0]
        raise MalformedAnnotation(f"<{tag}> never closed", len(tagged))
    clean_parts.append(tagged[pos:])
    clean_text = "".join(clean_parts)
    for required in ("ARG0", "ARG1"):
        if required not in ranges:
            raise MalformedAnnotation(f"missing <{required}> span")
    return clean_text, CharSpans(
        cause=ranges["ARG0"], effect=ranges["ARG1"], signal=ranges.get("SIG0")
    )


def strip_tags(tagged: str) -> str:
    return _TAG_RE.sub("", tagged)


def minimal_token_cover(sentence_tokens: Sequence[Token], lo: int, hi: int,
                        role: Role) -> Span:
    """Smallest token range whose characters contain the char range [lo, hi).

    A range that starts or ends strictly inside a token is widened to that
    token's boundary; each widening is logged, never silently dropped.
    """
    first = last = None
    for idx, tok in enumerate(sentence_tokens):
        if tok.end_char > lo and tok.start_char < hi:
            if first is None:
                first = idx
            last = idx
    if first is None:
        raise ConsistencyError(
            f"char range [{lo},{hi}) for {role.tag} covers no token"
        )
    wlo = sentence_tokens[first].start_char
    whi = sentence_tokens[last].end_char
    if wlo < lo or whi > hi:
        logger.warning(
            "widened %s chars [%d,%d) to token boundaries [%d,%d)",
            role.tag, lo, hi, wlo, whi,
        )
    return Span(first, last + 1, role)


def char_spans_to_token_spans(
    sentence_tokens: Sequence[Token], char_ranges: CharSpans
) -> CausalRelation:
    """Map a relation's character ranges onto minimal covering token ranges."""
    cause = minimal_token_cover(sentence_tokens, *char_ranges.cause, Role.CAUSE)
    effect = minimal_token_cover(sentence_tokens, *char_ranges.effect, Role.EFFECT)
    signal = None
    if char_ranges.signal is not None:
        signal = minimal_token_cover(
            sentence_tokens, *char_ranges.signal, Role.SIGNAL
        )
    relation = CausalRelation(cause=cause, effect=effect, signal=signal)
    spans = relation.spans()
    for i in range(len(spans)):
        for j in range(i + 1, len(spans)):
            if spans[i].overlaps(spans[j]):
                raise OverlapError(
                    f"{spans[i].role.tag} and {spans[j].role.tag} share tokens "
                    f"after alignment"
                )
    return relation


def render_annotated(sentence: Sentence, relation_index: int) -> str:
    """Render one relation of a sentence back to tagged-string form.

    Inverse of parse_annotated up to whitespace: re-parsing the output
    yields the same token spans.
    """
    if not (0 <= relation_index < len(sentence.relations)):
        raise IndexError(
            f"relation index {relation_index} out of range "
            f"(sentence has {len(sentence.relations)})"
        )
    rel = sentence.relations[relation_index]
    # closing tags sort before opening tags at the same offset
    inserts: list[tuple[int, int, str]] = []
    for span in rel.spans():
        lo = sentence.tokens[span.start_tok].start_char
        hi = sentence.tokens[span.end_tok - 1].end_char
        inserts.append((lo, 1, f"<{span.role.tag}>"))
        inserts.append((hi, 0, f"</{span.role.tag}>"))
    out = sentence.text
    for pos, _, tag in sorted(inserts, reverse=True):
        out = out[:pos] + tag + out[pos:]
    return out


def sentence_from_tagged(
    sid: str, tagged_strings: Sequence[str], is_causal: bool = True
) -> Sentence:
    """Build a Sentence from one or more tagged relation strings."""
    if not tagged_strings:
        raise ValueError("need at least one tagged string")
    clean = None
    relations = []
    tokens: tuple[Token, ...] = ()
    for tagged in tagged_strings:
        text, ranges = parse_annotated(tagged)
        if clean is None:
            clean = text
            tokens = tokenize(clean)
        elif text != clean:
            raise ConsistencyError("relation strings disagree on clean text")
        relations.append(char_spans_to_token_spans(tokens, ranges))
    if len(relations) > MAX_RELATIONS_PER_SENTENCE:
        raise ConsistencyError(
            f"{len(relations)} relations exceed the maximum of "
            f"{MAX_RELATIONS_PER_SENTENCE}"
        )
    assert clean is not None
    return Sentence(
        id=sid,
        text=clean,
        tokens=tokens,
        relations=tuple(relations),
        is_causal=is_causal,
    )


def plain_sentence(sid: str, text: str, is_causal: bool = False) -> Sentence:
    return Sentence(id=sid, text=text, tokens=tokenize(text), is_causal=is_causal)


# ---------------------------------------------------------------------------
# Corpus loading
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RowError:
    row: int
    sentence_id: str
    message: str


@dataclass
class LoadResult:
    corpus: Corpus
    rejected: list[RowError] = field(default_factory=list)


def _parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return bool(value)
    text = str(value).strip().lower()
    if text in ("true", "1", "yes"):
        return True
    if text in ("false", "0", "no", ""):
        return False
    raise FormatError(f"cannot read boolean from {value!r}")


class _Builder:
    """Accumulates per-row records, merging rows that share a sentence id."""

    def __init__(self, split_name: str):
        self.split_name = split_name
        self.order: list[str] = []
        self.partial: dict[str, dict] = {}
        self.rejected: list[RowError] = []

    def reject(self, row: int, sid: str, message: str) -> None:
        self.rejected.append(RowError(row, sid, message))

    def add(self, row: int, sid: str, text: Optional[str], causal: bool,
            tagged: list[str]) -> None:
        try:
            parsed = []
            clean = text
            for t in tagged:
                c, ranges = parse_annotated(t)
                if clean is None:
                    clean = c
                elif c != clean:
                    raise ConsistencyError(
                        "relation strings disagree on clean text"
                    )
                parsed.append(ranges)
            if clean is None:
                raise FormatError("row has neither text nor relations")
            entry = self.partial.get(sid)
            if entry is None:
                self.partial[sid] = {
                    "row": row,
                    "text": clean,
                    "causal": causal,
                    "ranges": parsed,
                }
                self.order.append(sid)
            else:
                if entry["text"] != clean:
                    raise ConsistencyError(
                        f"rows for id {sid!r} disagree on clean text"
                    )
                if entry["causal"] != causal:
                    raise ConsistencyError(
                        f"rows for id {sid!r} disagree on causal flag"
                    )
                entry["ranges"].extend(parsed)
                if len(entry["ranges"]) > MAX_RELATIONS_PER_SENTENCE:
                    raise ConsistencyError(
                        f"id {sid!r} accumulates more than "
                        f"{MAX_RELATIONS_PER_SENTENCE} relations"
                    )
        except (MalformedAnnotation, ConsistencyError, FormatError, OverlapError) as e:
            self.reject(row, sid, str(e))

    def build(self) -> LoadResult:
        sentences = []
        for sid in self.order:
            entry = self.partial[sid]
            try:
                if entry["causal"] != bool(entry["ranges"]):
                    raise ConsistencyError(
                        f"id {sid!r}: causal flag does not match relation count"
                    )
                tokens = tokenize(entry["text"])
                relations = tuple(
                    char_spans_to_token_spans(tokens, r) for r in entry["ranges"]
                )
                sentences.append(
                    Sentence(
                        id=sid,
                        text=entry["text"],
                        tokens=tokens,
                        relations=relations,
                        is_causal=entry["causal"],
                    )
                )
            except (ConsistencyError, OverlapError) as e:
                self.rejected.append(RowError(entry["row"], sid, str(e)))
        self.rejected.sort(key=lambda r: r.row)
        return LoadResult(Corpus(tuple(sentences), self.split_name), self.rejected)


def load_corpus(path, fmt: str = "jsonl", split_name: str = "") -> LoadResult:
    """Load a corpus file; malformed rows are rejected individually.

    JSONL records: {"id", "causal", "relations": [tagged, ...]} with an
    optional "text" key (required when relations is empty).  CSV columns:
    id, text, causal, rel1..rel4 with a header row.
    """
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    if fmt == "jsonl":
        return _load_jsonl(raw, split_name or path.stem)
    if fmt == "csv":
        return _load_csv(raw, split_name or path.stem)
    raise FormatError(f"unknown corpus format {fmt!r}")


def _load_jsonl(raw: str, split_name: str) -> LoadResult:
    builder = _Builder(split_name)
    for row, line in enumerate(raw.splitlines()):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            builder.reject(row, "", f"invalid JSON: {e}")
            continue
        if not isinstance(obj, dict) or "id" not in obj:
            builder.reject(row, "", "record is not an object with an 'id'")
            continue
        sid = str(obj["id"])
        relations = obj.get("relations", [])
        if not isinstance(relations, list) or not all(
            isinstance(r, str) for r in relations
        ):
            builder.reject(row, sid, "'relations' must be a list of strings")
            continue
        try:
            causal = _parse_bool(obj.get("causal", bool(relations)))
        except FormatError as e:
            builder.reject(row, sid, str(e))
            continue
        text = obj.get("text")
        builder.add(row, sid, text, causal, relations)
    return builder.build()


_CSV_COLUMNS = ["id", "text", "causal", "rel1", "rel2", "rel3", "rel4"]


def _load_csv(raw: str, split_name: str) -> LoadResult:
    builder = _Builder(split_name)
    if not raw.strip():
        return builder.build()
    reader = csv.reader(io.StringIO(raw))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != _CSV_COLUMNS:
        raise FormatError(
            f"CSV header must be {','.join(_CSV_COLUMNS)}, got {header}"
        )
    for row, record in enumerate(reader, start=1):
        if not record or all(not c.strip() for c in record):
            continue
        if len(record) != len(_CSV_COLUMNS):
            builder.reject(row, "", f"expected {len(_CSV_COLUMNS)} columns")
            continue
        sid, text, causal_raw = record[0], record[1], record[2]
        tagged = [c for c in record[3:7] if c.strip()]
        try:
            causal = _parse_bool(causal_raw)
        except FormatError as e:
            builder.reject(row, sid, str(e))
            continue
        builder.add(row, sid, text or None, causal, tagged)
    return builder.build()


def save_corpus(corpus: Corpus, path, fmt: str = "jsonl") -> None:
    path = Path(path)
    if fmt == "jsonl":
        with path.open("w", encoding="utf-8") as fh:
            for s in corpus:
                rec = {
                    "id": s.id,
                    "text": s.text,
                    "causal": s.is_causal,
                    "relations": [
                        render_annotated(s, i) for i in range(len(s.relations))
                    ],
                }
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    elif fmt == "csv":
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_CSV_COLUMNS)
            for s in corpus:
                rels = [render_annotated(s, i) for i in range(len(s.relations))]
                rels += [""] * (4 - len(rels))
                writer.writerow([s.id, s.text, str(s.is_causal).lower()] + rels)
    else:
        raise FormatError(f"unknown corpus format {fmt!r}")


def load_predictions(path) -> Corpus:
    """Load a prediction file: {"id", "relations": [tagged, ...]} per line.

    Unlike gold loading, records without text or relations are allowed and
    malformed relation strings raise immediately (a prediction file is
    produced by this toolkit, so malformation is a bug, not data noise).
    """
    path = Path(path)
    sentences = []
    for row, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        obj = json.loads(line)
        sid = str(obj["id"])
        tagged = obj.get("relations", [])
        if tagged:
            sentences.append(sentence_from_tagged(sid, tagged))
        else:
            text = obj.get("text", "")
            sentences.append(
                Sentence(id=sid, text=text, tokens=tokenize(text), is_causal=False)
            )
    return Corpus(tuple(sentences), split_name=path.stem)


def canonical_relation_key(rel: CausalRelation, original_index: int):
    signal_start = rel.signal.start_tok if rel.signal is not None else float("inf")
    return (rel.cause.start_tok, rel.effect.start_tok, signal_start, original_index)


def merge_corpora(*corpora: Corpus, split_name: str = "") -> Corpus:
    sentences: list[Sentence] = []
    seen: set[str] = set()
    for corpus in corpora:
        for s in corpus:
            if s.id in seen:
                raise ConsistencyError(f"duplicate sentence id {s.id!r} in merge")
            seen.add(s.id)
            sentences.append(s)
    return Corpus(tuple(sentences), split_name)
