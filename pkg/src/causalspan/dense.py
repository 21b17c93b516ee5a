"""Reader for the CNCE per-token embedding file format.

Layout (all integers little-endian): magic ``CNCE``, u32 version (= 1),
u32 dimension; then per record a u32 id byte length, the UTF-8 id bytes,
a u32 token count, and token count x dimension float32 values.  No padding.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Sentence
from .errors import DimensionMismatch, FormatError, TruncatedFile

MAGIC = b"CNCE"
VERSION = 1


@dataclass
class DenseStore:
    """Per-token embeddings keyed by sentence id."""

    dim: int
    vectors: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, sentence_id: str) -> bool:
        return sentence_id in self.vectors

    def for_sentence(self, sentence: Sentence) -> np.ndarray:
        rows = self.vectors.get(sentence.id)
        if rows is None:
            raise KeyError(f"no embeddings for sentence {sentence.id!r}")
        if len(rows) != len(sentence.tokens):
            raise DimensionMismatch(
                f"sentence {sentence.id}: {len(sentence.tokens)} tokens but "
                f"store has {len(rows)} vectors"
            )
        return rows


def load_dense_store(path) -> DenseStore:
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise FormatError("file too short for a CNCE header")
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    version, dim = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported CNCE version {version}")
    if dim == 0:
        raise FormatError("CNCE dimension must be positive")
    vectors: dict[str, np.ndarray] = {}
    offset = 12
    while offset < len(data):
        if offset + 4 > len(data):
            raise TruncatedFile("file ends inside a record id length")
        (id_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if offset + id_len > len(data):
            raise TruncatedFile("file ends inside a record id")
        sid = data[offset : offset + id_len].decode("utf-8")
        offset += id_len
        if offset + 4 > len(data):
            raise TruncatedFile(f"record {sid!r} ends before its token count")
        (n_tokens,) = struct.unpack_from("<I", data, offset)
        offset += 4
        n_bytes = n_tokens * dim * 4
        if offset + n_bytes > len(data):
            raise TruncatedFile(f"record {sid!r} ends inside its vectors")
        rows = np.frombuffer(
            data, dtype="<f4", count=n_tokens * dim, offset=offset
        ).reshape(n_tokens, dim)
        offset += n_bytes
        if sid in vectors:
            raise FormatError(f"duplicate sentence id {sid!r} in CNCE file")
        vectors[sid] = rows
    return DenseStore(dim=dim, vectors=vectors)
