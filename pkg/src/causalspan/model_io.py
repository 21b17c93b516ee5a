"""Versioned JSON model container shared by the tagger and the classifier.

Arrays are stored as base64 of their little-endian float64 bytes, so a
deterministic training run writes byte-identical files.  Loading a file
written by a different format version fails with VersionError.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .classifier import BinaryModel, ClassWeights
from .crf import CrfModel, CrfParams, TrainConfig
from .errors import FormatError, VersionError
from .features import FeatureMap
from .labeling import LabelVocabulary

CONTAINER = "causalspan-model"
FORMAT_VERSION = 1


def _pack(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def _unpack(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(obj["shape"]).copy()


def _dump(payload: dict, path) -> None:
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, separators=(",", ":")),
        encoding="utf-8",
    )


def _read(path, expected_kind: str) -> dict:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"not a model file: {e}") from None
    if payload.get("container") != CONTAINER:
        raise FormatError("not a causalspan model file")
    if payload.get("format_version") != FORMAT_VERSION:
        raise VersionError(
            f"model format version {payload.get('format_version')} is not "
            f"supported (expected {FORMAT_VERSION})"
        )
    if payload.get("kind") != expected_kind:
        raise FormatError(
            f"model kind {payload.get('kind')!r}, expected {expected_kind!r}"
        )
    return payload


def save_crf_model(model: CrfModel, path) -> None:
    payload = {
        "container": CONTAINER,
        "format_version": FORMAT_VERSION,
        "kind": "crf",
        "labels": list(model.vocab.labels),
        "feature_templates": model.feature_map.templates(),
        "dense_dim": model.dense_dim,
        "config": vars(model.config),
        "params": {
            name: _pack(getattr(model.params, name))
            for name in CrfParams.BLOCKS
        },
    }
    _dump(payload, path)


def load_crf_model(path) -> CrfModel:
    payload = _read(path, "crf")
    vocab = LabelVocabulary.from_labels(payload["labels"])
    if list(vocab.labels) != payload["labels"]:
        raise FormatError("label list in model file is not canonical")
    params = CrfParams(
        **{name: _unpack(payload["params"][name]) for name in CrfParams.BLOCKS}
    )
    return CrfModel(
        vocab=vocab,
        feature_map=FeatureMap.from_templates(payload["feature_templates"]),
        params=params,
        config=TrainConfig(**payload["config"]),
        dense_dim=payload["dense_dim"],
    )


def save_binary_model(model: BinaryModel, path) -> None:
    payload = {
        "container": CONTAINER,
        "format_version": FORMAT_VERSION,
        "kind": "binary",
        "feature_templates": model.feature_map.templates(),
        "weights": _pack(model.weights),
        "bias": model.bias,
        "class_weights": vars(model.class_weights),
    }
    _dump(payload, path)


def load_binary_model(path) -> BinaryModel:
    payload = _read(path, "binary")
    return BinaryModel(
        feature_map=FeatureMap.from_templates(payload["feature_templates"]),
        weights=_unpack(payload["weights"]),
        bias=float(payload["bias"]),
        class_weights=ClassWeights(**payload["class_weights"]),
    )
